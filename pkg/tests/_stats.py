"""Helpers for 3-sigma Monte Carlo checks with a single fresh-seed rerun."""
import numpy as np


def within(value, target, stderr, k=3.0):
    return abs(value - target) <= k * stderr


def retry_once(check, seed):
    """Run ``check(seed)``; on failure rerun once with a derived seed.

    ``check`` returns ``(ok, info)``.  The final ``(ok, info)`` is returned.
    """
    ok, info = check(seed)
    if ok:
        return ok, info
    fresh = int(np.random.SeedSequence(seed, spawn_key=(99,)).generate_state(1)[0])
    return check(fresh)
