import math

import numpy as np
import pytest

from nodereg.estimators import AveragingKernel
from nodereg.experiments import (
    SweepConfig,
    derive_seed,
    failure_probability_estimate,
    mc_global_risk,
    mc_pointwise_risk,
    run_bias_variance_sweep,
    run_perturbed_nw_experiment,
    run_recovery_error_curve,
    synthetic_enw_pointwise_risk,
)
from nodereg.model import DensitySpec, LinkKernel, NoiseSpec, RegressionFunction, sample_positions
from nodereg.oracle import (
    BoundParams,
    bias_proxy,
    enw_risk_bound,
    risk_bound_1,
    variance_proxy_mc,
    window_count,
)

U01 = DensitySpec.uniform()


def test_config_validation():
    for kw in (dict(num_mc=0), dict(num_pts=1), dict(max_retries=-1), dict(grid_kind="x"), dict(q=1.5), dict(phi="sinc")):
        with pytest.raises(ValueError):
            SweepConfig(**kw)


def test_derive_seed_independent_streams():
    a = np.random.default_rng(derive_seed(1, 0, 2)).random(4)
    b = np.random.default_rng(derive_seed(1, 0, 3)).random(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, np.random.default_rng(derive_seed(1, 0, 2)).random(4))


# --- pointwise and global risk ----------------------------------------------


@pytest.mark.parametrize("tag", ["gnw", "nw", "enw-sp"])
def test_zero_function_zero_risk(tag):
    cfg = SweepConfig(n=40, m=0.0, sigma2=0.0, h_g=0.3, link_profile="box", seed=2)
    mean, se = mc_pointwise_risk(cfg, tag, 0.4, 5)
    assert mean == 0.0 and se == 0.0
    assert mc_global_risk(cfg, tag, 5)[0] == 0.0


def test_unknown_tag():
    with pytest.raises(ValueError):
        mc_pointwise_risk(SweepConfig(n=10), "knn", 0.5, 5)
    with pytest.raises(ValueError):
        mc_pointwise_risk(SweepConfig(n=10), "gnw", 0.5, 1)


def test_complete_graph_risk_is_sample_mean_risk():
    n, sigma2, x = 30, 0.8, 0.35
    cfg = SweepConfig(n=n, m=1.0, sigma2=sigma2, h_g=2.0, link_profile="box", seed=4)
    pos = sample_positions(U01, n, 9).positions
    mean, se = mc_pointwise_risk(cfg, "gnw", x, 4000, positions=pos)
    f = RegressionFunction.sine(1)
    exact = (f(pos).mean() - f(np.array([x]))[0]) ** 2 + sigma2 / n
    assert abs(mean - exact) <= 3 * se


def test_pointwise_risk_below_proxy_decomposition():
    n, x = 60, 0.3
    cfg = SweepConfig(n=n, m=1.0, sigma2=0.5, h_g=0.1, link_profile="box", seed=5)
    link = cfg.link()
    f = cfg.regression()
    mean, se = mc_pointwise_risk(cfg, "gnw", x, 3000)
    v, _ = variance_proxy_mc(f, x, link, U01, cfg.noise(), n, 20_000, 6)
    b = bias_proxy(f, x, link, U01)
    assert mean <= 2 * (v + b * b) + 3 * se


def test_global_is_average_of_pointwise():
    cfg = SweepConfig(n=40, m=1.0, sigma2=0.5, h_g=0.1, link_profile="box", seed=6)
    g_mean, g_se = mc_global_risk(cfg, "gnw", 4000)
    xs = np.random.default_rng(3).random(40)
    vals, ses = [], []
    for k, x in enumerate(xs):
        m, s = mc_pointwise_risk(cfg, "gnw", x, 200, seed=100 + k)
        vals.append(m)
    nested = np.mean(vals)
    nested_se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(g_mean - nested) <= 3 * math.sqrt(g_se**2 + nested_se**2)


def test_global_gnw_risk_below_bound():
    # box link on [0, 1]: c0 = 1/2, p0 = 1, r0 = 1
    n = 200
    cfg = SweepConfig(n=n, m=1.0, sigma2=1.0, h_g=0.1, link_profile="box", seed=7)
    f = cfg.regression()
    params = BoundParams(L=f.L, a=1, B=1, sigma2=1.0, M1=1, M2=1, p0=1, c0=0.5, d=1, n=n, alpha=1.0, r0=1.0)
    mean, se = mc_global_risk(cfg, "gnw", 2000)
    assert mean <= risk_bound_1(0.1, params) + 3 * se


def test_enw_risk_finite_with_retries():
    cfg = SweepConfig(n=80, m=1.0, sigma2=0.5, h_g=0.15, seed=8)
    mean, se = mc_global_risk(cfg, "enw-sp", 10)
    assert np.isfinite(mean) and mean >= 0


# --- perturbed NW -----------------------------------------------------------


def test_perturbed_zero_noise_tiny_tau():
    res = run_perturbed_nw_experiment(n=100, m=2, sigma2=0.0, multiples=(0,), taus=[1e-9, 1e-8], num_mc=2, seed=1)
    assert np.all(res.curves[0].mean == 0.0)


def test_perturbed_curves_shape_and_order():
    taus = np.geomspace(0.005, 0.5, 25)
    res = run_perturbed_nw_experiment(n=300, m=2, sigma2=1.5, taus=taus, num_mc=10, seed=3)
    base, one, two = res.curves
    # unimodal within noise: left and right ends both above the minimum
    k = int(np.argmin(base.mean))
    assert 0 < k < len(taus) - 1
    assert base.mean[0] > base.mean[k] + 3 * base.stderr[k]
    assert base.mean[-1] > base.mean[k] + 3 * base.stderr[k]
    mins = [c.mean.min() for c in (base, one, two)]
    ses = [c.stderr[np.argmin(c.mean)] for c in (base, one, two)]
    assert mins[0] <= mins[1] + 3 * math.hypot(ses[0], ses[1])
    assert mins[1] <= mins[2] + 3 * math.hypot(ses[1], ses[2])
    assert res.tau_star == pytest.approx(taus[k])
    assert list(res.deltas) == pytest.approx([0, res.tau_star, 2 * res.tau_star])


# --- recovery curve ---------------------------------------------------------


def test_recovery_curve_complete_graph_plateau():
    cfg = SweepConfig(n=40, link_profile="box", num_mc=3, seed=2, fix_positions=True)
    sp, spec = run_recovery_error_curve(cfg, [2.0, 3.0])
    # h_g beyond the diameter: every graph is complete, so errors coincide
    assert sp.mean[0] == sp.mean[1]
    assert np.all(np.isfinite(sp.mean))


def test_recovery_curve_upper_decade_ordering():
    cfg = SweepConfig(n=500, num_mc=6, seed=3)
    sp, spec = run_recovery_error_curve(cfg, [0.5, 1.0])
    assert np.all(spec.mean < sp.mean)
    for c in (sp, spec):
        done = c.num_replicas > 0
        assert np.all(c.mean[done] >= 0) and np.all(np.isfinite(c.mean[done]))


def test_recovery_curve_marks_missing_points():
    cfg = SweepConfig(n=60, num_mc=2, max_retries=1, seed=2)
    sp, spec = run_recovery_error_curve(cfg, [1e-4])
    assert sp.num_replicas[0] == 0 and np.isnan(sp.mean[0])
    assert sp.num_retries[0] == 2


# --- bias-variance sweep ----------------------------------------------------


def test_sweep_smoke_and_determinism():
    cfg = SweepConfig(n=120, num_mc=3, num_pts=3, seed=11)
    a = run_bias_variance_sweep(cfg)
    b = run_bias_variance_sweep(cfg)
    assert [c.estimator for c in a.curves] == ["gnw", "enw-sp", "enw-spectral"]
    for ca, cb in zip(a.curves, b.curves):
        assert np.array_equal(ca.mean, cb.mean, equal_nan=True)
        assert np.array_equal(ca.grid, cb.grid)
        assert ca.grid[0] == pytest.approx(0.1 * a.tau_cv)
        assert ca.grid[-1] == pytest.approx(10 * a.tau_cv)
        ok = np.isfinite(ca.mean)
        assert np.all(ca.mean[ok] >= 0)
        assert np.all(ca.num_replicas <= cfg.num_mc)
    assert np.all(a.curves[0].num_replicas == cfg.num_mc)


def test_sweep_linear_grid_and_bandwidth_kind():
    cfg = SweepConfig(n=80, num_mc=2, num_pts=3, seed=1, log_grid=False, grid_kind="bandwidth-sweep", h_g=0.3)
    res = run_bias_variance_sweep(cfg)
    g = res.curves[0].grid
    assert np.allclose(np.diff(g), np.diff(g)[0])
    assert [c.estimator for c in res.curves] == ["nw", "enw-sp", "enw-spectral"]


def test_sweep_fixed_positions():
    cfg = SweepConfig(n=80, num_mc=2, num_pts=2, seed=1, fix_positions=True, sigma2=0.0)
    res = run_bias_variance_sweep(cfg)
    assert np.all(np.isfinite(res.curves[0].mean))


# --- failure probability ----------------------------------------------------


def test_failure_probability_limits_and_monotonicity():
    cfg = SweepConfig(n=100, h_g=0.2, seed=4)
    taus = np.array([0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 100.0])
    prob, se = failure_probability_estimate(cfg, "sp", taus, 20)
    assert prob[0] == 1.0
    assert prob[-1] == 0.0
    assert np.all(np.diff(prob) <= 0)
    assert np.all(se >= 0)
    p1, _ = failure_probability_estimate(cfg, "sp", 0.05, 20)
    assert p1 == prob[2]


def test_failure_probability_counts_disconnected():
    cfg = SweepConfig(n=50, h_g=1e-4, seed=4)
    assert failure_probability_estimate(cfg, "sp", 100.0, 3)[0] == 1.0
    with pytest.raises(ValueError):
        failure_probability_estimate(cfg, "lar", 1.0, 3)


# --- synthetic ENW risk -----------------------------------------------------


def test_synthetic_enw_risk_below_bound():
    n = 400
    pos = np.array(sample_positions(U01, n + 1, 3).positions)
    pos[0, -1] = 0.5
    f = RegressionFunction.sine(1)
    phi = AveragingKernel("rectangular")
    noise = NoiseSpec("gaussian", 1.0)
    for tau in (0.02, 0.1, 0.3):
        mean, se = synthetic_enw_pointwise_risk(pos, f, noise, phi, tau, 2000, 5)
        bound = enw_risk_bound(tau, f.L, f.a, phi.M1, phi.M2, 1.0, window_count(pos, -1, tau, phi.M1))
        assert mean <= bound + 3 * se
