"""Command-line front end: sample graphs, predict, recover positions, run sweeps.

Every subcommand reads one JSON config (``--config``), applies command-line
overrides, writes its results as CSV files into ``--out`` and echoes the
resolved config to ``config.echo.json`` so the run can be reproduced.

Exit codes: 0 success, 2 configuration error, 3 disconnected graph,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .estimators import AveragingKernel, enw_predict, gnw_predict, nw_predict
from .experiments import (
    ESTIMATORS,
    SweepConfig,
    derive_seed,
    run_bias_variance_sweep,
    run_perturbed_nw_experiment,
    run_recovery_error_curve,
)
from .model import (
    DensitySpec,
    Graph,
    LabelVector,
    graph_from_edges,
    sample_graph,
    sample_labels,
    sample_positions,
)
from .recovery import (
    DisconnectedGraphError,
    align_1d,
    distance_error_delta,
    distances_from_positions,
    position_error_D,
    recover,
)

log = logging.getLogger("nodereg")

DEFAULT_SEED = 20231105
EXIT_OK, EXIT_CONFIG, EXIT_DISCONNECTED, EXIT_IO = 0, 2, 3, 4

_SWEEP_FIELDS = {f.name for f in fields(SweepConfig)}
_RUN_FIELDS = {
    "out",
    "plot",
    "verbosity",
    "estimator",
    "algorithm",
    "input",
    "oracle_distances",
    "hg_grid",
    "taus",
    "multiples",
}
_DENSITY_FIELDS = {f.name for f in fields(DensitySpec)}


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "NA" if not np.isfinite(v) else format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    return rows[0], rows[1:]


def _grid_from(spec, name: str):
    """A grid is either a list of values or ``{"start", "stop", "num", "log"}``."""
    if spec is None:
        return None
    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "num", "log"}
        if unknown:
            raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
        try:
            lo, hi, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name} needs start, stop and num") from exc
        if spec.get("log", True):
            if lo <= 0:
                raise ConfigError(f"log-spaced {name} needs a positive start")
            return np.geomspace(lo, hi, num)
        return np.linspace(lo, hi, num)
    try:
        return np.asarray(spec, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def load_config(path, overrides: dict):
    """Parse and validate a run configuration.

    Returns ``(sweep_config, run_options, resolved_document)``.
    """
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(doc) - _SWEEP_FIELDS - _RUN_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = doc.get("seed", DEFAULT_SEED)
    if seed == "entropy":
        seed = int(np.random.SeedSequence().entropy % (1 << 64))
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an unsigned integer or 'entropy'") from exc
    if not 0 <= seed < 1 << 64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    doc["seed"] = seed
    kw = {k: doc[k] for k in _SWEEP_FIELDS if k in doc}
    if "density" in kw:
        dens = kw["density"]
        if not isinstance(dens, dict) or set(dens) - _DENSITY_FIELDS:
            raise ConfigError(f"density must be an object with keys from {sorted(_DENSITY_FIELDS)}")
        try:
            kw["density"] = DensitySpec(**dens)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid density: {exc}") from exc
    if "d" not in kw:
        kw["d"] = kw["density"].dim if "density" in kw else 1
    try:
        cfg = SweepConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    opts = {k: doc.get(k) for k in _RUN_FIELDS}
    opts["out"] = Path(opts["out"] or ".")
    opts["plot"] = bool(opts["plot"])
    resolved = cfg.to_dict()
    for k in _RUN_FIELDS:
        if k in doc:
            resolved[k] = doc[k]
    resolved["out"] = str(opts["out"])
    return cfg, opts, resolved


def _prepare_out(opts, resolved) -> Path:
    out = opts["out"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.echo.json", "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _sample(cfg: SweepConfig):
    """Sample ``cfg.n`` nodes; the last one is the regression node."""
    sample = sample_positions(cfg.density, cfg.n, derive_seed(cfg.seed, 0))
    graph = sample_graph(sample, cfg.link(), derive_seed(cfg.seed, 1))
    labels = sample_labels(sample, cfg.regression(), cfg.noise(), derive_seed(cfg.seed, 2))
    return sample.positions, graph, labels


def _load_sample(input_dir):
    d = Path(input_dir)
    _, prow = read_csv(d / "positions.csv")
    pos = np.array([[float(v) for v in r[1:]] for r in prow]).T
    _, erow = read_csv(d / "edges.csv")
    graph = graph_from_edges(pos.shape[1], [(int(i), int(j)) for i, j in erow])
    _, lrow = read_csv(d / "labels.csv")
    labels = LabelVector([float(r[1]) for r in lrow])
    if len(labels) != pos.shape[1] - 1:
        raise ConfigError("labels.csv must cover every node except the last")
    return pos, graph, labels


def _get_sample(cfg, opts):
    if opts.get("input"):
        return _load_sample(opts["input"])
    if cfg.n < 2:
        raise ConfigError("sampling needs n >= 2")
    return _sample(cfg)


def cmd_sample(cfg, opts, resolved) -> int:
    out = _prepare_out(opts, resolved)
    pos, graph, labels = _get_sample(cfg, opts)
    d = pos.shape[0]
    write_csv(out / "positions.csv", ["node_id"] + [f"x_{k + 1}" for k in range(d)], [[i, *pos[:, i]] for i in range(pos.shape[1])])
    write_csv(out / "edges.csv", ["i", "j"], graph.edges().tolist())
    write_csv(out / "labels.csv", ["node_id", "y"], [[i, v] for i, v in enumerate(labels.values)])
    print(f"seed {cfg.seed}: {pos.shape[1]} nodes, {len(graph.edges())} edges -> {out}")
    return EXIT_OK


def cmd_predict(cfg, opts, resolved) -> int:
    tag = opts.get("estimator") or "gnw"
    if tag not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {tag!r}; expected one of {ESTIMATORS}")
    out = _prepare_out(opts, resolved)
    pos, graph, labels = _get_sample(cfg, opts)
    phi = AveragingKernel(cfg.phi)
    if tag == "gnw":
        pred = gnw_predict(graph, labels)
    elif tag == "nw" or opts.get("oracle_distances"):
        pred = nw_predict(distances_from_positions(pos, -1), labels, phi, cfg.bandwidth)
    else:
        est = recover(graph, tag[4:], cfg.spectral(), pos.shape[0])
        pred = enw_predict(distances_from_positions(est.positions, -1), labels, phi, cfg.bandwidth)
    write_csv(
        out / "prediction.csv",
        ["estimator", "value", "denominator_positive", "seed"],
        [[tag, pred.value, pred.denominator_positive, cfg.seed]],
    )
    print(f"{tag}: {_fmt(pred.value)} (denominator positive: {_fmt(pred.denominator_positive)})")
    return EXIT_OK


def cmd_recover(cfg, opts, resolved) -> int:
    alg = opts.get("algorithm") or "sp"
    if alg not in ("sp", "spectral"):
        raise ConfigError(f"unknown algorithm {alg!r}")
    out = _prepare_out(opts, resolved)
    pos, graph, _ = _get_sample(cfg, opts)
    d = pos.shape[0]
    est = recover(graph, alg, cfg.spectral(), d)
    # alignment is only defined in one dimension; higher dims report raw coordinates
    aligned = align_1d(est, pos).positions if d == 1 else est.positions
    err = np.sqrt(np.sum((aligned - pos) ** 2, axis=0))
    header = ["node_id"] + [f"xhat_{k + 1}" for k in range(d)] + [f"aligned_{k + 1}" for k in range(d)] + ["error"]
    rows = [[i, *est.positions[:, i], *aligned[:, i], err[i]] for i in range(pos.shape[1])]
    write_csv(out / "recovered_positions.csv", header, rows)
    delta = distance_error_delta(distances_from_positions(aligned, -1), distances_from_positions(pos, -1))
    D = position_error_D(aligned, pos)
    write_csv(
        out / "recovery_error.csv",
        ["algorithm", "delta", "D", "q", "rho0", "seed"],
        [[alg, delta, D, cfg.q, cfg.rho0, cfg.seed]],
    )
    print(f"{alg}: Delta={_fmt(delta)} D={_fmt(D)}")
    return EXIT_OK


def _curve_rows(curves, seed):
    for c in curves:
        for k, g in enumerate(c.grid):
            yield [g, c.estimator, c.mean[k], c.stderr[k], c.num_replicas[k], c.num_retries[k], seed]


def cmd_sweep(cfg, opts, resolved) -> int:
    out = _prepare_out(opts, resolved)
    res = run_bias_variance_sweep(cfg)
    header = ["grid_value", "estimator", "mse_mean", "mse_stderr", "num_replicas", "num_retries", "seed"]
    write_csv(out / "curves.csv", header, _curve_rows(res.curves, cfg.seed))
    write_csv(out / "summary.csv", ["key", "value"], [["tau_cv", res.tau_cv], ["seed", cfg.seed]])
    if opts["plot"]:
        from .plotting import plot_curves

        xlabel = "length-scale h_g" if cfg.grid_kind == "lengthscale-sweep" else "bandwidth tau"
        plot_curves(res.curves, out / "curves.svg", xlabel=xlabel, title=f"m={cfg.m:g}, sigma^2={cfg.sigma2:g}", vline=res.tau_cv)
    print(f"tau_cv={_fmt(res.tau_cv)}; wrote {out / 'curves.csv'}")
    return EXIT_OK


def cmd_perturbed_nw(cfg, opts, resolved) -> int:
    out = _prepare_out(opts, resolved)
    taus = _grid_from(opts.get("taus"), "taus")
    multiples = opts.get("multiples") or (0, 1, 2)
    res = run_perturbed_nw_experiment(cfg.n, cfg.m, cfg.sigma2, multiples, taus, cfg.num_mc, cfg.seed, cfg.phi)
    header = ["tau", "curve", "delta", "mse_mean", "mse_stderr", "num_replicas", "seed"]
    rows = []
    for c, delta in zip(res.curves, res.deltas):
        for k, t in enumerate(c.grid):
            rows.append([t, c.estimator, delta, c.mean[k], c.stderr[k], c.num_replicas[k], cfg.seed])
    write_csv(out / "perturbed_nw.csv", header, rows)
    if opts["plot"]:
        from .plotting import plot_curves

        plot_curves(res.curves, out / "perturbed_nw.svg", xlabel="bandwidth tau", vline=res.tau_star)
    print(f"tau_star={_fmt(res.tau_star)}; wrote {out / 'perturbed_nw.csv'}")
    return EXIT_OK


def cmd_recovery_curve(cfg, opts, resolved) -> int:
    grid = _grid_from(opts.get("hg_grid"), "hg_grid")
    if grid is None:
        grid = np.geomspace(0.01, 1.0, cfg.num_pts)
    out = _prepare_out(opts, resolved)
    curves = run_recovery_error_curve(cfg, grid)
    header = ["grid_value", "algorithm", "D_mean", "D_stderr", "num_replicas", "num_retries", "seed"]
    write_csv(out / "recovery_curve.csv", header, _curve_rows(curves, cfg.seed))
    if opts["plot"]:
        from .plotting import plot_curves

        plot_curves(curves, out / "recovery_curve.svg", xlabel="length-scale h_g", ylabel="D")
    print(f"wrote {out / 'recovery_curve.csv'}")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "predict": cmd_predict,
    "recover": cmd_recover,
    "sweep": cmd_sweep,
    "perturbed-nw": cmd_perturbed_nw,
    "recovery-curve": cmd_recovery_curve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", help="master seed (unsigned integer) or 'entropy'")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--plot", action="store_true", default=None, help="also write SVG plots")
    common.add_argument("--q", type=float, help="threshold of the spectral recovery")
    common.add_argument("--rho0", type=float, help="bulk margin of the spectral recovery")
    common.add_argument("--linear-grid", action="store_true", help="linear instead of log-spaced sweep grid")
    common.add_argument("--input", help="directory holding positions.csv, edges.csv and labels.csv")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="nodereg", description="Node regression on latent position graphs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="sample positions, edges and labels")
    p = sub.add_parser("predict", parents=[common], help="predict the label of the last node")
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--oracle-distances", action="store_true", default=None, help="feed true distances to ENW (debugging)")
    p = sub.add_parser("recover", parents=[common], help="recover latent positions from the graph")
    p.add_argument("--algorithm", choices=("sp", "spectral"))
    sub.add_parser("sweep", parents=[common], help="GNW/ENW risk against the length-scale")
    sub.add_parser("perturbed-nw", parents=[common], help="NW risk under jittered design points")
    sub.add_parser("recovery-curve", parents=[common], help="recovery error against the length-scale")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "plot": args.plot,
        "q": args.q,
        "rho0": args.rho0,
        "input": args.input,
        "estimator": getattr(args, "estimator", None),
        "algorithm": getattr(args, "algorithm", None),
        "oracle_distances": getattr(args, "oracle_distances", None),
    }
    if args.linear_grid:
        overrides["log_grid"] = False
    try:
        cfg, opts, resolved = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, opts, resolved)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DisconnectedGraphError as exc:
        print(f"disconnected graph: {exc}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
