"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 benchmark grid
finished with some failed cells.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, dynsys, koopman, models, signals
from .artifacts import HeatmapArtifact, heatmap_svg, table_csv, value_range, write_atomic
from .config import REGIMES, ConfigError, RunConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2
SEED_ENV = "COMPACTFORMER_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _base_config(args) -> RunConfig:
    """Config file (or defaults), then $COMPACTFORMER_SEED, then ``--seed``."""
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV) is not None:
        seed = default_seed()
    return cfg.with_overrides(seed=seed)


# signals ----------------------------------------------------------------------


def cmd_signals_gen(args) -> int:
    ids = signals.SIGNAL_IDS if args.id == "all" else (args.id,)
    for sid in ids:
        if sid not in signals.SIGNALS:
            raise UsageError(f"unknown signal id {sid!r}; choose from {', '.join(signals.SIGNAL_IDS)} or 'all'")
    seed = args.seed if args.seed is not None else default_seed()
    out = _out_dir(args.out)
    for sid in ids:
        s = signals.generate(sid, args.length)
        if args.noisy:
            s = signals.add_noise(s, signals.NoiseConfig(seed=seed))
        if args.normalize:
            s = signals.normalize(s)
        rows = [(t, float(v)) for t, v in enumerate(s.values)]
        suffix = "_noisy" if args.noisy else ""
        write_atomic(out / f"{sid}{suffix}.csv", table_csv(("t", "value"), rows))
    print(f"wrote {len(ids)} signal file(s) to {out}")
    return EXIT_OK


# bench ------------------------------------------------------------------------


def _grid_overrides(cfg: RunConfig, args) -> RunConfig:
    regimes = None
    if args.regime is not None:
        regimes = REGIMES if args.regime == "both" else (args.regime,)
    return cfg.with_overrides(
        "grid",
        families=(models.FAMILIES if "all" in args.families else tuple(args.families)) if args.families else None,
        variants=tuple(args.variants) if args.variants else None,
        signals=tuple(args.signals) if args.signals else None,
        patch_lengths=tuple(args.patches) if args.patches else None,
        horizons=tuple(args.horizons) if args.horizons else None,
        epochs=args.epochs,
        regimes=regimes,
    )


def write_heatmaps(agg: bench.GridAggregate, out: Path, global_scale: bool, metric: str = "rmse") -> list[Path]:
    """One SVG per (family, regime) holding a panel per variant."""
    groups: dict = {}
    for fam, var, noise in agg.keys():
        groups.setdefault((fam, noise), []).append(var)
    mats = {(f, v, n): agg.heatmap(f, v, metric, n) for (f, n), vs in groups.items() for v in vs}
    global_range = value_range(list(mats.values())) if global_scale else None
    paths = []
    for (fam, noise), variants in groups.items():
        vmin, vmax = global_range or value_range([mats[(fam, v, noise)] for v in variants])
        regime = "noisy" if noise else "clean"
        panels = [HeatmapArtifact(mats[(fam, v, noise)], agg.patch_lengths, agg.horizons, vmin, vmax, v)
                  for v in variants]
        path = out / f"heatmap_{fam}_{regime}_{metric}.svg"
        write_atomic(path, heatmap_svg(panels, f"{fam} mean {metric.upper()} ({regime})"))
        paths.append(path)
    return paths


def _write_aggregate(results, out: Path, global_scale: bool) -> bench.GridAggregate:
    agg = bench.aggregate(results)
    write_atomic(out / "aggregate.csv", bench.aggregate_csv(agg))
    for metric in ("rmse", "mae"):
        write_heatmaps(agg, out, global_scale, metric)
    for key, have, want in agg.missing:
        print(f"warning: cell {key} averages {have} of {want} signals", file=sys.stderr)
    return agg


def cmd_bench_run(args) -> int:
    cfg = _grid_overrides(_base_config(args), args)
    out = _out_dir(args.out)
    write_atomic(out / "config.json", cfg.to_json())

    def progress(i, n, res):
        if args.verbose:
            status = f"rmse={res.rmse:.6f}" if res.ok else f"FAILED {res.error}"
            print(f"[{i}/{n}] {res.family}/{res.variant} {res.signal} P={res.P} H={res.H} "
                  f"noise={int(res.noise)} {status}", file=sys.stderr)

    results = []
    for regime in cfg.grid.regimes:
        spec = cfg.grid_spec(noise=(regime == "noisy"), record_timing=args.timing)
        results += bench.run_grid(spec, jobs=args.jobs, progress=progress)
    write_atomic(out / "results.csv", bench.results_csv(results))
    failed = [r for r in results if not r.ok]
    if failed:
        write_atomic(out / "failures.csv", bench.failures_csv(results))
    _write_aggregate(results, out, args.global_scale)
    print(f"{len(results) - len(failed)} of {len(results)} cells succeeded; artifacts in {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_results(path) -> list[bench.RunResult]:
    try:
        return bench.parse_results_csv(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read results {path}: {exc}") from exc


def cmd_bench_aggregate(args) -> int:
    results = _read_results(args.results)
    out = _out_dir(args.out)
    _write_aggregate(results, out, args.global_scale)
    print(f"aggregated {len(results)} results into {out}")
    return EXIT_OK


def cmd_best_table(args) -> int:
    results = _read_results(args.results)
    if args.regime != "both":
        results = [r for r in results if r.noise == (args.regime == "noisy")]
    families = [args.family] if args.family else sorted({r.family for r in results}, key=models.FAMILIES.index)
    rows = []
    for fam in families:
        rows += bench.best_per_signal([r for r in results if r.family == fam])
    text = bench.best_table_csv(rows)
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# koopformer and simulators ----------------------------------------------------------


def _simulate(system: str, seed: int, noise_sigma=None) -> dynsys.Trajectory:
    overrides = {"seed": seed}
    if noise_sigma is not None:
        overrides["noise_sigma"] = noise_sigma
    return dynsys.simulate(dynsys.config_for(system, **overrides))


def cmd_koopformer_train(args) -> int:
    cfg = _base_config(args)
    cfg = cfg.with_overrides("koopformer", system=args.system, backbone=args.backbone, P=args.patch,
                             H=args.horizon, epochs=args.epochs, lam=args.lam, batch_size=args.batch_size)
    k = cfg.koopformer
    out = _out_dir(args.out)
    traj = _simulate(k.system, cfg.seed, k.noise_sigma)
    d = traj.states.shape[1]
    run = koopman.train_koopformer(traj.states, cfg.koopformer_config(d), k.n_epochs, lr=k.lr, lam=k.lam,
                                   seed=cfg.seed, batch_size=k.batch_size,
                                   log_every=args.log_every)
    hist = run.history
    write_atomic(out / "loss.csv", table_csv(
        ("epoch", "mse", "lyapunov", "total", "max_singular_value"),
        [(h["epoch"], float(h["mse"]), float(h["lyapunov"]), float(h["total"]), float(h["max_singular_value"]))
         for h in hist]))
    names = [f"x{i + 1}" for i in range(d)]
    rows = []
    for w in range(len(run.test_targets)):
        for s in range(k.H):
            rows.append((w, s + 1, *map(float, run.test_targets[w, s]), *map(float, run.test_pred[w, s])))
    write_atomic(out / "forecast.csv", table_csv(
        ("window", "step", *[f"true_{n}" for n in names], *[f"pred_{n}" for n in names]), rows))
    n_sv = run.spectral_trace.shape[1]
    write_atomic(out / "spectral.csv", table_csv(
        ("epoch", *[f"sigma_{i + 1}" for i in range(n_sv)]),
        [(e + 1, *map(float, sv)) for e, sv in enumerate(run.spectral_trace)]))
    write_atomic(out / "config.json", cfg.to_json())
    print(f"{k.system}/{k.backbone}: total loss {hist[0]['total']:.6f} -> {hist[-1]['total']:.6f}, "
          f"held-out RMSE {run.test_rmse:.6f}, max singular value {run.spectral_trace.max():.6f}")
    return EXIT_OK


def cmd_dynsys_simulate(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    traj = _simulate(args.system, seed, args.noise_sigma)
    d = traj.states.shape[1]
    rows = [(float(t), *map(float, z)) for t, z in zip(traj.times, traj.states)]
    text = table_csv(("t", *[f"x{i + 1}" for i in range(d)]), rows)
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# parser --------------------------------------------------------------------------


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help=f"base seed (default: ${SEED_ENV} or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compactformer", description="Compact transformer forecasting benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sig = sub.add_parser("signals", help="synthetic benchmark signals").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = sig.add_parser("gen", help="write signals as t,value CSV files")
    p.add_argument("--id", default="all", help="signal id or 'all'")
    p.add_argument("--noisy", action="store_true", help="apply the noise model")
    p.add_argument("--normalize", action="store_true", help="min-max scale to [0, 1]")
    p.add_argument("--length", type=int, default=signals.DEFAULT_LENGTH)
    p.add_argument("--out", default=".", help="output directory")
    _add_seed(p)
    p.set_defaults(func=cmd_signals_gen)

    bn = sub.add_parser("bench", help="benchmark grid").add_subparsers(dest="action", required=True,
                                                                        parser_class=_Parser)
    p = bn.add_parser("run", help="train and evaluate every grid cell")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--families", nargs="+", choices=models.FAMILIES + ("all",),
                   help="default: patchtst (750 cells per regime); 'all' runs all three")
    p.add_argument("--variants", nargs="+", choices=models.VARIANTS)
    p.add_argument("--signals", nargs="+", choices=signals.SIGNAL_IDS)
    p.add_argument("--patches", nargs="+", type=int)
    p.add_argument("--horizons", nargs="+", type=int)
    p.add_argument("--epochs", type=int, help="override 300 clean / 600 noisy")
    p.add_argument("--regime", choices=("clean", "noisy", "both"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--global-scale", action="store_true", help="share one color scale across families")
    p.add_argument("--timing", action="store_true", help="record wall_ms (makes results non-reproducible)")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", default="bench_out")
    _add_seed(p)
    p.set_defaults(func=cmd_bench_run)

    p = bn.add_parser("aggregate", help="aggregate a results CSV into heatmaps")
    p.add_argument("--results", required=True)
    p.add_argument("--global-scale", action="store_true")
    p.add_argument("--out", default="bench_out")
    p.set_defaults(func=cmd_bench_aggregate)

    p = sub.add_parser("best-table", help="best (variant, P, H) per signal")
    p.add_argument("--results", required=True)
    p.add_argument("--family", choices=models.FAMILIES)
    p.add_argument("--regime", choices=("clean", "noisy", "both"), default="clean")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_best_table)

    kp = sub.add_parser("koopformer", help="Deep Koopformer").add_subparsers(dest="action", required=True,
                                                                             parser_class=_Parser)
    p = kp.add_parser("train", help="train on a simulated trajectory")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--system", choices=("vdp", "lorenz"))
    p.add_argument("--backbone", choices=koopman.BACKBONES)
    p.add_argument("--patch", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lam", type=float, help="Lyapunov penalty weight")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out", default="koopformer_out")
    _add_seed(p)
    p.set_defaults(func=cmd_koopformer_train)

    ds = sub.add_parser("dynsys", help="noisy dynamical systems").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = ds.add_parser("simulate", help="Euler trajectory as CSV")
    p.add_argument("--system", choices=("vdp", "lorenz"), required=True)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--out", help="CSV path (default: stdout)")
    _add_seed(p)
    p.set_defaults(func=cmd_dynsys_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
