"""Training, evaluation and the (family, variant, signal, P, H) benchmark grid."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import models
from . import numkernel as nk
from .probsparse import ProbSparseConfig
from .signals import DEFAULT_LENGTH, SIGNAL_IDS, NoiseConfig, SeriesDataset, benchmark_series, window

DEFAULT_PATCHES = (4, 8, 12, 16, 20)
DEFAULT_HORIZONS = (2, 4, 8, 12, 20)
DEFAULT_FAMILIES = ("patchtst",)  # one architecture per study: 3 variants x 25 cells x 10 signals = 750
CLEAN_EPOCHS = 300
NOISY_EPOCHS = 600

RESULT_FIELDS = ("signal", "family", "variant", "patch", "horizon", "noise", "rmse", "mae", "epochs", "seed", "wall_ms")
AGGREGATE_FIELDS = ("family", "variant", "patch", "horizon", "mean_rmse", "mean_mae")
VARIANT_ORDER = {v: i for i, v in enumerate(models.VARIANTS)}


@dataclass(frozen=True)
class GridSpec:
    patch_lengths: tuple = DEFAULT_PATCHES
    horizons: tuple = DEFAULT_HORIZONS
    signals: tuple = SIGNAL_IDS
    families: tuple = DEFAULT_FAMILIES
    variants: tuple = models.VARIANTS
    noise: bool = False
    epochs: int | None = None  # None: 300 clean / 600 noisy
    lr: float = 1e-3
    seed: int = 0
    split_fraction: float = 0.8
    batch_size: int | None = 32
    T: int = DEFAULT_LENGTH
    noise_config: NoiseConfig = field(default_factory=NoiseConfig)
    probsparse: ProbSparseConfig = field(default_factory=ProbSparseConfig)
    record_timing: bool = False

    @property
    def n_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return NOISY_EPOCHS if self.noise else CLEAN_EPOCHS

    def cells(self) -> list[tuple]:
        return [(fam, var, sig, P, H)
                for fam in self.families for var in self.variants for sig in self.signals
                for P in self.patch_lengths for H in self.horizons]


@dataclass
class RunResult:
    signal: str
    family: str
    variant: str
    P: int
    H: int
    noise: bool
    rmse: float
    mae: float
    epochs: int
    seed: int
    wall_ms: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class TrainResult:
    model: models.ModelInstance
    loss_curve: list[float]


def cell_seed(base_seed: int, *coords) -> int:
    """Stable 63-bit seed from the base seed and cell coordinates."""
    key = "|".join(str(c) for c in (base_seed, *coords)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


def split(ds: SeriesDataset, fraction: float = 0.8) -> tuple[SeriesDataset, SeriesDataset]:
    """Chronological split: the first ``fraction`` of windows train, the rest test."""
    n = int(ds.N * fraction)
    if n < 1 or n >= ds.N:
        raise ValueError(f"split of {ds.N} windows at {fraction} leaves an empty part")
    return (SeriesDataset(ds.inputs[:n], ds.targets[:n], ds.P, ds.H),
            SeriesDataset(ds.inputs[n:], ds.targets[n:], ds.P, ds.H))


def train(model: models.ModelInstance, ds: SeriesDataset, epochs: int, lr: float = 1e-3,
          batch_size: int | None = 32, seed: int = 0) -> TrainResult:
    """Adam on MSE. Each epoch is one shuffled pass of mini-batches (or one full batch)."""
    if ds.N < 1:
        raise ValueError("empty training set")
    params = model.parameters()
    opt = nk.Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    curve = []
    for _ in range(epochs):
        if batch_size is None or batch_size >= ds.N:
            batches = [slice(None)]
        else:
            perm = rng.permutation(ds.N)
            batches = [perm[i:i + batch_size] for i in range(0, ds.N, batch_size)]
        total = 0.0
        for idx in batches:
            x, y = ds.inputs[idx], ds.targets[idx]
            loss = nk.mse(models.forward(model, x), y)
            nk.backward(loss, params)
            opt.step()
            total += float(loss.data) * len(x)
        curve.append(total / ds.N)
    return TrainResult(model, curve)


def error_metrics(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    err = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    if err.size == 0:
        raise ValueError("no predictions to score")
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def evaluate(model: models.ModelInstance, test: SeriesDataset) -> tuple[float, float]:
    """(RMSE, MAE) over every test window and horizon step."""
    return error_metrics(models.predict(model, test.inputs), test.targets)


@lru_cache(maxsize=64)
def _series(signal: str, noisy: bool, base_seed: int, T: int, noise_cfg: NoiseConfig) -> np.ndarray:
    return benchmark_series(signal, noisy, cell_seed(base_seed, signal, "noise"), T, noise_cfg).values


def run_cell(spec: GridSpec, family: str, variant: str, signal: str, P: int, H: int) -> RunResult:
    seed = cell_seed(spec.seed, family, variant, signal, P, H, int(spec.noise))
    epochs = spec.n_epochs
    start = time.perf_counter()
    try:
        values = _series(signal, spec.noise, spec.seed, spec.T, spec.noise_config)
        train_ds, test_ds = split(window(values, P, H), spec.split_fraction)
        cfg = models.ModelConfig(family, variant, P, H, probsparse=spec.probsparse)
        model = models.build(cfg, seed)
        train(model, train_ds, epochs, spec.lr, spec.batch_size, seed)
        rmse, mae = evaluate(model, test_ds)
        error = None
        if not (math.isfinite(rmse) and math.isfinite(mae)):
            error = "non-finite error metrics"
    except Exception as exc:  # recorded per cell; the grid keeps going
        rmse = mae = float("nan")
        error = f"{type(exc).__name__}: {exc}"
    wall = int((time.perf_counter() - start) * 1000) if spec.record_timing else 0
    return RunResult(signal, family, variant, P, H, spec.noise, rmse, mae, epochs, seed, wall, error)


def _run_cell_args(args):
    spec, cell = args
    return run_cell(spec, *cell)


def run_grid(spec: GridSpec, jobs: int = 1, progress=None) -> list[RunResult]:
    """One result per cell, in canonical cell order regardless of ``jobs``."""
    cells = spec.cells()
    if jobs <= 1:
        out = []
        for i, cell in enumerate(cells):
            out.append(run_cell(spec, *cell))
            if progress:
                progress(i + 1, len(cells), out[-1])
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = []
        for i, res in enumerate(pool.map(_run_cell_args, [(spec, c) for c in cells])):
            out.append(res)
            if progress:
                progress(i + 1, len(cells), res)
        return out


def run_regimes(spec: GridSpec, regimes=("clean", "noisy"), jobs: int = 1, progress=None) -> list[RunResult]:
    results = []
    for regime in regimes:
        results += run_grid(replace(spec, noise=(regime == "noisy")), jobs, progress)
    return results


# aggregation ---------------------------------------------------------------------


@dataclass
class GridAggregate:
    cells: dict  # (family, variant, noise, P, H) -> (mean_rmse, mean_mae, count)
    patch_lengths: tuple
    horizons: tuple
    missing: list = field(default_factory=list)

    def heatmap(self, family: str, variant: str, metric: str = "rmse", noise: bool = False) -> np.ndarray:
        """Rows are patch lengths, columns horizons; NaN where no result exists."""
        col = {"rmse": 0, "mae": 1}[metric]
        out = np.full((len(self.patch_lengths), len(self.horizons)), np.nan)
        for i, P in enumerate(self.patch_lengths):
            for j, H in enumerate(self.horizons):
                entry = self.cells.get((family, variant, noise, P, H))
                if entry is not None:
                    out[i, j] = entry[col]
        return out

    def keys(self) -> list[tuple]:
        return sorted({(f, v, n) for f, v, n, _, _ in self.cells},
                      key=lambda k: (models.FAMILIES.index(k[0]) if k[0] in models.FAMILIES else 99,
                                     VARIANT_ORDER.get(k[1], 99), k[2]))


def aggregate(results: list[RunResult]) -> GridAggregate:
    """Mean RMSE/MAE over signals per (family, variant, noise, P, H)."""
    groups: dict = {}
    signals_seen: dict = {}
    for r in results:
        key = (r.family, r.variant, r.noise, r.P, r.H)
        signals_seen.setdefault(key, set()).add(r.signal)
        if r.ok:
            groups.setdefault(key, []).append((r.rmse, r.mae))
    all_signals = sorted({r.signal for r in results})
    cells, missing = {}, []
    for key, seen in signals_seen.items():
        vals = groups.get(key, [])
        if vals:
            arr = np.array(vals)
            cells[key] = (float(arr[:, 0].mean()), float(arr[:, 1].mean()), len(vals))
        if len(vals) < len(all_signals):
            missing.append((key, len(vals), len(all_signals)))
    patches = tuple(sorted({r.P for r in results}))
    horizons = tuple(sorted({r.H for r in results}))
    return GridAggregate(cells, patches, horizons, missing)


def best_per_signal(results: list[RunResult]) -> list[RunResult]:
    """Lowest-RMSE row per signal; ties go to smaller P, then H, then variant order."""
    best: dict = {}
    for r in results:
        if not r.ok:
            continue
        key = (r.rmse, r.P, r.H, VARIANT_ORDER.get(r.variant, 99))
        cur = best.get(r.signal)
        if cur is None or key < cur[0]:
            best[r.signal] = (key, r)
    return [best[s][1] for s in sorted(best)]


# CSV -------------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def results_csv(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in results:
        if r.ok:
            w.writerow([r.signal, r.family, r.variant, r.P, r.H, int(r.noise), _fmt(r.rmse), _fmt(r.mae),
                        r.epochs, r.seed, r.wall_ms])
    return buf.getvalue()


def failures_csv(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("signal", "family", "variant", "patch", "horizon", "noise", "error"))
    for r in results:
        if not r.ok:
            w.writerow([r.signal, r.family, r.variant, r.P, r.H, int(r.noise), r.error])
    return buf.getvalue()


def parse_results_csv(text: str) -> list[RunResult]:
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != RESULT_FIELDS:
        raise ValueError(f"unexpected results header {rows.fieldnames}")
    return [RunResult(r["signal"], r["family"], r["variant"], int(r["patch"]), int(r["horizon"]),
                      bool(int(r["noise"])), float(r["rmse"]), float(r["mae"]), int(r["epochs"]),
                      int(r["seed"]), int(r["wall_ms"])) for r in rows]


def aggregate_csv(agg: GridAggregate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    noise_levels = {k[2] for k in agg.cells}
    header = AGGREGATE_FIELDS if len(noise_levels) <= 1 else AGGREGATE_FIELDS[:2] + ("noise",) + AGGREGATE_FIELDS[2:]
    w.writerow(header)
    for fam, var, noise in agg.keys():
        for P in agg.patch_lengths:
            for H in agg.horizons:
                entry = agg.cells.get((fam, var, noise, P, H))
                if entry is None:
                    continue
                row = [fam, var] + ([int(noise)] if len(header) > len(AGGREGATE_FIELDS) else []) + [P, H, _fmt(entry[0]), _fmt(entry[1])]
                w.writerow(row)
    return buf.getvalue()


def best_table_csv(rows: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("signal", "family", "variant", "patch", "horizon", "rmse", "mae"))
    for r in rows:
        w.writerow([r.signal, r.family, r.variant, r.P, r.H, _fmt(r.rmse), _fmt(r.mae)])
    return buf.getvalue()
