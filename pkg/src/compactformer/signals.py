"""The ten closed-form benchmark signals, the noise model, scaling and windowing."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DEFAULT_LENGTH = 500

_TWO_PI = 2.0 * np.pi

SIGNALS = {
    "sine": lambda t: np.sin(_TWO_PI * t / 40),
    "cosine_trend": lambda t: 0.01 * t + np.cos(_TWO_PI * t / 50),
    "exp_decay_sine": lambda t: np.exp(-0.01 * t) * np.sin(_TWO_PI * t / 50),
    "poly2": lambda t: 0.0001 * t**2 - 0.03 * t + 3,
    "log_sine": lambda t: np.log1p(t) * np.sin(_TWO_PI * t / 80),
    "gaussian_bump": lambda t: np.exp(-((t - 250) ** 2) / (2 * 50**2)),
    "long_sine": lambda t: np.sin(_TWO_PI * t / 100),
    "cubic": lambda t: 0.00001 * (t - 250) ** 3 + 0.05 * t,
    "exp_growth": lambda t: np.exp(0.005 * t),
    "cos_envelope_sine": lambda t: (1 + 0.5 * np.cos(_TWO_PI * t / 100)) * np.sin(_TWO_PI * t / 30),
}
SIGNAL_IDS = tuple(SIGNALS)


@dataclass(frozen=True)
class Series:
    values: np.ndarray
    signal_id: str
    noisy: bool = False

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class NoiseConfig:
    sigma_add: float = 0.10
    sigma_mult: float = 0.08
    shift_prob: float = 0.10
    shift_range: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.sigma_add < 0 or self.sigma_mult < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.shift_prob <= 1.0:
            raise ValueError("shift_prob must lie in [0, 1]")
        if self.shift_range < 0:
            raise ValueError("shift_range must be non-negative")


@dataclass(frozen=True)
class SeriesDataset:
    inputs: np.ndarray  # N x P
    targets: np.ndarray  # N x H
    P: int
    H: int

    @property
    def N(self) -> int:
        return self.inputs.shape[0]


def generate(signal_id: str, T: int = DEFAULT_LENGTH) -> Series:
    if signal_id not in SIGNALS:
        raise KeyError(f"unknown signal {signal_id!r}; expected one of {', '.join(SIGNAL_IDS)}")
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.arange(T, dtype=np.float64)
    return Series(SIGNALS[signal_id](t).astype(np.float64), signal_id)


def add_noise(series: Series, cfg: NoiseConfig) -> Series:
    """Additive Gaussian, then multiplicative jitter, then (maybe) one global time shift.

    A shift by ``dt`` reads ``s(t + dt)``; indices falling off either end
    repeat the edge value.
    """
    rng = np.random.default_rng(cfg.seed)
    x = series.values.copy()
    n = len(x)
    x = x + rng.normal(0.0, cfg.sigma_add, size=n) if cfg.sigma_add > 0 else x
    x = x * (1.0 + rng.normal(0.0, cfg.sigma_mult, size=n)) if cfg.sigma_mult > 0 else x
    if cfg.shift_prob > 0 and rng.random() < cfg.shift_prob:
        dt = int(rng.integers(-cfg.shift_range, cfg.shift_range + 1))
        x = x[np.clip(np.arange(n) + dt, 0, n - 1)]
    return replace(series, values=x, noisy=True)


def normalize(series: Series) -> Series:
    """Min-max scale to [0, 1]; a constant series maps to zeros."""
    x = series.values
    lo, hi = x.min(), x.max()
    if hi == lo:
        return replace(series, values=np.zeros_like(x))
    return replace(series, values=(x - lo) / (hi - lo))


def window(series: Series | np.ndarray, P: int, H: int) -> SeriesDataset:
    x = series.values if isinstance(series, Series) else np.asarray(series, dtype=np.float64)
    if P < 1 or H < 1:
        raise ValueError("P and H must be positive")
    T = len(x)
    if T < P + H:
        raise ValueError(f"series of length {T} too short: need at least P + H = {P + H}")
    frames = np.lib.stride_tricks.sliding_window_view(x, P + H)
    return SeriesDataset(frames[:, :P].copy(), frames[:, P:].copy(), P, H)


def benchmark_series(signal_id: str, noisy: bool, seed: int, T: int = DEFAULT_LENGTH, noise: NoiseConfig | None = None) -> Series:
    """Series as the benchmark sees it: generated, optionally noised, normalized."""
    s = generate(signal_id, T)
    if noisy:
        cfg = replace(noise or NoiseConfig(), seed=seed)
        s = add_noise(s, cfg)
    return normalize(s)
