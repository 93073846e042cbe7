"""Forward-Euler simulators for the noisy Van der Pol oscillator and Lorenz system.

Noise enters as ``z' = z + dt * f(z) + eta`` with ``eta ~ N(0, sigma^2 I)``
drawn fresh each step and not scaled by ``sqrt(dt)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VdPConfig:
    mu: float = 1.0
    dt: float = 0.01
    T: float = 20.0
    x0: tuple = (2.0, 0.0)
    noise_sigma: float = 0.02
    seed: int = 0

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class LorenzConfig:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    T: float = 20.0
    x0: tuple = (1.0, 1.0, 1.0)
    noise_sigma: float = 0.5
    seed: int = 0

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Trajectory:
    states: np.ndarray  # N x d_state
    config: VdPConfig | LorenzConfig

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.config.dt


def vdp_field(z: np.ndarray, mu: float) -> np.ndarray:
    x1, x2 = z
    return np.array([x2, mu * (1.0 - x1 * x1) * x2 - x1])


def lorenz_field(z: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x1, x2, x3 = z
    return np.array([sigma * (x2 - x1), x1 * (rho - x3) - x2, x1 * x2 - beta * x3])


def _noise(cfg, rng, d):
    if cfg.noise_sigma == 0 or rng is None:
        return 0.0
    return rng.normal(0.0, cfg.noise_sigma, size=d)


def vdp_step(z, cfg: VdPConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z + cfg.dt * vdp_field(z, cfg.mu) + _noise(cfg, rng, 2)


def lorenz_step(z, cfg: LorenzConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z + cfg.dt * lorenz_field(z, cfg.sigma, cfg.rho, cfg.beta) + _noise(cfg, rng, 3)


def simulate(cfg: VdPConfig | LorenzConfig) -> Trajectory:
    """``cfg.steps`` states starting at ``x0`` (the initial state is row 0)."""
    step = vdp_step if isinstance(cfg, VdPConfig) else lorenz_step
    rng = np.random.default_rng(cfg.seed)
    states = np.empty((cfg.steps, len(cfg.x0)))
    states[0] = cfg.x0
    for i in range(1, cfg.steps):
        states[i] = step(states[i - 1], cfg, rng)
    return Trajectory(states, cfg)


def config_for(system: str, **overrides) -> VdPConfig | LorenzConfig:
    if system == "vdp":
        return VdPConfig(**overrides)
    if system == "lorenz":
        return LorenzConfig(**overrides)
    raise ValueError(f"unknown system {system!r}; expected 'vdp' or 'lorenz'")
