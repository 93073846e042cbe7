"""JSON run configuration (``config_version: 1``) shared by the command-line tools.

Every section is a dataclass; loading rejects unknown keys at any level, and
``RunConfig.from_dict(cfg.to_dict()) == cfg`` holds for every valid config.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import models
from .bench import DEFAULT_FAMILIES, DEFAULT_HORIZONS, DEFAULT_PATCHES, GridSpec
from .koopman import BACKBONES, KoopformerConfig
from .probsparse import LAZY_MODES, ProbSparseConfig
from .signals import DEFAULT_LENGTH, SIGNAL_IDS, NoiseConfig

CONFIG_VERSION = 1
REGIMES = ("clean", "noisy")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSection:
    patch_lengths: tuple = DEFAULT_PATCHES
    horizons: tuple = DEFAULT_HORIZONS
    signals: tuple = SIGNAL_IDS
    families: tuple = DEFAULT_FAMILIES
    variants: tuple = models.VARIANTS
    regimes: tuple = ("clean",)
    epochs: int | None = None
    lr: float = 1e-3
    split_fraction: float = 0.8
    batch_size: int | None = 32
    length: int = DEFAULT_LENGTH

    def validate(self):
        for name, allowed in (("signals", SIGNAL_IDS), ("families", models.FAMILIES),
                              ("variants", models.VARIANTS), ("regimes", REGIMES)):
            bad = [v for v in getattr(self, name) if v not in allowed]
            if bad:
                raise ConfigError(f"grid.{name}: unknown entries {bad}")
        if any(p < 1 for p in self.patch_lengths) or any(h < 1 for h in self.horizons):
            raise ConfigError("grid: patch lengths and horizons must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigError("grid.epochs must be non-negative")
        if not 0 < self.split_fraction < 1:
            raise ConfigError("grid.split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class NoiseSection:
    sigma_add: float = 0.10
    sigma_mult: float = 0.08
    shift_prob: float = 0.10
    shift_range: int = 10


@dataclass(frozen=True)
class KoopformerSection:
    system: str = "vdp"
    backbone: str = "patchtst"
    P: int | None = None  # 16 for vdp, 200 for lorenz
    H: int = 5
    epochs: int | None = None  # 1000 for vdp, 3000 for lorenz
    lr: float = 1e-3
    lam: float = 0.1
    d_model: int = 16
    heads: int = 2
    d_ff: int = 64
    enc_layers: int = 2
    d_latent: int = 16
    batch_size: int | None = None
    noise_sigma: float | None = None  # simulator default when unset

    def validate(self):
        if self.system not in ("vdp", "lorenz"):
            raise ConfigError(f"koopformer.system must be 'vdp' or 'lorenz', got {self.system!r}")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"koopformer.backbone must be one of {BACKBONES}, got {self.backbone!r}")

    @property
    def patch(self) -> int:
        return self.P if self.P is not None else (16 if self.system == "vdp" else 200)

    @property
    def n_epochs(self) -> int:
        return self.epochs if self.epochs is not None else (1000 if self.system == "vdp" else 3000)


@dataclass(frozen=True)
class RunConfig:
    config_version: int = CONFIG_VERSION
    seed: int = 0
    grid: GridSection = field(default_factory=GridSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    probsparse: ProbSparseConfig = field(default_factory=ProbSparseConfig)
    koopformer: KoopformerSection = field(default_factory=KoopformerSection)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("patch_lengths", "horizons", "signals", "families", "variants", "regimes"):
            d["grid"][key] = list(d["grid"][key])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(cls, d, "")
        version = d.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {version!r}")
        sections = {"grid": GridSection, "noise": NoiseSection, "probsparse": ProbSparseConfig,
                    "koopformer": KoopformerSection}
        kwargs = {"config_version": version, "seed": d.get("seed", 0)}
        if not isinstance(kwargs["seed"], int) or kwargs["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        for name, typ in sections.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"{name} must be an object")
            _reject_unknown(typ, sub, name + ".")
            sub = {k: tuple(v) if isinstance(v, list) else v for k, v in sub.items()}
            try:
                kwargs[name] = typ(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        self.grid.validate()
        self.koopformer.validate()
        if self.probsparse.lazy_mode not in LAZY_MODES:
            raise ConfigError(f"probsparse.lazy_mode must be one of {LAZY_MODES}")
        try:
            self.noise_config()
        except ValueError as exc:
            raise ConfigError(f"noise: {exc}") from exc

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(**asdict(self.noise), seed=self.seed)

    def grid_spec(self, noise: bool = False, record_timing: bool = False) -> GridSpec:
        g = self.grid
        return GridSpec(patch_lengths=tuple(g.patch_lengths), horizons=tuple(g.horizons),
                        signals=tuple(g.signals), families=tuple(g.families), variants=tuple(g.variants),
                        noise=noise, epochs=g.epochs, lr=g.lr, seed=self.seed,
                        split_fraction=g.split_fraction, batch_size=g.batch_size, T=g.length,
                        noise_config=self.noise_config(), probsparse=self.probsparse,
                        record_timing=record_timing)

    def koopformer_config(self, d_state: int) -> KoopformerConfig:
        k = self.koopformer
        return KoopformerConfig(P=k.patch, H=k.H, d_state=d_state, backbone=k.backbone, d_model=k.d_model,
                                heads=k.heads, d_ff=k.d_ff, enc_layers=k.enc_layers, d_latent=k.d_latent,
                                probsparse=self.probsparse)

    def with_overrides(self, section: str | None = None, **values) -> "RunConfig":
        """Copy with top-level fields or fields of one section replaced (``None`` values skipped)."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        if section is None:
            cfg = replace(self, **values)
        else:
            cfg = replace(self, **{section: replace(getattr(self, section), **values)})
        cfg.validate()
        return cfg


def _reject_unknown(typ, d: dict, prefix: str):
    known = {f.name for f in fields(typ)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(doc)
