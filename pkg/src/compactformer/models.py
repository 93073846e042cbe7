"""PatchTST, Informer and Autoformer forecasters in Minimal/Standard/Full variants.

PatchTST Minimal/Standard embed the whole window as a single patch token
(``W_e`` is ``P x d_model``). Every other variant embeds one time step per
token (``W_e`` is ``1 x d_model``), so a window of length P becomes P tokens.

=========== ======================================================================
patchtst    minimal: sinusoidal PE, encoder, AvgPool, W_o
            standard: learnable global p instead of the sinusoidal table
            full: encoder + decoder fed with the last input value repeated H times
informer    minimal: dense per-step encoder, AvgPool, W_o
            standard: ProbSparse encoder self-attention
            full: ProbSparse encoder, ProbSparse decoder self-attention, dense cross
autoformer  minimal/standard: MA(3) decomposition, seasonal encoder + W_t trend head
            full: MA(25), encoder + zero-input decoder, plus W_t trend head
=========== ======================================================================
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import blocks
from . import numkernel as nk
from .probsparse import ProbSparseConfig

FAMILIES = ("patchtst", "informer", "autoformer")
VARIANTS = ("minimal", "standard", "full")
CHECKPOINT_FORMAT = "cfv1"


@dataclass(frozen=True)
class ModelConfig:
    family: str
    variant: str
    P: int
    H: int
    d_model: int = 8
    heads: int = 2
    d_ff: int = 32
    enc_layers: int = 2
    dec_layers: int = 1
    k_ma: int | None = None
    probsparse: ProbSparseConfig = field(default_factory=ProbSparseConfig)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.P < 1 or self.H < 1:
            raise ValueError("P and H must be >= 1")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.k_ma is None and self.family == "autoformer":
            object.__setattr__(self, "k_ma", 25 if self.variant == "full" else 3)
        if self.k_ma is not None and self.k_ma % 2 == 0:
            raise ValueError("k_ma must be odd")

    @property
    def mha(self) -> blocks.MHAConfig:
        return blocks.MHAConfig(self.d_model, self.heads)

    @property
    def patch_token(self) -> bool:
        return self.family == "patchtst" and self.variant != "full"

    @property
    def has_decoder(self) -> bool:
        return self.variant == "full"

    @property
    def encoder_sparse(self) -> ProbSparseConfig | None:
        return self.probsparse if self.family == "informer" and self.variant != "minimal" else None

    @property
    def decoder_sparse(self) -> ProbSparseConfig | None:
        return self.probsparse if self.family == "informer" and self.variant == "full" else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if isinstance(d.get("probsparse"), dict):
            d["probsparse"] = ProbSparseConfig(**d["probsparse"])
        return cls(**d)


@dataclass
class ModelInstance:
    config: ModelConfig
    params: dict

    def named_parameters(self) -> Iterator[tuple[str, nk.Tensor]]:
        yield from _flatten(self.params)

    def parameters(self) -> list[nk.Tensor]:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def __call__(self, x) -> nk.Tensor:
        return forward(self, x)


def _flatten(tree: dict, prefix: str = "") -> Iterator[tuple[str, nk.Tensor]]:
    for key, val in tree.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            yield from _flatten(val, name + ".")
        else:
            yield name, val


def build(config: ModelConfig, seed: int) -> ModelInstance:
    rng = nk.make_rng(seed)
    c = config
    p: dict = {"embed_enc": blocks.linear_params(rng, c.P if c.patch_token else 1, c.d_model)}
    if c.family == "patchtst" and c.variant == "standard":
        p["pos"] = nk.init_zeros((1, c.d_model))
    p["enc"] = {str(i): blocks.encoder_layer_params(rng, c.d_model, c.d_ff) for i in range(c.enc_layers)}
    if c.has_decoder:
        p["embed_dec"] = blocks.linear_params(rng, 1, c.d_model)
        p["dec"] = {str(i): blocks.decoder_layer_params(rng, c.d_model, c.d_ff) for i in range(c.dec_layers)}
        p["head"] = blocks.linear_params(rng, c.d_model, 1)
    else:
        p["head"] = blocks.linear_params(rng, c.d_model, c.H)
    if c.family == "autoformer":
        p["trend_head"] = blocks.linear_params(rng, c.P, c.H)
    return ModelInstance(config, p)


# forward passes ----------------------------------------------------------------


def _check_input(m: ModelInstance, x) -> np.ndarray:
    x = np.asarray(x.data if isinstance(x, nk.Tensor) else x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.config.P:
        raise ValueError(f"expected input of shape (B, {m.config.P}), got {x.shape}")
    return x


def _encode(m: ModelInstance, x: np.ndarray) -> nk.Tensor:
    c, p = m.config, m.params
    if c.patch_token:
        x = x[:, None, :]
    z = blocks.embed(x, p["embed_enc"]["W"], p["embed_enc"]["b"])
    if "pos" in p:
        z = nk.add(z, p["pos"])
    else:
        z = nk.add(z, blocks.sinusoidal_pe(z.shape[1], c.d_model))
    for i in range(c.enc_layers):
        z = blocks.encoder_layer(z, c.mha, p["enc"][str(i)], c.encoder_sparse)
    return z


def _pooled_head(m: ModelInstance, h: nk.Tensor) -> nk.Tensor:
    head = m.params["head"]
    return blocks.linear(blocks.avg_pool_tokens(h), head["W"], head["b"])


def _decode(m: ModelInstance, dec_values: np.ndarray, h_enc: nk.Tensor) -> nk.Tensor:
    c, p = m.config, m.params
    z = blocks.embed(dec_values, p["embed_dec"]["W"], p["embed_dec"]["b"])
    z = nk.add(z, blocks.sinusoidal_pe(c.H, c.d_model))
    for i in range(c.dec_layers):
        z = blocks.decoder_layer(z, h_enc, c.mha, p["dec"][str(i)], c.decoder_sparse)
    y = blocks.linear(z, p["head"]["W"], p["head"]["b"])
    return nk.reshape(y, (y.shape[0], c.H))


def repeat_last(x: np.ndarray, H: int) -> np.ndarray:
    return np.repeat(x[:, -1:], H, axis=1)


def _seq2seq_or_pooled(m: ModelInstance, x: np.ndarray, dec_values: np.ndarray | None = None) -> nk.Tensor:
    h = _encode(m, x)
    if not m.config.has_decoder:
        return _pooled_head(m, h)
    return _decode(m, dec_values, h)


def forward_patchtst_minimal(m: ModelInstance, x) -> nk.Tensor:
    return _seq2seq_or_pooled(m, _check_input(m, x))


forward_patchtst_standard = forward_patchtst_minimal
forward_informer_minimal = forward_patchtst_minimal
forward_informer_standard = forward_patchtst_minimal


def forward_patchtst_full(m: ModelInstance, x) -> nk.Tensor:
    x = _check_input(m, x)
    return _seq2seq_or_pooled(m, x, repeat_last(x, m.config.H))


forward_informer_full = forward_patchtst_full


def autoformer_parts(m: ModelInstance, x) -> tuple[nk.Tensor, nk.Tensor]:
    """Seasonal-path and trend-path forecasts; the model output is their sum."""
    x = _check_input(m, x)
    c = m.config
    parts = blocks.decompose(x, c.k_ma)
    dec_in = np.zeros((x.shape[0], c.H)) if c.has_decoder else None
    seasonal = _seq2seq_or_pooled(m, parts.seasonal, dec_in)
    th = m.params["trend_head"]
    trend = blocks.linear(parts.trend, th["W"], th["b"])
    return seasonal, trend


def forward_autoformer(m: ModelInstance, x) -> nk.Tensor:
    seasonal, trend = autoformer_parts(m, x)
    return nk.add(seasonal, trend)


forward_autoformer_minimal = forward_autoformer_standard = forward_autoformer_full = forward_autoformer


def forward(m: ModelInstance, x) -> nk.Tensor:
    c = m.config
    if c.family == "autoformer":
        return forward_autoformer(m, x)
    if c.variant == "full":
        return forward_patchtst_full(m, x)
    return forward_patchtst_minimal(m, x)


def predict(m: ModelInstance, x, chunk: int = 1024) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    with nk.no_grad():
        return np.concatenate([forward(m, x[i:i + chunk]).data for i in range(0, len(x), chunk)], axis=0)


# checkpoints ---------------------------------------------------------------------


def save_checkpoint(m: ModelInstance, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": m.config.to_dict(),
        "params": {name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
                   for name, t in m.named_parameters()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> ModelInstance:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    m = build(ModelConfig.from_dict(doc["config"]), seed=0)
    stored = doc["params"]
    for name, t in m.named_parameters():
        entry = stored[name]
        t.data[...] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return m
