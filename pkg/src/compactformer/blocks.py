"""Transformer building blocks on top of the autodiff kernel.

Weights live in plain dicts of ``Tensor`` so models can flatten, save and
optimize them without a module system. Token tensors are ``(B, L, d_model)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .probsparse import ProbSparseConfig, sparse_attention_core


@dataclass(frozen=True)
class MHAConfig:
    d_model: int = 8
    heads: int = 2

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


@dataclass(frozen=True)
class DecompPair:
    trend: np.ndarray
    seasonal: np.ndarray
    k: int


# parameter factories ---------------------------------------------------------


def linear_params(rng, fan_in: int, fan_out: int, prefix: str = "") -> dict:
    return {f"{prefix}W": nk.init_weight(rng, fan_in, (fan_in, fan_out)),
            f"{prefix}b": nk.init_zeros((fan_out,))}


def mha_params(rng, d_model: int) -> dict:
    w = {}
    for name in ("q", "k", "v", "o"):
        w[f"W{name}"] = nk.init_weight(rng, d_model, (d_model, d_model))
        w[f"b{name}"] = nk.init_zeros((d_model,))
    return w


def ffn_params(rng, d_model: int, d_ff: int) -> dict:
    return {"W1": nk.init_weight(rng, d_model, (d_model, d_ff)), "b1": nk.init_zeros((d_ff,)),
            "W2": nk.init_weight(rng, d_ff, (d_ff, d_model)), "b2": nk.init_zeros((d_model,))}


def norm_params(d_model: int) -> dict:
    return {"g": nk.parameter(np.ones(d_model)), "b": nk.init_zeros((d_model,))}


def encoder_layer_params(rng, d_model: int, d_ff: int) -> dict:
    return {"attn": mha_params(rng, d_model), "ln1": norm_params(d_model),
            "ffn": ffn_params(rng, d_model, d_ff), "ln2": norm_params(d_model)}


def decoder_layer_params(rng, d_model: int, d_ff: int) -> dict:
    return {"self_attn": mha_params(rng, d_model), "ln1": norm_params(d_model),
            "cross_attn": mha_params(rng, d_model), "ln2": norm_params(d_model),
            "ffn": ffn_params(rng, d_model, d_ff), "ln3": norm_params(d_model)}


# ops -------------------------------------------------------------------------


def linear(x, W, b=None) -> nk.Tensor:
    y = nk.matmul(x, W)
    return y if b is None else nk.add(y, b)


def embed(x, W_e, b_e=None) -> nk.Tensor:
    """Per-step embedding: ``(B, L)`` or ``(B, L, c)`` values to ``(B, L, d_model)`` tokens."""
    x = nk.as_tensor(x)
    if x.ndim == 2:
        x = nk.reshape(x, x.shape + (1,))
    if x.shape[-1] != W_e.shape[0]:
        raise ValueError(f"embed: input channels {x.shape[-1]} do not match W_e {W_e.shape}")
    return linear(x, W_e, b_e)


def sinusoidal_pe(L: int, d_model: int) -> np.ndarray:
    if d_model % 2:
        raise ValueError("sinusoidal encoding needs an even d_model")
    pos = np.arange(L, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.empty((L, d_model))
    table[:, 0::2] = np.sin(pos / freq)
    table[:, 1::2] = np.cos(pos / freq)
    return table


def _split_heads(x: nk.Tensor, heads: int) -> nk.Tensor:
    B, L, d = x.shape
    return nk.transpose(nk.reshape(x, (B, L, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: nk.Tensor) -> nk.Tensor:
    B, h, L, dh = x.shape
    return nk.reshape(nk.transpose(x, (0, 2, 1, 3)), (B, L, h * dh))


def dense_attention_core(Q, K, V) -> nk.Tensor:
    logits = nk.mul(nk.matmul(Q, nk.swap_last(K)), 1.0 / math.sqrt(Q.shape[-1]))
    return nk.matmul(nk.softmax(logits, axis=-1), V)


def multi_head_attention(q_in, k_in, v_in, cfg: MHAConfig, w: dict,
                         sparse: ProbSparseConfig | None = None) -> nk.Tensor:
    """softmax(Q_i K_i^T / sqrt(d_model / h)) V_i per head, concatenated, then W_o."""
    for t in (q_in, k_in, v_in):
        if t.shape[-1] != cfg.d_model:
            raise ValueError(f"attention input width {t.shape[-1]} != d_model {cfg.d_model}")
    Q = _split_heads(linear(q_in, w["Wq"], w["bq"]), cfg.heads)
    K = _split_heads(linear(k_in, w["Wk"], w["bk"]), cfg.heads)
    V = _split_heads(linear(v_in, w["Wv"], w["bv"]), cfg.heads)
    heads = dense_attention_core(Q, K, V) if sparse is None else sparse_attention_core(Q, K, V, sparse)
    return linear(_merge_heads(heads), w["Wo"], w["bo"])


def ffn(x, w: dict) -> nk.Tensor:
    return linear(nk.relu(linear(x, w["W1"], w["b1"])), w["W2"], w["b2"])


def _norm(x, p):
    return nk.layer_norm(x, p["g"], p["b"])


def encoder_layer(x, cfg: MHAConfig, w: dict, sparse: ProbSparseConfig | None = None) -> nk.Tensor:
    x = _norm(nk.add(x, multi_head_attention(x, x, x, cfg, w["attn"], sparse)), w["ln1"])
    return _norm(nk.add(x, ffn(x, w["ffn"])), w["ln2"])


def decoder_layer(x_dec, h_enc, cfg: MHAConfig, w: dict, self_sparse: ProbSparseConfig | None = None) -> nk.Tensor:
    x = _norm(nk.add(x_dec, multi_head_attention(x_dec, x_dec, x_dec, cfg, w["self_attn"], self_sparse)), w["ln1"])
    x = _norm(nk.add(x, multi_head_attention(x, h_enc, h_enc, cfg, w["cross_attn"])), w["ln2"])
    return _norm(nk.add(x, ffn(x, w["ffn"])), w["ln3"])


def avg_pool_tokens(x) -> nk.Tensor:
    return nk.tmean(nk.as_tensor(x), axis=-2)


def moving_average(x: np.ndarray, k: int, axis: int = -1) -> np.ndarray:
    """Centered mean over ``k`` samples with edge-replicated padding.

    ``k`` may exceed the series length; the padding then dominates the window.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"moving-average kernel must be a positive odd integer, got {k}")
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    half = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    padded = np.pad(x, pad, mode="edge")
    trend = np.lib.stride_tricks.sliding_window_view(padded, k, axis=-1).mean(axis=-1)
    return np.moveaxis(trend, -1, axis)


def decompose(x, k: int, axis: int = -1) -> DecompPair:
    x = np.asarray(x, dtype=np.float64)
    trend = moving_average(x, k, axis)
    return DecompPair(trend, x - trend, k)
