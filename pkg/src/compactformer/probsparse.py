"""ProbSparse attention: max-minus-mean query scoring and top-u selection.

Two paths share the scoring and selection rules:

* ``probsparse_attention`` works on single L x d matrices in plain numpy and
  only forms the query-key dot products the sparse scheme needs, counting
  them in an ``OpCounter``. It is the instrumented reference.
* ``sparse_attention_core`` is the differentiable, batched version used by
  the models. It forms the full score tensor (scoring needs it anyway) and
  assembles active and lazy rows with constant masks, so active rows are
  bitwise identical to dense attention.

The scoring pass always costs L_Q * L_K dot products; only the attention
output phase is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk

LAZY_MODES = ("mean", "topk")


@dataclass(frozen=True)
class ProbSparseConfig:
    c: float = 5.0
    lazy_mode: str = "mean"
    u_override: int | None = None

    def __post_init__(self):
        if self.lazy_mode not in LAZY_MODES:
            raise ValueError(f"lazy_mode must be one of {LAZY_MODES}, got {self.lazy_mode!r}")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def u_for(self, L_Q: int, L_K: int) -> int:
        if self.u_override is not None:
            return max(1, min(L_Q, self.u_override))
        return sample_size(L_Q, L_K, self.c)


@dataclass
class SparsityScores:
    m: np.ndarray


@dataclass
class SparseSelection:
    u: int
    active: np.ndarray  # sorted indices


@dataclass
class OpCounter:
    dot_products: int = 0

    def add(self, n: int) -> None:
        self.dot_products += int(n)


def sample_size(L_Q: int, L_K: int, c: float = 5.0) -> int:
    """u = min(L_Q, ceil(c ln L_K)), at least 1."""
    if L_K <= 1:
        return 1
    return max(1, min(L_Q, math.ceil(c * math.log(L_K))))


def scores_from_logits(logits: np.ndarray) -> np.ndarray:
    """M over the last axis of scaled logits: max minus mean."""
    m = logits.max(axis=-1) - logits.mean(axis=-1)
    return np.maximum(m, 0.0)  # round-off can dip below zero when all logits are equal


def sparsity_score(Q: np.ndarray, K: np.ndarray) -> SparsityScores:
    Q, K = np.asarray(Q, float), np.asarray(K, float)
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"query/key widths differ: {Q.shape} vs {K.shape}")
    return SparsityScores(scores_from_logits(Q @ K.T / math.sqrt(Q.shape[1])))


def top_u_indices(m: np.ndarray, u: int) -> np.ndarray:
    """Indices of the ``u`` largest entries along the last axis, ties to the lower index."""
    order = np.argsort(-m, axis=-1, kind="stable")
    return order[..., :u]


def select_top_u(scores: SparsityScores, u: int) -> SparseSelection:
    L_Q = len(scores.m)
    if not 1 <= u <= L_Q:
        raise ValueError(f"u must lie in [1, {L_Q}], got {u}")
    return SparseSelection(u, np.sort(top_u_indices(scores.m, u)))


def _softmax_vec(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def full_attention(Q, K, V, counter: OpCounter | None = None) -> np.ndarray:
    Q, K, V = (np.asarray(a, float) for a in (Q, K, V))
    logits = Q @ K.T / math.sqrt(Q.shape[1])
    if counter is not None:
        counter.add(Q.shape[0] * K.shape[0])
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return (e / e.sum(axis=1, keepdims=True)) @ V


def probsparse_attention(Q, K, V, selection: SparseSelection, lazy_mode: str = "mean",
                         counter: OpCounter | None = None) -> np.ndarray:
    """Sparse attention for one head, counting output-phase dot products.

    Active queries attend to every key. Lazy queries get the mean of V
    (``mean``) or attend only to the ``u`` keys with the largest column-max
    score (``topk``).
    """
    if lazy_mode not in LAZY_MODES:
        raise ValueError(f"lazy_mode must be one of {LAZY_MODES}, got {lazy_mode!r}")
    Q, K, V = (np.asarray(a, float) for a in (Q, K, V))
    L_Q, d = Q.shape
    L_K = K.shape[0]
    scale = math.sqrt(d)
    counter = counter if counter is not None else OpCounter()
    out = np.empty((L_Q, V.shape[1]))
    active = np.zeros(L_Q, dtype=bool)
    active[selection.active] = True

    for i in selection.active:
        counter.add(L_K)
        out[i] = _softmax_vec(K @ Q[i] / scale) @ V
    lazy = np.flatnonzero(~active)
    if len(lazy) == 0:
        return out
    if lazy_mode == "mean":
        out[lazy] = V.mean(axis=0)
        return out
    # key ranking comes from the (uncounted) scoring pass
    col_max = (Q @ K.T / scale).max(axis=0)
    keys = np.sort(top_u_indices(col_max, min(selection.u, L_K)))
    Ks, Vs = K[keys], V[keys]
    for i in lazy:
        counter.add(len(keys))
        out[i] = _softmax_vec(Ks @ Q[i] / scale) @ Vs
    return out


def count_ops(call, *args, **kwargs) -> OpCounter:
    """Run ``call(*args, counter=..., **kwargs)`` and return its dot-product count."""
    counter = OpCounter()
    call(*args, counter=counter, **kwargs)
    return counter


def sparse_attention_core(Q: nk.Tensor, K: nk.Tensor, V: nk.Tensor, cfg: ProbSparseConfig) -> nk.Tensor:
    """Batched ProbSparse attention over ``(..., L, d_head)`` tensors."""
    L_Q, L_K, dh = Q.shape[-2], K.shape[-2], Q.shape[-1]
    logits = nk.swap_last(K)
    logits = nk.mul(nk.matmul(Q, logits), 1.0 / math.sqrt(dh))
    probs = nk.softmax(logits, axis=-1)
    dense = nk.matmul(probs, V)
    u = cfg.u_for(L_Q, L_K)
    if u >= L_Q:
        return dense

    m = scores_from_logits(logits.data)
    picked = top_u_indices(m, u)
    active = np.zeros(m.shape, dtype=bool)
    np.put_along_axis(active, picked, True, axis=-1)
    active = active[..., None]

    if cfg.lazy_mode == "mean":
        lazy = nk.tmean(V, axis=-2, keepdims=True)
        lazy = nk.add(lazy, np.zeros(dense.shape))
    else:
        col_max = logits.data.max(axis=-2)
        keys = top_u_indices(col_max, min(u, L_K))
        keymask = np.zeros(col_max.shape, dtype=bool)
        np.put_along_axis(keymask, keys, True, axis=-1)
        keymask = np.broadcast_to(keymask[..., None, :], logits.shape)
        restricted = nk.softmax(nk.where(keymask, logits, -np.inf), axis=-1)
        lazy = nk.matmul(restricted, V)
    return nk.where(active, dense, lazy)
