"""Deep Koopformer: Transformer encoder, stable linear latent step, linear decoder.

The latent operator is ``K = U diag(S) V^T`` with ``U``, ``V`` the
Householder-QR orthogonal factors of unconstrained matrices and
``S = 0.99 * sigmoid(S_raw)``, so ``||K||_2 = max(S) < 0.99`` for any raw
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import blocks
from . import numkernel as nk
from .probsparse import ProbSparseConfig

SPECTRAL_CAP = 0.99
BACKBONES = ("patchtst", "autoformer", "informer")


def householder_orthogonalize(A) -> nk.Tensor:
    """Orthogonal QR factor of a square matrix via Householder reflections.

    Columns are signed so that R has a non-negative diagonal. Built from
    kernel ops, so gradients flow through every reflection.
    """
    A = nk.as_tensor(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {A.shape}")
    R, Q = A, nk.Tensor(np.eye(n))
    for k in range(n - 1):
        x = R[k:, k:k + 1]
        s = 1.0 if x.data[0, 0] >= 0 else -1.0
        norm_x = nk.sqrt(nk.tsum(nk.mul(x, x)))
        e1 = np.zeros((n - k, 1))
        e1[0, 0] = s
        if not np.any(x.data):
            continue  # column already reduced; the rank check below catches it
        v = nk.add(x, nk.mul(norm_x, e1))  # x + sign(x0) ||x|| e1
        if k:
            v = nk.concat([np.zeros((k, 1)), v], axis=0)
        scale = nk.div(2.0, nk.tsum(nk.mul(v, v)))
        vt = nk.transpose(v)
        R = nk.sub(R, nk.mul(scale, nk.matmul(v, nk.matmul(vt, R))))
        Q = nk.sub(Q, nk.mul(scale, nk.matmul(nk.matmul(Q, v), vt)))
    diag = np.diag(R.data)
    if not np.all(np.abs(diag) >= 1e-12):
        raise np.linalg.LinAlgError("matrix is numerically rank deficient")
    signs = np.where(diag < 0, -1.0, 1.0)
    return nk.mul(Q, signs[None, :])


@dataclass
class KoopmanOperator:
    U_raw: nk.Tensor
    V_raw: nk.Tensor
    S_raw: nk.Tensor

    @classmethod
    def init(cls, n: int, rng: np.random.Generator) -> "KoopmanOperator":
        return cls(nk.init_weight(rng, n, (n, n)), nk.init_weight(rng, n, (n, n)), nk.init_zeros((n,)))

    @property
    def n(self) -> int:
        return self.S_raw.shape[0]

    def parameters(self) -> list[nk.Tensor]:
        return [self.U_raw, self.V_raw, self.S_raw]

    def singular_values(self) -> nk.Tensor:
        return nk.mul(nk.sigmoid(self.S_raw), SPECTRAL_CAP)

    def max_singular_value(self) -> float:
        return float(self.singular_values().data.max())


def koopman_matrix(op: KoopmanOperator) -> nk.Tensor:
    U = householder_orthogonalize(op.U_raw)
    V = householder_orthogonalize(op.V_raw)
    S = nk.reshape(op.singular_values(), (op.n, 1))
    return nk.matmul(U, nk.mul(S, nk.transpose(V)))


def lyapunov_loss(z_t, z_next) -> nk.Tensor:
    """Batch mean of ReLU(||z_next||^2 - ||z_t||^2)."""
    z_t, z_next = nk.as_tensor(z_t), nk.as_tensor(z_next)
    if z_t.shape != z_next.shape:
        raise ValueError(f"latent shapes differ: {z_t.shape} vs {z_next.shape}")
    grow = nk.sub(nk.tsum(nk.mul(z_next, z_next), axis=-1), nk.tsum(nk.mul(z_t, z_t), axis=-1))
    return nk.tmean(nk.relu(grow))


@dataclass
class LossBreakdown:
    mse: nk.Tensor
    lyapunov: nk.Tensor
    total: nk.Tensor


def koopformer_loss(y_hat, y, z_t, z_next, lam: float = 0.1) -> LossBreakdown:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    err = nk.mse(y_hat, y)
    lyap = lyapunov_loss(z_t, z_next)
    return LossBreakdown(err, lyap, nk.add(err, nk.mul(lyap, lam)))


@dataclass(frozen=True)
class KoopformerConfig:
    P: int
    H: int
    d_state: int
    backbone: str = "patchtst"
    d_model: int = 16
    heads: int = 2
    d_ff: int = 64
    enc_layers: int = 2
    d_latent: int = 16
    k_ma: int = 3
    probsparse: ProbSparseConfig = field(default_factory=ProbSparseConfig)

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; expected one of {BACKBONES}")

    @property
    def mha(self) -> blocks.MHAConfig:
        return blocks.MHAConfig(self.d_model, self.heads)


@dataclass
class KoopformerModel:
    config: KoopformerConfig
    params: dict
    operator: KoopmanOperator

    def parameters(self) -> list[nk.Tensor]:
        out = []
        stack = [self.params]
        while stack:
            tree = stack.pop(0)
            for v in tree.values():
                if isinstance(v, dict):
                    stack.append(v)
                else:
                    out.append(v)
        return out + self.operator.parameters()


def build_koopformer(config: KoopformerConfig, seed: int) -> KoopformerModel:
    c = config
    rng = nk.make_rng(seed)
    in_dim = c.P * c.d_state if c.backbone == "patchtst" else c.d_state
    p = {"embed": blocks.linear_params(rng, in_dim, c.d_model),
         "enc": {str(i): blocks.encoder_layer_params(rng, c.d_model, c.d_ff) for i in range(c.enc_layers)},
         "to_latent": blocks.linear_params(rng, c.d_model, c.d_latent)}
    if c.backbone == "autoformer":
        p["trend_latent"] = blocks.linear_params(rng, c.P * c.d_state, c.d_latent)
    p["decoder"] = blocks.linear_params(rng, c.d_latent, c.H * c.d_state)
    return KoopformerModel(c, p, KoopmanOperator.init(c.d_latent, rng))


def encode(m: KoopformerModel, x: np.ndarray) -> nk.Tensor:
    c, p = m.config, m.params
    B = x.shape[0]
    trend = None
    if c.backbone == "patchtst":
        tokens = x.reshape(B, 1, c.P * c.d_state)
    elif c.backbone == "autoformer":
        parts = blocks.decompose(x, c.k_ma, axis=1)
        tokens, trend = parts.seasonal, parts.trend.reshape(B, c.P * c.d_state)
    else:
        tokens = x
    z = nk.add(blocks.linear(tokens, p["embed"]["W"], p["embed"]["b"]),
               blocks.sinusoidal_pe(tokens.shape[1], c.d_model))
    sparse = c.probsparse if c.backbone == "informer" else None
    for i in range(c.enc_layers):
        z = blocks.encoder_layer(z, c.mha, p["enc"][str(i)], sparse)
    latent = blocks.linear(blocks.avg_pool_tokens(z), p["to_latent"]["W"], p["to_latent"]["b"])
    if trend is not None:
        latent = nk.add(latent, blocks.linear(trend, p["trend_latent"]["W"], p["trend_latent"]["b"]))
    return latent


def koopformer_forward(m: KoopformerModel, x, K: nk.Tensor | None = None):
    """Returns ``(y_hat (B, H, d_state), z_t, z_next)``."""
    c = m.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (c.P, c.d_state):
        raise ValueError(f"expected input of shape (B, {c.P}, {c.d_state}), got {x.shape}")
    K = koopman_matrix(m.operator) if K is None else K
    z_t = encode(m, x)
    z_next = nk.matmul(z_t, nk.transpose(K))
    dec = m.params["decoder"]
    y = blocks.linear(z_next, dec["W"], dec["b"])
    return nk.reshape(y, (x.shape[0], c.H, c.d_state)), z_t, z_next


# training ----------------------------------------------------------------------


def minmax_columns(states: np.ndarray) -> np.ndarray:
    lo, hi = states.min(axis=0), states.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (states - lo) / span


def window_states(states: np.ndarray, P: int, H: int) -> tuple[np.ndarray, np.ndarray]:
    """``(N, P, d)`` inputs and ``(N, H, d)`` targets from a ``(T, d)`` trajectory."""
    T = len(states)
    if T < P + H:
        raise ValueError(f"trajectory of length {T} too short for P + H = {P + H}")
    frames = np.lib.stride_tricks.sliding_window_view(states, P + H, axis=0)  # N, d, P+H
    frames = np.transpose(frames, (0, 2, 1))
    return frames[:, :P].copy(), frames[:, P:].copy()


@dataclass
class KoopformerRun:
    model: KoopformerModel
    history: list[dict]  # per epoch: epoch, mse, lyapunov, total, max_singular_value
    spectral_trace: np.ndarray  # epochs x d_latent, singular values sorted descending
    test_inputs: np.ndarray
    test_targets: np.ndarray
    test_pred: np.ndarray
    test_rmse: float


def predict_koopformer(m: KoopformerModel, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    with nk.no_grad():
        K = koopman_matrix(m.operator)
        return np.concatenate([koopformer_forward(m, x[i:i + chunk], K)[0].data
                               for i in range(0, len(x), chunk)], axis=0)


def train_koopformer(states: np.ndarray, config: KoopformerConfig, epochs: int, lr: float = 1e-3,
                     lam: float = 0.1, seed: int = 0, batch_size: int | None = None,
                     split_fraction: float = 0.8, log_every: int = 0) -> KoopformerRun:
    """Fit a Koopformer on a min-max normalized trajectory.

    ``batch_size=None`` takes one full-batch Adam step per epoch; otherwise each
    epoch is a seeded shuffled pass of mini-batches and the logged losses are
    the batch means.
    """
    data = minmax_columns(np.asarray(states, dtype=np.float64))
    X, Y = window_states(data, config.P, config.H)
    n_train = int(len(X) * split_fraction)
    if n_train < 1 or n_train >= len(X):
        raise ValueError("split leaves an empty train or test set")
    Xtr, Ytr = X[:n_train], Y[:n_train]
    model = build_koopformer(config, seed)
    params = model.parameters()
    opt = nk.Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    history, trace = [], []
    for epoch in range(1, epochs + 1):
        if batch_size is None:
            batches = [np.arange(n_train)]
        else:
            perm = rng.permutation(n_train)
            batches = [perm[i:i + batch_size] for i in range(0, n_train, batch_size)]
        sums = np.zeros(3)
        for idx in batches:
            y_hat, z_t, z_next = koopformer_forward(model, Xtr[idx])
            parts = koopformer_loss(y_hat, Ytr[idx], z_t, z_next, lam)
            nk.backward(parts.total, params)
            opt.step()
            sums += len(idx) * np.array([parts.mse.data, parts.lyapunov.data, parts.total.data], dtype=float)
        mse_, lyap_, total_ = sums / n_train
        sv = np.sort(model.operator.singular_values().data)[::-1]
        trace.append(sv)
        history.append({"epoch": epoch, "mse": mse_, "lyapunov": lyap_, "total": total_,
                        "max_singular_value": float(sv[0])})
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch}: total={total_:.6f} sigma_max={history[-1]['max_singular_value']:.4f}")
    pred = predict_koopformer(model, X[n_train:])
    rmse = float(np.sqrt(np.mean((pred - Y[n_train:]) ** 2)))
    return KoopformerRun(model, history, np.array(trace), X[n_train:], Y[n_train:], pred, rmse)
