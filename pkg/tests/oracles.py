"""Slow, literal reference implementations used as test oracles.

Nothing here imports the library's kernel: each routine is written with plain
Python loops or straight-line numpy so that agreement is meaningful.
"""

import math

import numpy as np


def matmul_loops(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def softmax_vec(z):
    z = np.asarray(z, float)
    e = np.array([math.exp(v - max(z)) for v in z])
    return e / e.sum()


def layer_norm_vec(x, g, b, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return np.array([(v - mu) / math.sqrt(var + eps) for v in x]) * g + b


def layer_norm_tokens(X, g, b):
    return np.array([layer_norm_vec(row, g, b) for row in X])


def attention_single(X_q, X_kv, w, heads):
    """Multi-head attention for one sequence, one head at a time."""
    d = X_q.shape[1]
    dh = d // heads
    Q = X_q @ w["Wq"] + w["bq"]
    K = X_kv @ w["Wk"] + w["bk"]
    V = X_kv @ w["Wv"] + w["bv"]
    out = np.zeros((X_q.shape[0], d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(X_q.shape[0]):
            logits = [float(Q[i, sl] @ K[j, sl]) / math.sqrt(dh) for j in range(K.shape[0])]
            a = softmax_vec(logits)
            out[i, sl] = sum(a[j] * V[j, sl] for j in range(K.shape[0]))
    return out @ w["Wo"] + w["bo"]


def ffn_single(X, w):
    return np.maximum(X @ w["W1"] + w["b1"], 0.0) @ w["W2"] + w["b2"]


def encoder_layer_single(X, w, heads):
    X = layer_norm_tokens(X + attention_single(X, X, w["attn"], heads), w["ln1"]["g"], w["ln1"]["b"])
    return layer_norm_tokens(X + ffn_single(X, w["ffn"]), w["ln2"]["g"], w["ln2"]["b"])


def decoder_layer_single(Xd, Henc, w, heads):
    X = layer_norm_tokens(Xd + attention_single(Xd, Xd, w["self_attn"], heads), w["ln1"]["g"], w["ln1"]["b"])
    X = layer_norm_tokens(X + attention_single(X, Henc, w["cross_attn"], heads), w["ln2"]["g"], w["ln2"]["b"])
    return layer_norm_tokens(X + ffn_single(X, w["ffn"]), w["ln3"]["g"], w["ln3"]["b"])


def sinusoid(L, d):
    table = np.zeros((L, d))
    for pos in range(L):
        for k in range(d // 2):
            angle = pos / 10000 ** (2 * k / d)
            table[pos, 2 * k] = math.sin(angle)
            table[pos, 2 * k + 1] = math.cos(angle)
    return table


def patchtst_full_single(x, w, H, heads):
    """Encoder-decoder forecast for one window, spelled out step by step.

    1. embed each input step, add the sinusoidal table, run the encoder stack
    2. build the decoder input by repeating the last value H times
    3. embed it, add the table for H positions, run the decoder stack
    4. project every decoder token to one output value
    """
    P = len(x)
    d = w["embed_enc"]["W"].shape[1]
    Z = np.array([[x[t]] for t in range(P)]) @ w["embed_enc"]["W"] + w["embed_enc"]["b"] + sinusoid(P, d)
    for i in sorted(w["enc"], key=int):
        Z = encoder_layer_single(Z, w["enc"][i], heads)
    x_rep = np.full((H, 1), x[-1])
    D = x_rep @ w["embed_dec"]["W"] + w["embed_dec"]["b"] + sinusoid(H, d)
    for i in sorted(w["dec"], key=int):
        D = decoder_layer_single(D, Z, w["dec"][i], heads)
    return (D @ w["head"]["W"] + w["head"]["b"]).reshape(H)


def probsparse_single(Q, K, V, u, lazy_mode):
    """One-head ProbSparse attention by explicit per-query loops."""
    L_Q, d = Q.shape
    L_K = K.shape[0]
    logits = np.array([[float(Q[i] @ K[j]) / math.sqrt(d) for j in range(L_K)] for i in range(L_Q)])
    M = [max(row) - sum(row) / L_K for row in logits]
    order = sorted(range(L_Q), key=lambda i: (-M[i], i))
    active = set(order[:u])
    col_max = [max(logits[i, j] for i in range(L_Q)) for j in range(L_K)]
    keys = sorted(sorted(range(L_K), key=lambda j: (-col_max[j], j))[:u])
    out = np.zeros((L_Q, V.shape[1]))
    for i in range(L_Q):
        if i in active:
            a = softmax_vec(logits[i])
            out[i] = sum(a[j] * V[j] for j in range(L_K))
        elif lazy_mode == "mean":
            out[i] = V.mean(axis=0)
        else:
            a = softmax_vec([logits[i, j] for j in keys])
            out[i] = sum(a[n] * V[j] for n, j in enumerate(keys))
    return out


def mgs_qr(A):
    """Modified Gram-Schmidt QR with positive R diagonal."""
    A = np.array(A, float)
    n = A.shape[1]
    Q = A.copy()
    R = np.zeros((n, n))
    for k in range(n):
        R[k, k] = np.linalg.norm(Q[:, k])
        Q[:, k] /= R[k, k]
        for j in range(k + 1, n):
            R[k, j] = Q[:, k] @ Q[:, j]
            Q[:, j] -= R[k, j] * Q[:, k]
    return Q, R


def power_iteration_norm(K, iters=100, seed=0):
    """Spectral norm estimate from power iteration on K^T K."""
    v = np.random.default_rng(seed).normal(size=K.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = K.T @ (K @ v)
        v = w / np.linalg.norm(w)
    return float(np.linalg.norm(K @ v))
