"""
Dense attention, ProbSparse attention and what they cost
=========================================================

ProbSparse attention scores every query by how peaked its attention would be,
runs full attention only for the top u queries and fills the rest lazily.
"""

import numpy as np

from compactformer import probsparse as ps

rng = np.random.default_rng(0)

# one head, 64 positions, 8 features per position
L, d = 64, 8
Q, K, V = (rng.normal(size=(L, d)) for _ in range(3))

# sparsity score: max minus mean of the scaled logits, one number per query
scores = ps.sparsity_score(Q, K)
u = ps.sample_size(L, L)  # min(L, ceil(5 ln L))
sel = ps.select_top_u(scores, u)
print(f"u = {u} active queries out of {L}: {sel.active[:8].tolist()} ...")

# active rows agree with full attention; lazy rows get a cheap fill
full = ps.full_attention(Q, K, V)
for mode in ps.LAZY_MODES:
    out = ps.probsparse_attention(Q, K, V, sel, mode)
    err_active = np.abs(out[sel.active] - full[sel.active]).max()
    err_all = np.abs(out - full).max()
    print(f"lazy={mode:5s}  active rows max diff {err_active:.1e}, all rows max diff {err_all:.3f}")

# count the dot products of the output phase, dense against sparse
print("\n   L    dense   sparse  ratio")
for L in (32, 64, 128, 256):
    Q, K, V = (rng.normal(size=(L, d)) for _ in range(3))
    sel = ps.select_top_u(ps.sparsity_score(Q, K), ps.sample_size(L, L))
    dense = ps.count_ops(ps.full_attention, Q, K, V).dot_products
    sparse = ps.count_ops(ps.probsparse_attention, Q, K, V, sel, "topk").dot_products
    print(f"{L:4d} {dense:8d} {sparse:8d}  {sparse / dense:.3f}")
