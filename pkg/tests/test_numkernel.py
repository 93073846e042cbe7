import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from compactformer import numkernel as nk

from gradcheck import fd_check
from oracles import matmul_loops


class TestMatmul:
    def test_identity(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.matmul(np.eye(2), b).data, b)

    def test_basis_selection(self):
        assert nk.matmul(np.array([[1.0, 0.0]]), np.array([[0.0], [5.0]])).data.tolist() == [[0.0]]

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(nk.matmul(a, b).data, matmul_loops(a, b), atol=1e-12)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            nk.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_gradient_is_transposed_products(self):
        rng = np.random.default_rng(0)
        A, B = nk.parameter(rng.normal(size=(3, 4))), nk.parameter(rng.normal(size=(4, 2)))
        G = rng.normal(size=(3, 2))
        nk.backward(nk.tsum(nk.mul(nk.matmul(A, B), G)), [A, B])
        np.testing.assert_allclose(A.grad, G @ B.data.T, atol=1e-12)
        np.testing.assert_allclose(B.grad, A.data.T @ G, atol=1e-12)


class TestSoftmax:
    def test_uniform_row(self):
        np.testing.assert_allclose(nk.softmax_rows(np.zeros((1, 4))).data, [[0.25] * 4])

    def test_large_equal_logits_do_not_overflow(self):
        np.testing.assert_allclose(nk.softmax_rows(np.array([[1000.0, 1000.0]])).data, [[0.5, 0.5]])

    def test_log_three(self):
        np.testing.assert_allclose(nk.softmax_rows(np.array([[0.0, math.log(3)]])).data, [[0.25, 0.75]],
                                   atol=1e-15)

    @given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_rows_sum_to_one_and_shift_invariant(self, x, c):
        p = nk.softmax_rows(x).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(nk.softmax_rows(x + c).data, p, atol=1e-12)

    def test_rows_only(self):
        with pytest.raises(ValueError):
            nk.softmax_rows(np.zeros(3))


class TestLayerNorm:
    def test_constant_vector_maps_to_zero(self):
        out = nk.layer_norm(np.full((1, 4), 3.0), np.ones(4), np.zeros(4)).data
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_two_values(self):
        out = nk.layer_norm(np.array([[1.0, 3.0]]), np.ones(2), np.zeros(2)).data
        np.testing.assert_allclose(out, [[-1.0, 1.0]], atol=1e-3)
        # frozen: 1 / sqrt(1 + 1e-5)
        np.testing.assert_allclose(out, [[-0.99999500004, 0.99999500004]], atol=1e-10)

    def test_beta_is_added(self):
        x = np.array([[1.0, 3.0]])
        base = nk.layer_norm(x, np.ones(2), np.zeros(2)).data
        np.testing.assert_allclose(nk.layer_norm(x, np.ones(2), np.full(2, 5.0)).data, base + 5.0)


class TestBackward:
    def test_square(self):
        x = nk.parameter(np.array(3.0))
        nk.backward(nk.mul(x, x), [x])
        assert x.grad == 6.0

    def test_sum_of_matmul_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        A, B = nk.parameter(rng.uniform(-1, 1, (3, 4))), nk.parameter(rng.uniform(-1, 1, (4, 2)))
        assert fd_check(lambda: nk.tsum(nk.matmul(A, B)), [A, B], n_checks=12) < 1e-6

    def test_disconnected_parameter_gets_zero(self):
        x, y = nk.parameter(np.ones(3)), nk.parameter(np.ones(2))
        y.grad = np.full(2, 7.0)
        nk.backward(nk.tsum(x), [x, y])
        np.testing.assert_array_equal(y.grad, 0.0)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            nk.backward(nk.parameter(np.ones(2)))

    def test_repeat_runs_are_bit_identical(self):
        rng = np.random.default_rng(2)
        W = nk.parameter(rng.normal(size=(4, 4)))
        x = rng.normal(size=(5, 4))
        loss = nk.tsum(nk.layer_norm(nk.relu(nk.matmul(x, W)), np.ones(4), np.zeros(4)))
        nk.backward(loss, [W])
        first = W.grad.copy()
        nk.backward(loss, [W])
        assert first.tobytes() == W.grad.tobytes()

    def test_tape_is_topological(self):
        a = nk.parameter(np.ones(2))
        b = nk.mul(a, 2.0)
        loss = nk.tsum(nk.add(b, nk.exp(b)))
        tape = nk.backward(loss, [a])
        pos = {id(n): i for i, n in enumerate(tape.nodes)}
        assert len(pos) == len(tape.nodes)  # each node once
        for n in tape.nodes:
            for parent in n._parents:
                if id(parent) in pos:
                    assert pos[id(parent)] < pos[id(n)]

    def test_no_grad_builds_no_graph(self):
        w = nk.parameter(np.ones(2))
        with nk.no_grad():
            out = nk.mul(w, 3.0)
        assert not out.requires_grad


UNARY = {
    "relu": nk.relu, "sigmoid": nk.sigmoid, "exp": nk.exp,
    "sqrt": lambda t: nk.sqrt(nk.add(nk.mul(t, t), 1.0)),
    "softmax": lambda t: nk.softmax(t, axis=-1),
    "layer_norm": lambda t: nk.layer_norm(t, np.linspace(0.5, 1.5, 4), np.linspace(-1, 1, 4)),
    "transpose": lambda t: nk.transpose(t),
    "reshape": lambda t: nk.reshape(t, (4, 3)),
    "mean_axis": lambda t: nk.tmean(t, axis=0, keepdims=True),
    "index": lambda t: t[1:, ::2],
    "concat": lambda t: nk.concat([t, nk.mul(t, t)], axis=1),
    "where": lambda t: nk.where(np.eye(3, 4, dtype=bool), t, nk.mul(t, 2.0)),
}


class TestGradients:
    @pytest.mark.parametrize("name", sorted(UNARY))
    def test_unary_ops(self, name):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        x = nk.parameter(rng.uniform(-1, 1, (3, 4)))
        weights = rng.normal(size=UNARY[name](x).shape)
        err = fd_check(lambda: nk.tsum(nk.mul(UNARY[name](x), weights)), [x], n_checks=12)
        assert err < 1e-6

    @pytest.mark.parametrize("op", [nk.add, nk.sub, nk.mul, nk.div])
    def test_broadcasting_binary_ops(self, op):
        rng = np.random.default_rng(5)
        a = nk.parameter(rng.uniform(-1, 1, (3, 4)))
        b = nk.parameter(rng.uniform(0.5, 1.5, (4,)))
        w = rng.normal(size=(3, 4))
        assert fd_check(lambda: nk.tsum(nk.mul(op(a, b), w)), [a, b], n_checks=14) < 1e-6

    def test_mse(self):
        rng = np.random.default_rng(6)
        p = nk.parameter(rng.uniform(-1, 1, (2, 3)))
        y = rng.uniform(-1, 1, (2, 3))
        assert fd_check(lambda: nk.mse(p, y), [p]) < 1e-6


class TestMSE:
    def test_values(self):
        assert nk.mse(np.zeros(2), np.zeros(2)).data == 0.0
        assert nk.mse(np.ones(2), np.zeros(2)).data == 1.0
        assert nk.mse(np.array([0.0, 3.0]), np.zeros(2)).data == 4.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nk.mse(np.zeros(2), np.zeros(3))


class TestAdam:
    def test_zero_gradient_is_a_no_op(self):
        p = nk.parameter(np.array([1.0, -2.0]))
        state = nk.AdamState.for_params([p])
        nk.adam_step([p], [np.zeros(2)], state)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        p = nk.parameter(np.array([0.0, 0.0]))
        g = np.array([3.0, -0.5])
        state = nk.AdamState.for_params([p])
        nk.adam_step([p], [g], state)
        expected = -1e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.data, expected, rtol=1e-12)

    def test_scalar_descent_converges(self):
        x = nk.parameter(np.array(0.0))
        opt = nk.Adam([x], lr=0.1)
        for _ in range(100):
            diff = nk.sub(x, 2.0)
            nk.backward(nk.mul(diff, diff), [x])
            opt.step()
        assert abs(x.data - 2.0) < 1e-2

    def test_shape_mismatch(self):
        p = nk.parameter(np.zeros(2))
        with pytest.raises(ValueError):
            nk.adam_step([p], [np.zeros(3)], nk.AdamState.for_params([p]))

    def test_matches_hand_rolled_second_step(self):
        p = nk.parameter(np.array([1.0]))
        state = nk.AdamState.for_params([p], lr=0.01)
        g1, g2 = np.array([0.4]), np.array([-0.2])
        nk.adam_step([p], [g1], state)
        nk.adam_step([p], [g2], state)
        m1, v1 = 0.1 * g1, 0.001 * g1**2
        step1 = 0.01 * (m1 / 0.1) / (np.sqrt(v1 / 0.001) + 1e-8)
        m2, v2 = 0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2**2
        step2 = 0.01 * (m2 / (1 - 0.81)) / (np.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
        np.testing.assert_allclose(p.data, 1.0 - step1 - step2, rtol=1e-12)
        assert state.step_count == 2


class TestInit:
    def test_uniform_bounds(self):
        w = nk.init_weight(nk.make_rng(0), 16, (16, 8))
        assert np.all(np.abs(w.data) <= 0.25)
        assert w.requires_grad

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_seeded_init_is_reproducible(self, seed):
        a = nk.init_weight(nk.make_rng(seed), 4, (4, 4)).data
        b = nk.init_weight(nk.make_rng(seed), 4, (4, 4)).data
        assert a.tobytes() == b.tobytes()
