import math

import numpy as np
import pytest

from gridlstm.core import (CellCoreParams, CellState, bidirectional_rollout,
                           cellular_lstm_step, lstm_step, rollout,
                           step_backward)
from gridlstm.errors import EmptyInputError, ShapeError
from gridlstm.kernels import make_rng


def scalar_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def random_core(rng, m=2, g=3, q=1, use_bias=False):
    return CellCoreParams.random(m, g, rng, neighbor_outputs=q, use_bias=use_bias)


class TestLstmStep:
    def test_zero_weights_fixed_point(self):
        p = CellCoreParams(2, 3)
        x = np.array([0.7, -1.3])
        state, tape = lstm_step(p, x, CellState.zeros(3))
        np.testing.assert_array_equal(state.h, np.zeros(3))
        np.testing.assert_array_equal(state.s, np.zeros(3))
        np.testing.assert_array_equal(tape.i[0], np.full(3, 0.5))
        np.testing.assert_array_equal(tape.g[0], np.zeros(3))

    def test_scalar_oracle(self):
        # G=1, m=1 with hand-picked weights: every gate evaluated by hand.
        p = CellCoreParams(1, 1)
        p.W_i[:] = 0.3
        p.W_f[:] = -0.2
        p.W_o[:] = 0.5
        p.W_s[:] = 0.7
        p.U_i[:] = 0.11
        p.U_f[:] = -0.13
        p.U_o[:] = 0.17
        p.U_s[:] = 0.19
        x = 0.5
        state, _ = lstm_step(p, np.array([x]), CellState.zeros(1))
        i = scalar_sigmoid(0.3 * x)
        f = scalar_sigmoid(-0.2 * x)
        o = scalar_sigmoid(0.5 * x)
        g = math.tanh(0.7 * x)
        s = f * 0.0 + i * g
        h = o * math.tanh(s)
        assert state.s[0] == pytest.approx(s, rel=1e-14)
        assert state.h[0] == pytest.approx(h, rel=1e-14)

    def test_hidden_bounded_even_with_huge_memory(self):
        rng = make_rng(0)
        p = random_core(rng)
        prev = CellState(np.zeros(3), np.full(3, 1e12))
        state, _ = lstm_step(p, rng.normal(size=2), prev)
        assert np.all(np.abs(state.h) < 1.0)

    def test_gate_ranges(self):
        rng = make_rng(1)
        p = random_core(rng)
        state = CellState.zeros(3)
        for t in range(10):
            state, tape = lstm_step(p, rng.normal(size=2), state)
            for gate in (tape.i, tape.f, tape.o):
                assert np.all((gate > 0.0) & (gate < 1.0))
            assert np.all((state.h > -1.0) & (state.h < 1.0))

    def test_shape_errors(self):
        p = CellCoreParams(2, 3)
        with pytest.raises(ShapeError):
            lstm_step(p, np.zeros(5), CellState.zeros(3))
        with pytest.raises(ShapeError):
            lstm_step(p, np.zeros(2), CellState.zeros(4))


class TestCellularStep:
    def test_zero_neighbors_reduce_to_plain_step(self):
        rng = make_rng(2)
        for _ in range(100):
            g = int(rng.integers(1, 6))
            m = int(rng.integers(1, 4))
            q = int(rng.integers(1, g + 1))
            p = random_core(rng, m=m, g=g, q=q)
            x = rng.normal(size=m)
            prev = CellState(rng.normal(size=g), rng.normal(size=g))
            plain, _ = lstm_step(p, x, prev)
            cellular, _ = cellular_lstm_step(p, x, np.zeros(4 * q), prev)
            np.testing.assert_array_equal(plain.h, cellular.h)
            np.testing.assert_array_equal(plain.s, cellular.s)

    def test_zero_neighbor_weights_decouple(self):
        rng = make_rng(3)
        p = random_core(rng, q=2)
        for name in ("W_Ni", "W_Nf", "W_No", "W_Ns"):
            getattr(p, name)[:] = 0.0
        x = rng.normal(size=2)
        n = rng.normal(size=8)
        prev = CellState(rng.normal(size=3), rng.normal(size=3))
        plain, _ = lstm_step(p, x, prev)
        cellular, _ = cellular_lstm_step(p, x, n, prev)
        np.testing.assert_array_equal(plain.h, cellular.h)

    def test_scalar_oracle_with_neighbors(self):
        p = CellCoreParams(1, 1, neighbor_outputs=1)
        p.W_i[:] = 0.3
        p.W_f[:] = -0.2
        p.W_o[:] = 0.5
        p.W_s[:] = 0.7
        p.U_i[:] = 0.11
        p.U_f[:] = -0.13
        p.U_o[:] = 0.17
        p.U_s[:] = 0.19
        p.W_Ni[:] = np.array([0.1, -0.2, 0.3, 0.4])
        p.W_Nf[:] = np.array([0.2, 0.1, -0.1, 0.05])
        p.W_No[:] = np.array([-0.3, 0.2, 0.1, 0.0])
        p.W_Ns[:] = np.array([0.25, -0.15, 0.05, 0.35])
        x, h0, s0 = 0.4, 0.2, -0.1
        n = np.array([0.2, -0.1, 0.0, 0.3])
        state, _ = cellular_lstm_step(p, np.array([x]), n, CellState(np.array([h0]), np.array([s0])))
        i = scalar_sigmoid(0.3 * x + float(p.W_Ni[0] @ n) + 0.11 * h0)
        f = scalar_sigmoid(-0.2 * x + float(p.W_Nf[0] @ n) - 0.13 * h0)
        o = scalar_sigmoid(0.5 * x + float(p.W_No[0] @ n) + 0.17 * h0)
        g = math.tanh(0.7 * x + float(p.W_Ns[0] @ n) + 0.19 * h0)
        s = f * s0 + i * g
        h = o * math.tanh(s)
        assert state.s[0] == pytest.approx(s, rel=1e-12)
        assert state.h[0] == pytest.approx(h, rel=1e-12)

    def test_neighbor_shape_error(self):
        p = CellCoreParams(2, 3, neighbor_outputs=2)
        with pytest.raises(ShapeError):
            cellular_lstm_step(p, np.zeros(2), np.zeros(5), CellState.zeros(3))


def fd_step_grads(p, x, n, prev, c_h, c_s, eps=1e-6):
    """Finite differences of L = c_h . h + c_s . s over every parameter."""

    def loss():
        if n is None:
            state, _ = lstm_step(p, x, prev)
        else:
            state, _ = cellular_lstm_step(p, x, n, prev)
        return float(c_h @ state.h + c_s @ state.s)

    out = {}
    for name, arr in p.named_arrays():
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss()
            flat[idx] = orig - eps
            down = loss()
            flat[idx] = orig
            gflat[idx] = (up - down) / (2 * eps)
        out[name] = grad
    return out


def rel_err(a, b, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


class TestStepBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = make_rng(4)
        p = random_core(rng, q=1)
        prev = CellState(rng.normal(size=3), rng.normal(size=3))
        _, tape = cellular_lstm_step(p, rng.normal(size=2), rng.normal(size=4), prev)
        grads, gx, ghp, gsp, gn = step_backward(p, tape, np.zeros(3), np.zeros(3))
        for _, arr in grads.named_arrays():
            np.testing.assert_array_equal(arr, np.zeros_like(arr))
        for vec in (gx, ghp, gsp, gn):
            np.testing.assert_array_equal(vec, np.zeros_like(vec))

    def test_matches_finite_differences(self):
        rng = make_rng(5)
        for trial in range(5):
            g, m, q = 3, 2, 1
            p = random_core(rng, m=m, g=g, q=q, use_bias=(trial % 2 == 0))
            x = rng.normal(size=m)
            n = rng.normal(size=4 * q)
            prev = CellState(rng.normal(size=g), rng.normal(size=g))
            c_h = rng.normal(size=g)
            c_s = rng.normal(size=g)
            _, tape = cellular_lstm_step(p, x, n, prev)
            grads, gx, ghp, gsp, gn = step_backward(p, tape, c_h, c_s)
            numeric = fd_step_grads(p, x, n, prev, c_h, c_s)
            for name, arr in grads.named_arrays():
                assert rel_err(arr, numeric[name]) < 1e-6, name

    def test_input_grads_match_finite_differences(self):
        rng = make_rng(6)
        p = random_core(rng, m=2, g=3, q=1)
        x = rng.normal(size=2)
        n = rng.normal(size=4)
        prev = CellState(rng.normal(size=3), rng.normal(size=3))
        c_h = rng.normal(size=3)
        c_s = rng.normal(size=3)
        _, tape = cellular_lstm_step(p, x, n, prev)
        _, gx, ghp, gsp, gn = step_backward(p, tape, c_h, c_s)
        eps = 1e-6

        def loss(xv, nv, hv, sv):
            state, _ = cellular_lstm_step(p, xv, nv, CellState(hv, sv))
            return float(c_h @ state.h + c_s @ state.s)

        for vec, grad in ((x, gx), (n, gn), (prev.h, ghp), (prev.s, gsp)):
            numeric = np.zeros_like(vec)
            for idx in range(vec.size):
                orig = vec[idx]
                vec[idx] = orig + eps
                up = loss(x, n, prev.h, prev.s)
                vec[idx] = orig - eps
                down = loss(x, n, prev.h, prev.s)
                vec[idx] = orig
                numeric[idx] = (up - down) / (2 * eps)
            assert rel_err(grad, numeric) < 1e-6

    def test_zero_weight_closed_form_candidate_grad(self):
        # All weights zero, zero prev state: gates are 1/2, candidate 0,
        # s = 0, so dL/dW_s = c_h * o * tanh'(0) * i * tanh'(0) * x
        #                  = c_h * 0.5 * 0.5 * x  (tanh'(0) = 1).
        p = CellCoreParams(1, 1)
        x = np.array([0.8])
        _, tape = lstm_step(p, x, CellState.zeros(1))
        c_h = np.array([1.3])
        grads, *_ = step_backward(p, tape, c_h, np.zeros(1))
        expected = c_h[0] * 0.5 * 0.5 * x[0]
        assert grads.W_s[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_tape_shape_mismatch(self):
        rng = make_rng(7)
        p = random_core(rng)
        _, tape = lstm_step(p, rng.normal(size=2), CellState.zeros(3))
        with pytest.raises(ShapeError):
            step_backward(p, tape, np.zeros(4), np.zeros(3))


class TestBidirectionalRollout:
    def test_single_step_symmetry(self):
        rng = make_rng(8)
        fwd = random_core(rng)
        bwd = fwd.copy()
        x = rng.normal(size=(1, 2))
        h_f, h_b, _ = bidirectional_rollout(fwd, bwd, x)
        np.testing.assert_array_equal(h_f, h_b)

    def test_palindrome_symmetry(self):
        rng = make_rng(9)
        fwd = random_core(rng)
        bwd = fwd.copy()
        half = rng.normal(size=(3, 2))
        x = np.concatenate([half, half[::-1]])
        h_f, h_b, _ = bidirectional_rollout(fwd, bwd, x)
        np.testing.assert_array_equal(h_f, h_b)

    def test_backward_equals_forward_on_reversed_sequence(self):
        rng = make_rng(10)
        fwd = random_core(rng)
        bwd = random_core(rng)
        x = rng.normal(size=(5, 2))
        _, h_b, _ = bidirectional_rollout(fwd, bwd, x)
        state, _ = rollout(bwd, x[::-1])
        np.testing.assert_array_equal(h_b, state.h)

    def test_empty_sequence_rejected(self):
        rng = make_rng(11)
        fwd = random_core(rng)
        with pytest.raises(EmptyInputError):
            bidirectional_rollout(fwd, fwd.copy(), np.zeros((0, 2)))

    def test_dim_mismatch_rejected(self):
        rng = make_rng(12)
        with pytest.raises(ShapeError):
            bidirectional_rollout(random_core(rng, g=3), random_core(rng, g=4),
                                  np.zeros((2, 2)))


class TestGradientAccumulationOrder:
    def test_sum_matches_per_step_order(self):
        # Accumulating step grads in reverse time order (as BPTT does)
        # agrees with forward-order accumulation to 1e-12.
        rng = make_rng(13)
        p = random_core(rng, q=1)
        x = rng.normal(size=(6, 2))
        n = rng.normal(size=(6, 4))
        _, tapes = rollout(p, x, n)
        c_h = rng.normal(size=3)
        per_step = []
        for tape in tapes:
            grads, *_ = step_backward(p, tape, c_h, np.zeros(3))
            per_step.append(grads)
        fwd_sum = {name: np.zeros_like(arr) for name, arr in p.named_arrays()}
        bwd_sum = {name: np.zeros_like(arr) for name, arr in p.named_arrays()}
        for grads in per_step:
            for name, arr in grads.named_arrays():
                fwd_sum[name] += arr
        for grads in reversed(per_step):
            for name, arr in grads.named_arrays():
                bwd_sum[name] += arr
        for name in fwd_sum:
            np.testing.assert_allclose(fwd_sum[name], bwd_sum[name],
                                       rtol=1e-12, atol=1e-12)
