import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fluxwarn.errors import DimensionMismatch
from fluxwarn.lstm import (
    AdamState,
    GATES,
    LstmParams,
    LstmState,
    _gates,
    adam_step,
    backward,
    cell_step,
    forward,
    grad_check,
    loss_mse,
    numeric_gradient,
)

from lstm_oracle import naive_forward


def random_params(rng, n_inputs=3, hidden=4, horizon=3, scale=0.5):
    p = LstmParams.init(n_inputs, hidden, horizon, rng)
    return p.map(lambda a: a + rng.normal(0, scale, a.shape))


def gate_lists(params):
    W = {g: getattr(params, f"W_{g}").tolist() for g in GATES}
    U = {g: getattr(params, f"U_{g}").tolist() for g in GATES}
    b = {g: getattr(params, f"b_{g}").tolist() for g in GATES}
    return W, U, b, params.V.tolist(), params.c_out.tolist()


class TestParams:
    def test_gate_views_round_trip(self, rng):
        p = random_params(rng)
        q = LstmParams.from_gates(*[{g: getattr(p, f"{k}_{g}") for g in GATES} for k in "WUb"], p.V, p.c_out)
        for name in p.arrays():
            np.testing.assert_array_equal(p.arrays()[name], q.arrays()[name])

    def test_init_bounds(self, rng):
        p = LstmParams.init(9, 16, 3, rng)
        assert np.abs(p.W).max() <= 1 / 3
        assert np.abs(p.U).max() <= 1 / 4
        np.testing.assert_array_equal(p.b_f, 1.0)
        np.testing.assert_array_equal(p.b_i, 0.0)

    def test_inconsistent_dims(self):
        with pytest.raises(DimensionMismatch):
            LstmParams(np.zeros((8, 3)), np.zeros((8, 3)), np.zeros(8), np.zeros((3, 2)), np.zeros(3))


class TestCellStep:
    def test_zero_everything(self):
        p = LstmParams.zeros(3, 4, 3)
        i, f, o, g = _gates(np.zeros(3), np.zeros(4), p)
        assert np.all(i == 0.5) and np.all(f == 0.5) and np.all(o == 0.5) and np.all(g == 0)
        s = cell_step(np.zeros(3), LstmState.zeros(4), p)
        assert np.all(s.c == 0) and np.all(s.h == 0)

    def test_zero_params_unit_cell(self):
        p = LstmParams.zeros(3, 4, 3)
        s = cell_step(np.ones(3), LstmState(np.zeros(4), np.ones(4)), p)
        np.testing.assert_allclose(s.c, 0.5, rtol=0, atol=1e-15)
        np.testing.assert_allclose(s.h, 0.5 * math.tanh(0.5), rtol=0, atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cell_step(np.zeros(2), LstmState.zeros(4), LstmParams.zeros(3, 4, 3))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 5, elements=st.floats(-1e6, 1e6)), st.integers(0, 2**31))
    def test_gate_ranges(self, x, seed):
        p = random_params(np.random.default_rng(seed), n_inputs=5, scale=2.0)
        h = np.random.default_rng(seed + 1).uniform(-1, 1, 4)
        i, f, o, g = _gates(x, h, p)
        for gate in (i, f, o):
            assert np.all(np.isfinite(gate)) and np.all((gate >= 0) & (gate <= 1))
        assert np.all((g >= -1) & (g <= 1))
        # strictly inside for moderate pre-activations
        small = _gates(np.clip(x, -1, 1), h, p)
        for gate in small[:3]:
            assert np.all((gate > 0) & (gate < 1))
        assert np.all(np.abs(small[3]) < 1)


class TestForward:
    def test_zero_params_gives_bias(self, rng):
        p = LstmParams.zeros(3, 4, 3)
        p.c_out[:] = [1.0, -2.0, 0.5]
        pred, _ = forward(rng.normal(size=(6, 3)), p)
        np.testing.assert_array_equal(pred, [1.0, -2.0, 0.5])

    def test_lookback_one_is_cell_then_affine(self, rng):
        p = random_params(rng)
        x = rng.normal(size=3)
        s = cell_step(x, LstmState.zeros(4), p)
        pred, _ = forward(x[None], p)
        np.testing.assert_allclose(pred, p.V @ s.h + p.c_out, rtol=1e-14)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            p = random_params(rng, n_inputs=4, hidden=5, horizon=3)
            w = rng.normal(size=(6, 4))
            pred, _ = forward(w, p)
            np.testing.assert_allclose(pred, naive_forward(w.tolist(), *gate_lists(p)), rtol=0, atol=1e-12)

    def test_batch_equals_singles(self, rng):
        p = random_params(rng)
        X = rng.normal(size=(7, 5, 3))
        batch, _ = forward(X, p)
        for b in range(7):
            np.testing.assert_allclose(batch[b], forward(X[b], p)[0], rtol=1e-13)

    def test_deterministic(self, rng):
        p = random_params(rng)
        w = rng.normal(size=(6, 3))
        assert forward(w, p)[0].tobytes() == forward(w, p)[0].tobytes()

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            forward(rng.normal(size=(6, 2)), random_params(rng))


class TestLoss:
    def test_values(self):
        assert loss_mse([1, 2, 3], [1, 2, 3]) == 0
        assert loss_mse([0, 0, 0], [1, 1, 1]) == 1
        assert loss_mse([1, 2], [3, 2]) == 2

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            loss_mse([1, 2], [1, 2, 3])


class TestBackward:
    def test_zero_loss_zero_grad(self, rng):
        p = random_params(rng)
        w = rng.normal(size=(4, 3))
        pred, tape = forward(w, p)
        for arr in backward(tape, pred).arrays().values():
            assert np.all(arr == 0)

    def test_output_bias_gradient(self, rng):
        p = random_params(rng)
        pred, tape = forward(rng.normal(size=(4, 3)), p)
        target = rng.normal(size=3)
        np.testing.assert_allclose(backward(tape, target).c_out, 2 * (pred - target) / 3, rtol=1e-14)

    def test_matches_central_differences(self, rng):
        p = random_params(rng)
        w = rng.normal(size=(4, 3))
        y = rng.normal(size=3)
        analytic = backward(forward(w, p)[1], y)
        numeric = numeric_gradient(p, w, y, 1e-5)
        for name, a in analytic.arrays().items():
            np.testing.assert_allclose(a, numeric.arrays()[name], rtol=1e-4, atol=1e-7)

    def test_batch_gradient_is_mean(self, rng):
        p = random_params(rng)
        X = rng.normal(size=(5, 4, 3))
        Y = rng.normal(size=(5, 3))
        gb = backward(forward(X, p)[1], Y)
        singles = [backward(forward(X[b], p)[1], Y[b]) for b in range(5)]
        for name, arr in gb.arrays().items():
            np.testing.assert_allclose(arr, sum(s.arrays()[name] for s in singles) / 5, rtol=1e-12, atol=1e-15)


class TestAdam:
    def test_zero_gradient_fresh_state(self, rng):
        p = random_params(rng)
        new, state = adam_step(p, p.map(np.zeros_like), AdamState.fresh(p), 1e-3)
        for name, arr in new.arrays().items():
            np.testing.assert_array_equal(arr, p.arrays()[name])
        assert state.t == 1

    def test_first_step_magnitude_is_lr(self, rng):
        p = random_params(rng)
        g = p.map(lambda a: rng.choice([-1, 1], a.shape) * rng.uniform(0.1, 10, a.shape))
        lr = 1e-5
        new, _ = adam_step(p, g, AdamState.fresh(p), lr)
        for name, arr in new.arrays().items():
            step = p.arrays()[name] - arr
            np.testing.assert_allclose(step, lr * np.sign(g.arrays()[name]), rtol=1e-6)

    def test_two_scalar_steps_closed_form(self):
        # scalar oracle: x0 = 1.0, g1 = 0.5, g2 = -2.0, lr = 0.1
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.1
        m1, v1 = 0.1 * 0.5, 0.001 * 0.25
        x1 = 1.0 - lr * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + eps)
        m2 = b1 * m1 + 0.1 * -2.0
        v2 = b2 * v1 + 0.001 * 4.0
        x2 = x1 - lr * (m2 / (1 - b1 ** 2)) / (math.sqrt(v2 / (1 - b2 ** 2)) + eps)

        def scalar(v):
            q = LstmParams.zeros(1, 1, 1)
            return q.map(lambda a: np.full_like(a, v))

        p = scalar(1.0)
        state = AdamState.fresh(p)
        p, state = adam_step(p, scalar(0.5), state, lr)
        np.testing.assert_allclose(p.c_out, x1, rtol=1e-15)
        p, state = adam_step(p, scalar(-2.0), state, lr)
        np.testing.assert_allclose(p.c_out, x2, rtol=1e-15)
        assert state.t == 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 50))
    def test_zero_grad_identity_with_zero_moments(self, seed, t):
        p = random_params(np.random.default_rng(seed))
        state = AdamState(p.map(np.zeros_like), p.map(np.zeros_like), t)
        new, _ = adam_step(p, p.map(np.zeros_like), state, 0.01)
        for name, arr in new.arrays().items():
            np.testing.assert_array_equal(arr, p.arrays()[name])


class TestGradCheck:
    def test_small_net(self, rng):
        p = random_params(rng)
        assert grad_check(p, rng.normal(size=(4, 3)), rng.normal(size=3)) < 1e-4

    def test_zero_loss(self, rng):
        p = random_params(rng)
        w = rng.normal(size=(4, 3))
        assert grad_check(p, w, forward(w, p)[0]) < 1e-4

    @pytest.mark.parametrize("eps", [0.0, -1e-5])
    def test_rejects_nonpositive_epsilon(self, rng, eps):
        with pytest.raises(ValueError):
            grad_check(random_params(rng), np.zeros((4, 3)), np.zeros(3), eps)

    def test_detects_broken_gradient(self, rng, monkeypatch):
        import fluxwarn.lstm as lstm
        real = lstm.backward

        def broken(tape, target):
            g = real(tape, target)
            g.U *= 1.01
            return g

        monkeypatch.setattr(lstm, "backward", broken)
        p = random_params(rng)
        assert grad_check(p, rng.normal(size=(4, 3)), rng.normal(size=3)) > 1e-3
