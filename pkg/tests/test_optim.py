"""Loss and RMSprop oracles: hand arithmetic and scalar recurrences."""

import math

import numpy as np
import pytest

from tongueage.errors import ShapeError
from tongueage.optim import RmsPropState, mse_loss, rmsprop_step

from gradcheck import finite_difference, rel_error


class TestMseLoss:
    def test_perfect_prediction(self):
        loss, grad = mse_loss(np.array([[2.0]]), np.array([[2.0]]))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, [[0.0]])

    def test_hand_computed_value(self):
        # ((3-1)^2 + (1-1)^2) / 2 = 2
        loss, _ = mse_loss(np.array([[3.0], [1.0]]), np.array([[1.0], [1.0]]))
        assert loss == 2.0

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            n = int(rng.integers(1, 9))
            pred = rng.uniform(-5, 5, (n, 1))
            target = rng.uniform(-5, 5, (n, 1))

            def loss():
                return mse_loss(pred, target)[0]

            _, grad = mse_loss(pred, target)
            assert rel_error(grad, finite_difference(loss, pred)) < 1e-9

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((2, 1)), np.zeros((3, 1)))


def rmsprop_scalar_oracle(theta, grads, lr=0.001, rho=0.9, eps=1e-7):
    """Reference recurrence on python floats, one scalar parameter."""
    v = 0.0
    for g in grads:
        v = rho * v + (1.0 - rho) * g * g
        theta = theta - lr * g / (math.sqrt(v) + eps)
    return theta, v


class TestRmsProp:
    def test_zero_gradient_leaves_params_decays_state(self):
        p = np.array([1.5, -2.0])
        state = RmsPropState()
        state.ensure([p])
        state.v[0][:] = [0.4, 0.1]
        rmsprop_step([p], [np.zeros(2)], state)
        np.testing.assert_array_equal(p, [1.5, -2.0])
        np.testing.assert_allclose(state.v[0], [0.36, 0.09], rtol=1e-15)

    def test_single_step_closed_form(self):
        # fresh state, g=1: v=0.1, delta = -0.001/(sqrt(0.1)+1e-7)
        p = np.array([0.0])
        state = RmsPropState()
        rmsprop_step([p], [np.ones(1)], state)
        assert state.v[0][0] == pytest.approx(0.1, abs=1e-15)
        expected = -0.001 / (math.sqrt(0.1) + 1e-7)
        assert p[0] == pytest.approx(expected, abs=1e-12)
        assert p[0] == pytest.approx(-0.003162, abs=1e-6)

    def test_two_steps_match_scalar_recurrence(self):
        for g in (1.0, -0.3, 2.5):
            p = np.array([0.7])
            state = RmsPropState()
            rmsprop_step([p], [np.full(1, g)], state)
            rmsprop_step([p], [np.full(1, g)], state)
            ref, ref_v = rmsprop_scalar_oracle(0.7, [g, g])
            assert p[0] == pytest.approx(ref, abs=1e-12)
            assert state.v[0][0] == pytest.approx(ref_v, abs=1e-12)

    def test_many_steps_match_scalar_recurrence(self):
        rng = np.random.default_rng(5)
        grads = rng.uniform(-2, 2, 20)
        p = np.array([0.25])
        state = RmsPropState()
        for g in grads:
            rmsprop_step([p], [np.full(1, g)], state)
        ref, _ = rmsprop_scalar_oracle(0.25, grads.tolist())
        assert p[0] == pytest.approx(ref, abs=1e-12)

    def test_update_signs_oppose_gradients(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(-1, 1, 32)
        g = rng.uniform(-1, 1, 32)
        g[g == 0] = 0.5
        before = p.copy()
        rmsprop_step([p], [g], RmsPropState())
        np.testing.assert_array_equal(np.sign(p - before), -np.sign(g))

    def test_state_independent_of_parameter_values(self):
        g = np.random.default_rng(7).uniform(-1, 1, 8)
        s1, s2 = RmsPropState(), RmsPropState()
        rmsprop_step([np.zeros(8)], [g.copy()], s1)
        rmsprop_step([np.full(8, 100.0)], [g.copy()], s2)
        np.testing.assert_array_equal(s1.v[0], s2.v[0])

    def test_accumulator_stays_nonnegative(self):
        rng = np.random.default_rng(8)
        p = rng.uniform(-1, 1, 16)
        state = RmsPropState()
        for _ in range(50):
            rmsprop_step([p], [rng.uniform(-3, 3, 16)], state)
            assert (state.v[0] >= 0).all()

    def test_no_nan_on_finite_input(self):
        p = np.array([1e30, -1e30, 1e-30])
        state = RmsPropState()
        for _ in range(10):
            rmsprop_step([p], [np.array([1e20, -1e20, 1e-20])], state)
            assert np.isfinite(p).all()

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            rmsprop_step([np.zeros(3)], [np.zeros(4)], RmsPropState())
