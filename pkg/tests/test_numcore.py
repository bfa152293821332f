import numpy as np
import pytest

from bicaption.errors import ShapeError
from bicaption.numcore import (as_matrix, as_vector, log_softmax, matvec,
                               relu, sigmoid, softmax, tanh_act)


class TestMatvec:
    def test_identity(self):
        np.testing.assert_array_equal(
            matvec(np.eye(3), np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_zero_matrix_annihilates(self):
        np.testing.assert_array_equal(
            matvec(np.zeros((2, 3)), np.array([5.0, 5.0, 5.0])), [0.0, 0.0])

    def test_hand_case(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matvec(m, np.array([1.0, 1.0])), [3.0, 7.0])

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
            matvec(np.zeros((2, 3)), np.zeros(2))

    def test_distributes_over_addition(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.normal(size=(16, 16))
            a = rng.normal(size=16)
            b = rng.normal(size=16)
            lhs = matvec(m, a + b)
            rhs = matvec(m, a) + matvec(m, b)
            denom = np.maximum(np.abs(lhs), 1e-300)
            assert np.max(np.abs(lhs - rhs) / denom) < 1e-12


class TestSigmoid:
    def test_zero_is_half(self):
        np.testing.assert_array_equal(sigmoid(np.zeros(2)), [0.5, 0.5])

    def test_saturates_without_overflow(self):
        np.testing.assert_array_equal(sigmoid(np.array([1e9])), [1.0])
        np.testing.assert_array_equal(sigmoid(np.array([-1e9])), [0.0])

    def test_value_at_one(self):
        # high-precision reference: 0.731058578630004879...
        np.testing.assert_allclose(sigmoid(np.array([1.0])),
                                   [0.7310585786300049], rtol=0, atol=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-50, 50, size=1000)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0,
                                   rtol=0, atol=1e-15)

    def test_open_interval(self):
        x = np.linspace(-30, 30, 101)
        s = sigmoid(x)
        assert np.all(s > 0) and np.all(s < 1)


class TestTanh:
    def test_odd_at_zero(self):
        np.testing.assert_array_equal(tanh_act(np.array([0.0])), [0.0])

    def test_odd_symmetry(self):
        x = np.array([0.7])
        np.testing.assert_array_equal(tanh_act(-x), -tanh_act(x))

    def test_value_at_one(self):
        # high-precision reference: 0.761594155955764888...
        np.testing.assert_allclose(tanh_act(np.array([1.0])),
                                   [0.7615941559557649], rtol=0, atol=1e-15)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3),
                                   rtol=0, atol=1e-15)

    def test_shift_invariance(self):
        z = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(z + 100.0), softmax(z),
                                   rtol=0, atol=1e-15)

    def test_direct_formula(self):
        np.testing.assert_allclose(
            softmax(np.array([1.0, 2.0, 3.0])),
            [0.09003057317038046, 0.24472847105479764, 0.6652409557748218],
            rtol=0, atol=1e-15)

    def test_probability_vector_for_large_magnitudes(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            z = rng.uniform(-1e3, 1e3, size=rng.integers(1, 12))
            p = softmax(z)
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            softmax(np.array([]))


class TestLogSoftmax:
    def test_matches_log_of_softmax(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=9)
        np.testing.assert_allclose(log_softmax(z), np.log(softmax(z)),
                                   rtol=0, atol=1e-12)

    def test_finite_for_extreme_logits(self):
        z = np.array([0.0, -2000.0, 500.0])
        out = log_softmax(z)
        assert np.all(np.isfinite(out))
        assert np.all(out <= 0)


class TestRelu:
    def test_definition(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])),
                                      [0.0, 0.0, 2.0])

    def test_all_negative(self):
        np.testing.assert_array_equal(relu(np.array([-3.0, -0.5])), [0.0, 0.0])

    def test_identity_on_positive(self):
        np.testing.assert_array_equal(relu(np.array([3.5])), [3.5])

    def test_idempotent_exact(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=64)
        once = relu(v)
        np.testing.assert_array_equal(relu(once), once)


class TestCoercions:
    def test_as_vector_rejects_matrix(self):
        with pytest.raises(ShapeError):
            as_vector(np.zeros((2, 2)))

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(ShapeError):
            as_matrix(np.array([[np.nan, 0.0]]))

    def test_as_vector_rejects_inf(self):
        with pytest.raises(ShapeError):
            as_vector(np.array([np.inf]))
