import numpy as np
import pytest

from errors import ShapeError, ValidationError
from kernel_mmd import (KernelSpec, gram_matrix, mmd2_biased, mmd2_biased_grad_wrt_Y,
                        mmd2_unbiased, rbf_kernel)
from nn_core import numerical_gradient, relative_error

MIXTURE = KernelSpec((2.0, 5.0, 10.0, 20.0, 40.0, 80.0))


def _k(x, y, spec):
    return sum(w * rbf_kernel(x, y, s) for s, w in spec.terms())


def _naive_biased(X, Y, spec):
    n, m = len(X), len(Y)
    xx = sum(_k(a, b, spec) for a in X for b in X) / (n * n)
    yy = sum(_k(a, b, spec) for a in Y for b in Y) / (m * m)
    xy = sum(_k(a, b, spec) for a in X for b in Y) / (n * m)
    return xx + yy - 2.0 * xy


def _naive_unbiased(X, Y, spec):
    n, m = len(X), len(Y)
    xx = sum(_k(X[i], X[j], spec) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    yy = sum(_k(Y[i], Y[j], spec) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    xy = sum(_k(a, b, spec) for a in X for b in Y) / (n * m)
    return xx + yy - 2.0 * xy


class TestRbf:
    def test_self_similarity(self):
        assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0

    def test_unit_distance(self):
        assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(np.exp(-0.5))

    def test_decays_with_distance(self):
        assert rbf_kernel([0.0], [3.0], 1.0) < rbf_kernel([0.0], [1.0], 1.0)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValidationError):
            rbf_kernel([0.0], [1.0], 0.0)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ShapeError):
            rbf_kernel([0.0], [1.0, 2.0], 1.0)


def test_kernel_spec_validation():
    with pytest.raises(ValidationError):
        KernelSpec(())
    with pytest.raises(ValidationError):
        KernelSpec((1.0, -2.0))
    with pytest.raises(ValidationError):
        KernelSpec((1.0, 2.0), weights=(1.0,))


def test_mixture_gram_is_sum_of_parts(rng):
    X, Y = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    parts = sum(gram_matrix(X, Y, KernelSpec((s,))) for s in MIXTURE.bandwidths)
    np.testing.assert_allclose(gram_matrix(X, Y, MIXTURE), parts, rtol=1e-12)


class TestBiased:
    def test_identical_samples(self):
        X = [[0.0, 0.0], [1.0, 1.0]]
        assert mmd2_biased(X, X, KernelSpec((1.0,))) == pytest.approx(0.0, abs=1e-15)

    def test_single_points(self):
        expected = 2.0 - 2.0 * np.exp(-0.5)
        assert mmd2_biased([[0.0]], [[1.0]], KernelSpec((1.0,))) == pytest.approx(expected)

    def test_symmetry(self, rng):
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        assert mmd2_biased(X, Y, MIXTURE) == pytest.approx(mmd2_biased(Y, X, MIXTURE), abs=1e-14)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            n, m, d = rng.integers(1, 11), rng.integers(1, 11), rng.integers(1, 4)
            X, Y = rng.normal(size=(n, d)), rng.normal(0.5, 1.5, size=(m, d))
            spec = KernelSpec(tuple(rng.uniform(0.5, 3.0, size=rng.integers(1, 4))))
            assert mmd2_biased(X, Y, spec) == pytest.approx(_naive_biased(X, Y, spec), abs=1e-12)
            assert mmd2_biased(X, Y, spec) >= -1e-12

    def test_separates_distributions(self):
        rng = np.random.default_rng(3)
        spec = KernelSpec((1.0,))
        same = mmd2_biased(rng.normal(size=(300, 1)), rng.normal(size=(300, 1)), spec)
        shifted = mmd2_biased(rng.normal(size=(300, 1)), rng.normal(3.0, 1.0, size=(300, 1)), spec)
        assert shifted > 10 * same

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            mmd2_biased(np.zeros((2, 2)), np.zeros((2, 3)), KernelSpec((1.0,)))

    def test_empty_sample(self):
        with pytest.raises(ValidationError):
            mmd2_biased(np.zeros((0, 2)), np.zeros((2, 2)), KernelSpec((1.0,)))


class TestUnbiased:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n, m, d = rng.integers(2, 11), rng.integers(2, 11), rng.integers(1, 4)
            X, Y = rng.normal(size=(n, d)), rng.normal(size=(m, d))
            spec = KernelSpec(tuple(rng.uniform(0.5, 3.0, size=rng.integers(1, 4))))
            assert mmd2_unbiased(X, Y, spec) == pytest.approx(_naive_unbiased(X, Y, spec), abs=1e-12)

    def test_duplicate_rows_well_defined(self):
        value = mmd2_unbiased([[1.0, 1.0], [1.0, 1.0]], [[0.0, 0.0], [2.0, 0.0]], KernelSpec((1.0,)))
        assert np.isfinite(value)

    def test_can_be_negative(self):
        rng = np.random.default_rng(12)
        spec = KernelSpec((1.0,))
        values = [mmd2_unbiased(rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), spec) for _ in range(50)]
        assert min(values) < 0.0

    def test_centered_on_zero_for_equal_distributions(self):
        rng = np.random.default_rng(13)
        spec = KernelSpec((1.0,))
        values = np.array([mmd2_unbiased(rng.normal(size=(20, 2)), rng.normal(size=(20, 2)), spec)
                           for _ in range(400)])
        assert abs(values.mean()) < 3.0 * values.std(ddof=1) / np.sqrt(len(values))

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            mmd2_unbiased([[0.0]], [[1.0], [2.0]], KernelSpec((1.0,)))


class TestGradient:
    def test_zero_at_identical_multisets(self):
        X = np.array([[0.0, 1.0], [2.0, -1.0]])
        np.testing.assert_allclose(mmd2_biased_grad_wrt_Y(X, X.copy(), MIXTURE), 0.0, atol=1e-15)

    def test_matches_finite_differences(self, rng):
        X, Y = rng.normal(size=(5, 3)), rng.normal(0.3, 1.2, size=(4, 3))
        spec = KernelSpec((1.0, 2.0))
        numeric = numerical_gradient(lambda: mmd2_biased(X, Y, spec), Y)
        assert relative_error(mmd2_biased_grad_wrt_Y(X, Y, spec), numeric) < 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_random_instances(self, seed):
        rng = np.random.default_rng(200 + seed)
        n, m, d = rng.integers(2, 8), rng.integers(2, 8), rng.integers(1, 4)
        X, Y = rng.normal(size=(n, d)), rng.normal(size=(m, d))
        spec = KernelSpec(tuple(rng.uniform(0.5, 2.0, size=rng.integers(1, 3))))
        numeric = numerical_gradient(lambda: mmd2_biased(X, Y, spec), Y)
        assert relative_error(mmd2_biased_grad_wrt_Y(X, Y, spec), numeric) < 1e-5

    def test_descent_reduces_discrepancy(self, rng):
        X, Y = rng.normal(size=(30, 2)), rng.normal(2.0, 1.0, size=(30, 2))
        spec = KernelSpec((1.0,))
        before = mmd2_biased(X, Y, spec)
        Y_next = Y - 0.5 * mmd2_biased_grad_wrt_Y(X, Y, spec)
        assert mmd2_biased(X, Y_next, spec) < before
