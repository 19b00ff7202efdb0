import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfmetric.data import Dataset
from kfmetric.errors import InputError, NumericError
from kfmetric.kernels import (
    KernelBank,
    KernelMatrix,
    KernelSpec,
    bank_over,
    combine_convex,
    combine_sm,
    eval_kernel,
    gram,
    rms_width,
    width_grid,
)

finite_vec = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=6
)


def min_eig_ratio(K):
    vals = np.linalg.eigvalsh(K)
    scale = max(vals.max(), 1e-300)
    return vals.min() / scale


class TestEvalKernel:
    def test_rbf_identical_points(self):
        for sigma in (0.3, 1.0, 17.0):
            assert eval_kernel(KernelSpec("rbf", sigma), [1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_rbf_at_two_sigma_squared(self):
        # ||x-y||^2 = 2 sigma^2  ->  exp(-1)
        sigma = 1.7
        x = np.zeros(3)
        y = np.array([sigma * math.sqrt(2.0), 0.0, 0.0])
        val = eval_kernel(KernelSpec("rbf", sigma), x, y)
        assert val == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_linear_dot_product(self):
        assert eval_kernel(KernelSpec("linear"), [1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_poly2_is_shifted_square(self):
        assert eval_kernel(KernelSpec("poly2"), [1.0, 2.0], [3.0, 4.0]) == (11.0 + 1.0) ** 2

    def test_dimension_mismatch(self):
        with pytest.raises(InputError, match="mismatch"):
            eval_kernel(KernelSpec("linear"), [1.0], [1.0, 2.0])

    def test_invalid_spec(self):
        with pytest.raises(InputError):
            KernelSpec("rbf", -1.0)
        with pytest.raises(InputError):
            KernelSpec("sigmoid", 1.0)

    @given(x=finite_vec, y=finite_vec)
    @settings(max_examples=50, deadline=None)
    def test_symmetry_exact(self, x, y):
        if len(x) != len(y):
            x = (x + y)[: min(len(x), len(y))]
            y = y[: len(x)]
        for spec in (KernelSpec("rbf", 2.0), KernelSpec("linear"), KernelSpec("poly2")):
            assert eval_kernel(spec, x, y) == eval_kernel(spec, y, x)


class TestGram:
    def test_single_sample_rbf(self):
        K = gram(KernelSpec("rbf", 1.0), np.array([[0.5, 1.5]]))
        np.testing.assert_array_equal(K.values, [[1.0]])

    def test_square_gram_exactly_symmetric(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(9, 4))
        K = gram(KernelSpec("rbf", 0.8), X).values
        np.testing.assert_array_equal(K, K.T)

    def test_three_points_scalar_loop_oracle(self):
        X = np.array([[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0]])
        spec = KernelSpec("rbf", 1.0)
        K = gram(spec, X).values
        for u in range(3):
            for v in range(3):
                assert K[u, v] == pytest.approx(eval_kernel(spec, X[u], X[v]), abs=1e-15)

    def test_rbf_diagonal_ones_and_range(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(12, 3)) * 100.0
        # width comparable to the data scale, so no exp underflow to 0
        K = gram(KernelSpec("rbf", 100.0), X).values
        np.testing.assert_array_equal(np.diag(K), np.ones(12))
        assert np.all(K > 0.0) and np.all(K <= 1.0)

    def test_cross_gram_shape_and_values(self):
        rng = np.random.default_rng(2)
        X, Y = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        spec = KernelSpec("linear")
        C = gram(spec, Y, X).values
        assert C.shape == (6, 4)
        assert C[2, 1] == pytest.approx(float(Y[2] @ X[1]))

    def test_empty_rejected(self):
        with pytest.raises(InputError, match="empty"):
            gram(KernelSpec("linear"), np.empty((0, 3)))

    def test_basis_tracking(self):
        X = np.eye(3)
        K = gram(KernelSpec("linear"), X, row_basis=(4, 5, 6))
        assert K.row_basis == (4, 5, 6)
        assert K.col_basis == (4, 5, 6)
        assert K.is_square_basis


class TestRmsWidth:
    def _ds(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n = rows.shape[0]
        return Dataset(rows, tuple(f"i{k}" for k in range(n)), tuple(k % 2 for k in range(n)))

    def test_two_points_distance_three(self):
        ds = self._ds([[0.0], [3.0]])
        assert rms_width(ds, [0, 1]) == pytest.approx(3.0, rel=1e-14)

    def test_identical_points_error(self):
        ds = self._ds([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
        with pytest.raises(NumericError, match="identical"):
            rms_width(ds, [0, 1, 2])

    def test_three_point_enumeration(self):
        # pairs: 1, 9, 4 -> sqrt(14/3)
        ds = self._ds([[0.0], [1.0], [3.0]])
        assert rms_width(ds, [0, 1, 2]) == pytest.approx(math.sqrt(14.0 / 3.0), rel=1e-14)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(10, 5))
        Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        shifted = X @ Q.T + rng.normal(size=5) * 1e3
        a = rms_width(self._ds(X), range(10))
        b = rms_width(self._ds(shifted), range(10))
        assert abs(a - b) / a < 1e-10

    def test_needs_two_samples(self):
        ds = self._ds([[0.0], [1.0]])
        with pytest.raises(InputError, match="at least 2"):
            rms_width(ds, [0])


class TestWidthGrid:
    def test_endpoints(self):
        assert width_grid(1.0, 2, 0.1, 10.0) == pytest.approx([0.1, 10.0], rel=1e-14)

    def test_geometric_midpoint(self):
        assert width_grid(1.0, 3, 0.1, 10.0) == pytest.approx([0.1, 1.0, 10.0], rel=1e-12)

    def test_constant_ratio_q20(self):
        widths = width_grid(2.5, 20, 0.1, 10.0)
        ratios = [widths[k + 1] / widths[k] for k in range(19)]
        assert ratios == pytest.approx([100.0 ** (1.0 / 19.0)] * 19, rel=1e-10)
        assert widths[0] == pytest.approx(0.25, rel=1e-12)
        assert widths[-1] == pytest.approx(25.0, rel=1e-12)

    def test_invalid_ranges(self):
        with pytest.raises(InputError):
            width_grid(1.0, 5, 10.0, 0.1)
        with pytest.raises(InputError):
            width_grid(1.0, 1, 0.1, 10.0)
        with pytest.raises(InputError):
            width_grid(-1.0, 5, 0.1, 10.0)


class TestCombineConvex:
    def _bank(self, mats):
        specs = tuple(KernelSpec("rbf", float(k + 1)) for k in range(len(mats)))
        return KernelBank(specs, tuple(KernelMatrix(np.asarray(m, dtype=float)) for m in mats))

    def test_one_hot_returns_that_kernel(self):
        mats = [np.eye(2), [[2.0, 0.5], [0.5, 2.0]], [[3.0, 0.0], [0.0, 1.0]]]
        bank = self._bank(mats)
        out = combine_convex(bank, [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(out.values, np.asarray(mats[1]))

    def test_equal_kernels_any_weights(self):
        m = np.array([[1.0, 0.2], [0.2, 1.0]])
        bank = self._bank([m, m, m])
        out = combine_convex(bank, [0.2, 0.5, 0.3])
        np.testing.assert_allclose(out.values, m, atol=1e-15)

    def test_hand_weighted_sum(self):
        K1 = np.array([[1.0, 0.5], [0.5, 1.0]])
        K2 = np.array([[2.0, 1.0], [1.0, 3.0]])
        out = combine_convex(self._bank([K1, K2]), [0.25, 0.75])
        np.testing.assert_allclose(
            out.values, [[1.75, 0.875], [0.875, 2.5]], atol=1e-15
        )

    def test_weight_constraints(self):
        bank = self._bank([np.eye(2), np.eye(2)])
        with pytest.raises(InputError, match="non-negative"):
            combine_convex(bank, [-0.1, 1.1])
        with pytest.raises(InputError, match="sum to 1"):
            combine_convex(bank, [0.6, 0.6])
        with pytest.raises(InputError, match="expected 2"):
            combine_convex(bank, [1.0])


class TestCombineSm:
    def test_equal_inputs_vanishing_difference(self):
        K = KernelMatrix(np.array([[2.0, 0.3], [0.3, 1.0]]))
        out = combine_sm(K, K, tau=5.0)
        np.testing.assert_allclose(out.values, K.values, atol=1e-15)

    def test_tau_zero_is_average(self):
        K1 = KernelMatrix(np.array([[2.0, 0.0], [0.0, 4.0]]))
        K2 = KernelMatrix(np.array([[1.0, 0.0], [0.0, 2.0]]))
        out = combine_sm(K1, K2, tau=0.0)
        np.testing.assert_allclose(out.values, [[1.5, 0.0], [0.0, 3.0]], atol=1e-15)

    def test_hand_two_by_two(self):
        K1 = KernelMatrix(np.array([[2.0, 0.0], [0.0, 1.0]]))
        K2 = KernelMatrix(np.eye(2))
        out = combine_sm(K1, K2, tau=1.0)
        np.testing.assert_allclose(out.values, [[2.5, 0.0], [0.0, 1.0]], atol=1e-15)

    def test_errors(self):
        K1 = KernelMatrix(np.eye(2), row_basis=(0, 1), col_basis=(0, 1))
        K2 = KernelMatrix(np.eye(2), row_basis=(2, 3), col_basis=(2, 3))
        with pytest.raises(InputError, match="basis"):
            combine_sm(K1, K2, tau=0.1)
        with pytest.raises(InputError, match="non-negative"):
            combine_sm(K1, K1, tau=-0.5)
        K3 = KernelMatrix(np.ones((2, 3)))
        with pytest.raises(InputError, match="square"):
            combine_sm(K3, K3, tau=0.1)


class TestPsdProperties:
    def test_rbf_grams_psd(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n, d = rng.integers(4, 30), rng.integers(2, 8)
            X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
            K = gram(KernelSpec("rbf", float(rng.uniform(0.2, 20))), X).values
            assert min_eig_ratio(K) >= -1e-8

    def test_convex_combination_preserves_psd(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n = int(rng.integers(3, 15))
            q = int(rng.integers(2, 5))
            X = rng.normal(size=(n, 4))
            specs = [KernelSpec("rbf", float(rng.uniform(0.3, 5))) for _ in range(q)]
            bank = bank_over(specs, X)
            beta = rng.dirichlet(np.ones(q))
            beta = beta / beta.sum()
            out = combine_convex(bank, beta)
            assert min_eig_ratio(out.values) >= -1e-8

    def test_sm_combination_preserves_psd(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            n = int(rng.integers(2, 12))
            A1 = rng.normal(size=(n, n))
            A2 = rng.normal(size=(n, n))
            K1 = KernelMatrix(A1 @ A1.T)
            K2 = KernelMatrix(A2 @ A2.T)
            out = combine_sm(K1, K2, tau=float(rng.uniform(0, 3)))
            np.testing.assert_array_equal(out.values, out.values.T)
            assert min_eig_ratio(out.values) >= -1e-8


class TestKernelMatrixValidation:
    def test_asymmetric_with_equal_bases_rejected(self):
        with pytest.raises(NumericError, match="symmetric"):
            KernelMatrix(
                np.array([[1.0, 0.5], [0.6, 1.0]]), row_basis=(0, 1), col_basis=(0, 1)
            )

    def test_square_cross_matrix_is_not_a_gram(self):
        # square but asymmetric with no bases: a cross matrix, accepted
        cross = KernelMatrix(np.array([[1.0, 0.5], [0.6, 1.0]]))
        assert not cross.is_square_basis
        with pytest.raises(InputError, match="symmetric"):
            combine_sm(cross, cross, tau=0.1)

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError, match="non-finite"):
            KernelMatrix(np.array([[1.0, np.inf], [np.inf, 1.0]]))

    def test_bank_requires_common_basis(self):
        K1 = KernelMatrix(np.eye(2), row_basis=(0, 1), col_basis=(0, 1))
        K2 = KernelMatrix(np.eye(2), row_basis=(5, 6), col_basis=(5, 6))
        with pytest.raises(InputError, match="basis"):
            KernelBank((KernelSpec("linear"), KernelSpec("linear")), (K1, K2))
