import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltda.errors import DimensionError, NumericalError
from saltda.subspace import (
    AlignmentMap,
    Subspace,
    align_features,
    alignment_cost,
    closed_form_alignment,
    default_subspace_dim,
    fit_subspace,
    reconstruction_error,
    source_aligned_target_basis,
)


def random_subspace(rng, D, d, center=None):
    q, _ = np.linalg.qr(rng.standard_normal((D, d)))
    return Subspace(q, np.zeros(D) if center is None else center)


def discarded_energy_oracle(X, d):
    # eigenvalues of the centered Gram matrix are the squared singular values
    Xc = X - X.mean(axis=0)
    ev = np.sort(np.linalg.eigvalsh(Xc.T @ Xc))[::-1]
    return float(np.sum(np.clip(ev[d:], 0, None)))


def gradient_descent_alignment(Z_t, Z_s, phi0, steps=5000, lr=0.1):
    phi = phi0.copy()
    for _ in range(steps):
        phi -= lr * 2.0 * Z_t.T @ (Z_t @ phi - Z_s)
    return phi


class TestFitSubspace:
    def test_rank_one_axis(self):
        X = np.array([[1.0, 0, 0], [2, 0, 0], [3, 0, 0]])
        Z = fit_subspace(X, 1)
        np.testing.assert_allclose(Z.basis[:, 0], [1, 0, 0], atol=1e-12)
        np.testing.assert_allclose(Z.center, [2, 0, 0])

    def test_full_rank_retention_has_zero_error(self):
        X = np.random.default_rng(0).standard_normal((6, 4))
        Z = fit_subspace(X, 4)
        assert reconstruction_error(X, Z) < 1e-8

    def test_reconstruction_matches_discarded_singular_values(self):
        X = np.random.default_rng(42).standard_normal((50, 10))
        Z = fit_subspace(X, 3)
        assert abs(reconstruction_error(X, Z) - discarded_energy_oracle(X, 3)) < 1e-8

    def test_orthonormal_and_sign_convention(self):
        X = np.random.default_rng(1).standard_normal((30, 8))
        Z = fit_subspace(X, 5)
        assert Z.orthonormality_error() < 1e-8
        for col in Z.basis.T:
            assert col[np.argmax(np.abs(col))] >= 0

    def test_deterministic(self):
        X = np.random.default_rng(2).standard_normal((40, 7))
        a, b = fit_subspace(X, 3), fit_subspace(X.copy(), 3)
        assert np.array_equal(a.basis, b.basis)

    def test_sign_flip_of_data_gives_same_basis(self):
        X = np.random.default_rng(3).standard_normal((20, 5))
        np.testing.assert_allclose(fit_subspace(X, 2).basis, fit_subspace(-X, 2).basis, atol=1e-12)

    @pytest.mark.parametrize("d", [0, 4, 10])
    def test_rejects_bad_dimension(self, d):
        X = np.random.default_rng(0).standard_normal((4, 6))
        with pytest.raises(DimensionError):
            fit_subspace(X, d)

    def test_rejects_single_sample(self):
        with pytest.raises(DimensionError):
            fit_subspace(np.ones((1, 3)), 1)

    def test_rejects_non_finite(self):
        X = np.random.default_rng(0).standard_normal((5, 3))
        X[2, 1] = np.nan
        with pytest.raises(NumericalError):
            fit_subspace(X, 1)

    def test_error_non_increasing_in_d(self):
        X = np.random.default_rng(5).standard_normal((25, 9))
        errors = [reconstruction_error(X, fit_subspace(X, d)) for d in range(1, 10)]
        assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))

    def test_default_dim(self):
        assert default_subspace_dim(2048, 10_000) == 799
        assert default_subspace_dim(10, 1000) == 4
        assert default_subspace_dim(10, 3) == 2
        assert default_subspace_dim(1, 10) == 1


class TestClosedFormAlignment:
    def test_same_subspace_gives_identity(self):
        Z = random_subspace(np.random.default_rng(0), 6, 3)
        np.testing.assert_allclose(closed_form_alignment(Z, Z).phi, np.eye(3), atol=1e-12)

    def test_swapped_columns(self):
        Z = random_subspace(np.random.default_rng(0), 5, 2)
        swapped = Subspace(Z.basis[:, ::-1], Z.center)
        np.testing.assert_allclose(
            closed_form_alignment(swapped, Z).phi, [[0, 1], [1, 0]], atol=1e-12
        )

    def test_matches_gradient_descent(self):
        rng = np.random.default_rng(7)
        Z_t, Z_s = random_subspace(rng, 6, 2), random_subspace(rng, 6, 2)
        phi_gd = gradient_descent_alignment(Z_t.basis, Z_s.basis, rng.standard_normal((2, 2)))
        cost_gd = alignment_cost(Z_t, AlignmentMap(phi_gd), Z_s)
        cost_cf = alignment_cost(Z_t, closed_form_alignment(Z_t, Z_s), Z_s)
        assert abs(cost_cf - cost_gd) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), eps=st.sampled_from([1e-2, 1e-1]))
    def test_global_optimality(self, seed, eps):
        rng = np.random.default_rng(seed)
        Z_t, Z_s = random_subspace(rng, 8, 3), random_subspace(rng, 8, 3)
        phi = closed_form_alignment(Z_t, Z_s)
        best = alignment_cost(Z_t, phi, Z_s)
        for _ in range(100):
            other = AlignmentMap(phi.phi + eps * rng.standard_normal((3, 3)))
            assert best <= alignment_cost(Z_t, other, Z_s)

    def test_mismatched_dims(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionError):
            closed_form_alignment(random_subspace(rng, 6, 2), random_subspace(rng, 6, 3))
        with pytest.raises(DimensionError):
            closed_form_alignment(random_subspace(rng, 6, 2), random_subspace(rng, 5, 2))


class TestAlignmentCost:
    def test_zero_at_identity(self):
        Z = random_subspace(np.random.default_rng(0), 5, 2)
        assert alignment_cost(Z, AlignmentMap.identity(2), Z) == pytest.approx(0, abs=1e-14)

    def test_zero_map_gives_d(self):
        rng = np.random.default_rng(1)
        Z_t, Z_s = random_subspace(rng, 7, 3), random_subspace(rng, 7, 3)
        assert alignment_cost(Z_t, AlignmentMap(np.zeros((3, 3))), Z_s) == pytest.approx(3.0)

    def test_hand_case(self):
        Z_t = Subspace(np.array([[1.0], [0], [0]]), np.zeros(3))
        Z_s = Subspace(np.array([[0.0], [1], [0]]), np.zeros(3))
        assert alignment_cost(Z_t, AlignmentMap([[1.0]]), Z_s) == 2.0

    def test_wrong_phi_size(self):
        Z = random_subspace(np.random.default_rng(0), 5, 2)
        with pytest.raises(DimensionError):
            alignment_cost(Z, AlignmentMap.identity(3), Z)


class TestAlignFeatures:
    def test_identity_is_orthogonal_projection(self):
        rng = np.random.default_rng(0)
        Z = random_subspace(rng, 6, 2)
        X = rng.standard_normal((9, 6))
        out = align_features(X, Z, AlignmentMap.identity(2), Z)
        np.testing.assert_allclose(out, X @ Z.basis @ Z.basis.T, atol=1e-12)

    def test_center_maps_to_center(self):
        rng = np.random.default_rng(1)
        Z_t = random_subspace(rng, 5, 2, center=rng.standard_normal(5))
        Z_s = random_subspace(rng, 5, 2, center=rng.standard_normal(5))
        phi = AlignmentMap(rng.standard_normal((2, 2)))
        out = align_features(np.tile(Z_t.center, (3, 1)), Z_t, phi, Z_s)
        np.testing.assert_allclose(out, np.tile(Z_s.center, (3, 1)), atol=1e-12)

    def test_hand_built_integer_case(self):
        # Z_t = [e1, e2], Z_s = [e3, e4] (orthonormal), integer phi and data
        Zt = np.zeros((4, 2))
        Zt[0, 0] = Zt[1, 1] = 1
        Zs = np.zeros((4, 2))
        Zs[2, 0] = Zs[3, 1] = 1
        c_t = np.array([1.0, 1, 0, 0])
        c_s = np.array([0.0, 0, 2, -1])
        phi = np.array([[2.0, 1], [-1, 3]])
        X = np.array([[3.0, 2, 5, 7], [1, 4, -2, 0], [0, 0, 1, 1]])
        # direct loops over the triple product
        expected = np.zeros_like(X)
        for i in range(3):
            for j in range(4):
                acc = 0.0
                for a in range(4):
                    for b in range(2):
                        for c in range(2):
                            acc += (X[i, a] - c_t[a]) * Zt[a, b] * phi[b, c] * Zs[j, c]
                expected[i, j] = acc + c_s[j]
        out = align_features(X, Subspace(Zt, c_t), AlignmentMap(phi), Subspace(Zs, c_s))
        np.testing.assert_array_equal(out, expected)
        np.testing.assert_array_equal(out[0], [0, 0, 5, 4])

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        Z = random_subspace(rng, 8, 3, center=rng.standard_normal(8))
        X = rng.standard_normal((10, 8))
        once = align_features(X, Z, AlignmentMap.identity(3), Z)
        twice = align_features(once, Z, AlignmentMap.identity(3), Z)
        assert np.max(np.abs(once - twice)) < 1e-10

    def test_wrong_feature_count(self):
        Z = random_subspace(np.random.default_rng(0), 5, 2)
        with pytest.raises(DimensionError):
            align_features(np.ones((2, 4)), Z, AlignmentMap.identity(2), Z)


class TestSourceAlignedBasis:
    def test_same_subspace(self):
        Z = random_subspace(np.random.default_rng(0), 6, 2)
        np.testing.assert_allclose(source_aligned_target_basis(Z, Z), Z.basis, atol=1e-12)

    def test_orthogonal_spans(self):
        eye = np.eye(4)
        Z_t = Subspace(eye[:, :2], np.zeros(4))
        Z_s = Subspace(eye[:, 2:], np.zeros(4))
        assert np.array_equal(source_aligned_target_basis(Z_t, Z_s), np.zeros((4, 2)))

    def test_equals_basis_times_closed_form(self):
        rng = np.random.default_rng(11)
        Z_t, Z_s = random_subspace(rng, 9, 4), random_subspace(rng, 9, 4)
        np.testing.assert_allclose(
            source_aligned_target_basis(Z_t, Z_s),
            Z_t.basis @ closed_form_alignment(Z_t, Z_s).phi,
            atol=1e-14,
        )


def test_alignment_map_validation():
    with pytest.raises(DimensionError):
        AlignmentMap(np.ones((2, 3)))
    with pytest.raises(NumericalError):
        AlignmentMap([[np.inf]])
