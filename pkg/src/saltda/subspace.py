"""Linear subspaces fitted by truncated SVD and the closed-form alignment between them.

Features are rows. A :class:`Subspace` stores a ``D x d`` orthonormal basis and the
mean that was removed before fitting, so target rows can be carried into the source
frame with :func:`align_features`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError


@dataclass(frozen=True)
class Subspace:
    """Orthonormal basis of a ``dim``-dimensional subspace of ``R^ambient_dim``.

    Attributes
    ----------
    basis : ndarray, shape (D, d)
        Columns are the basis vectors.
    center : ndarray, shape (D,)
        Row mean subtracted from the data before the decomposition.
    singular_values : ndarray or None
        All singular values of the centered data, largest first (only set by
        :func:`fit_subspace`).
    """

    basis: np.ndarray
    center: np.ndarray
    singular_values: np.ndarray | None = None

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        center = np.asarray(self.center, dtype=float)
        if basis.ndim != 2 or basis.shape[1] < 1:
            raise DimensionError(f"basis must be a D x d matrix, got shape {basis.shape}")
        if center.shape != (basis.shape[0],):
            raise DimensionError(
                f"center has shape {center.shape}, expected ({basis.shape[0]},)"
            )
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "center", center)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def orthonormality_error(self) -> float:
        """Frobenius norm of ``basis.T @ basis - I``."""
        return float(np.linalg.norm(self.basis.T @ self.basis - np.eye(self.dim)))


@dataclass(frozen=True)
class AlignmentMap:
    """The ``d x d`` matrix carrying target-subspace coordinates onto source ones.

    No orthogonality is imposed; the map is a general linear transform.
    """

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise DimensionError(f"phi must be square, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise NumericalError("phi contains non-finite entries")
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return self.phi.shape[0]

    @classmethod
    def identity(cls, d: int) -> "AlignmentMap":
        return cls(np.eye(d))


def default_subspace_dim(ambient_dim: int, n_samples: int) -> int:
    """Default ``d``: 39% of the ambient dimension, clamped to ``[1, min(n-1, D)]``.

    The ratio approximates 800-dimensional subspaces of 2048-dimensional features.
    """
    d = int(round(0.39 * ambient_dim))
    return max(1, min(d, n_samples - 1, ambient_dim))


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made non-negative; argmax picks the lowest index on ties
    rows = np.argmax(np.abs(basis), axis=0)
    signs = np.where(basis[rows, np.arange(basis.shape[1])] < 0, -1.0, 1.0)
    return basis * signs


def fit_subspace(X, d: int) -> Subspace:
    """Fit the top-``d`` principal subspace of the rows of ``X``.

    Parameters
    ----------
    X : array-like, shape (n, D)
        Feature rows; ``n >= 2``.
    d : int
        Subspace dimension, ``1 <= d <= min(n - 1, D)``.

    Returns
    -------
    Subspace
        Top-``d`` right singular vectors of the mean-centered data with the
        deterministic sign convention applied, plus the removed mean.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"X must be 2-D, got {X.ndim}-D")
    n, D = X.shape
    if n < 2:
        raise DimensionError(f"need at least 2 samples to fit a subspace, got {n}")
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= min(n - 1, D):
        raise DimensionError(f"d must be an integer in [1, {min(n - 1, D)}], got {d!r}")
    if not np.all(np.isfinite(X)):
        raise NumericalError("X contains non-finite values")
    center = X.mean(axis=0)
    try:
        _, s, vt = np.linalg.svd(X - center, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    basis = _fix_signs(vt[:d].T.copy())
    return Subspace(basis=basis, center=center, singular_values=s)


def reconstruction_error(X, subspace: Subspace) -> float:
    """Squared Frobenius residual of projecting centered ``X`` onto ``subspace``."""
    Xc = np.asarray(X, dtype=float) - subspace.center
    Z = subspace.basis
    return float(np.sum((Xc - Xc @ Z @ Z.T) ** 2))


def _check_pair(Z_t: Subspace, Z_s: Subspace) -> None:
    if Z_t.ambient_dim != Z_s.ambient_dim:
        raise DimensionError(
            f"ambient dimensions differ: target {Z_t.ambient_dim}, source {Z_s.ambient_dim}"
        )
    if Z_t.dim != Z_s.dim:
        raise DimensionError(f"subspace dimensions differ: target {Z_t.dim}, source {Z_s.dim}")


def _check_phi(phi: AlignmentMap, Z: Subspace) -> None:
    if phi.dim != Z.dim:
        raise DimensionError(f"phi is {phi.dim}x{phi.dim} but subspaces have d={Z.dim}")


def closed_form_alignment(Z_t: Subspace, Z_s: Subspace) -> AlignmentMap:
    """Least-squares optimal map ``Z_t.T @ Z_s`` between two subspaces."""
    _check_pair(Z_t, Z_s)
    return AlignmentMap(Z_t.basis.T @ Z_s.basis)


def alignment_cost(Z_t: Subspace, phi: AlignmentMap, Z_s: Subspace) -> float:
    """``||Z_t @ phi - Z_s||_F^2``."""
    _check_pair(Z_t, Z_s)
    _check_phi(phi, Z_t)
    return float(np.sum((Z_t.basis @ phi.phi - Z_s.basis) ** 2))


def source_aligned_target_basis(Z_t: Subspace, Z_s: Subspace) -> np.ndarray:
    """``Z_t Z_t^T Z_s``: source basis expressed through the target subspace."""
    _check_pair(Z_t, Z_s)
    return Z_t.basis @ (Z_t.basis.T @ Z_s.basis)


def target_coordinates(X_t, Z_t: Subspace) -> np.ndarray:
    """Coordinates of centered target rows in the target basis, shape (m, d)."""
    X_t = np.asarray(X_t, dtype=float)
    if X_t.ndim != 2 or X_t.shape[1] != Z_t.ambient_dim:
        raise DimensionError(
            f"X_t must have {Z_t.ambient_dim} columns, got shape {X_t.shape}"
        )
    return (X_t - Z_t.center) @ Z_t.basis


def align_features(X_t, Z_t: Subspace, phi: AlignmentMap, Z_s: Subspace) -> np.ndarray:
    """Re-project target rows into the source frame of the ambient space.

    Computes ``(X_t - center_t) Z_t phi Z_s^T + center_s``.
    """
    _check_pair(Z_t, Z_s)
    _check_phi(phi, Z_t)
    coords = target_coordinates(X_t, Z_t)
    return (coords @ phi.phi) @ Z_s.basis.T + Z_s.center
