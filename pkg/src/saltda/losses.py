"""Primary and auxiliary objectives and their analytic gradients.

The primary objective trains the classifier on labeled source rows plus aligned target
rows::

    L_P = CE(source) + lambda_c * H(target) + lambda_cb * CB(target)

The auxiliary objective tunes the alignment map with the classifier frozen::

    L_A = ||Z_t phi - Z_s||_F^2 + gamma_c * H(target) + gamma_cb * CB(target)

where ``H`` is the mean per-row prediction entropy and ``CB`` the class-balance
penalty on the batch-mean prediction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, NumericalError
from .model import SoftmaxClassifier, logits, softmax
from .subspace import (
    AlignmentMap,
    Subspace,
    align_features,
    alignment_cost,
    target_coordinates,
)

PROB_FLOOR = 1e-12
PROB_CEIL = 1.0 - 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 0.1
    lambda_cb: float = 0.1
    gamma_c: float = 0.1
    gamma_cb: float = 0.1

    def __post_init__(self):
        for name in ("lambda_c", "lambda_cb", "gamma_c", "gamma_cb"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class LossValue:
    """A loss total with its unweighted components and the weight applied to each."""

    total: float
    components: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"total": self.total, **self.components}


def _clamp(p):
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def _clamp_mask(p):
    return (p > PROB_FLOOR) & (p < PROB_CEIL)


def _check_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise DimensionError(f"probs must be an m x C matrix with C >= 2, got shape {probs.shape}")
    if probs.shape[0] and not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-6):
        raise DomainError("rows of probs must sum to 1")
    return probs


def _check_labels(labels, m: int, C: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (m,):
        raise DimensionError(f"labels has shape {labels.shape}, expected ({m},)")
    if m and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= C):
        raise DomainError(f"labels must be integer class indices in [0, {C})")
    return labels


def cross_entropy(probs, labels) -> float:
    """Mean negative log-likelihood of the true labels."""
    probs = _check_probs(probs)
    m, C = probs.shape
    labels = _check_labels(labels, m, C)
    if m == 0:
        raise DimensionError("cross_entropy of an empty batch")
    return float(-np.mean(np.log(_clamp(probs[np.arange(m), labels]))))


def conditional_entropy(probs) -> float:
    """Mean Shannon entropy of the rows (``0 ln 0 = 0``)."""
    probs = _check_probs(probs)
    if probs.shape[0] == 0:
        raise DimensionError("conditional_entropy of an empty batch")
    return float(-np.mean(np.sum(probs * np.log(_clamp(probs)), axis=1)))


def class_balance_minimum(n_classes: int) -> float:
    u = 1.0 / n_classes
    return float(-(u * np.log(u) + (1 - u) * np.log1p(-u)))


def class_balance(probs) -> float:
    """Per-class Bernoulli cross-entropy of the uniform vector against the mean prediction.

    With ``pbar`` the column mean of ``probs`` and ``u = 1/C``::

        -(1/C) * sum_j [u ln pbar_j + (1 - u) ln(1 - pbar_j)]

    which is smallest when ``pbar`` is uniform.
    """
    probs = _check_probs(probs)
    m, C = probs.shape
    if m == 0:
        raise DimensionError("class_balance of an empty batch")
    pbar = _clamp(probs.mean(axis=0))
    if not np.all((pbar > 0) & (pbar < 1)):
        raise NumericalError("mean prediction is outside (0, 1)")
    u = 1.0 / C
    return float(-np.mean(u * np.log(pbar) + (1 - u) * np.log1p(-pbar)))


# --- gradients w.r.t. probabilities -----------------------------------------


def _entropy_dprobs(probs):
    # d/dp of -(1/m) sum p log(clamp(p)); clamp has zero slope where active
    m = probs.shape[0]
    dlog = np.where(_clamp_mask(probs), 1.0, 0.0)
    return -(np.log(_clamp(probs)) + dlog) / m


def _class_balance_dprobs(probs):
    m, C = probs.shape
    raw = probs.mean(axis=0)
    pbar = _clamp(raw)
    u = 1.0 / C
    dpbar = -(u / pbar - (1 - u) / (1 - pbar)) / C
    dpbar = np.where(_clamp_mask(raw), dpbar, 0.0)
    return np.broadcast_to(dpbar / m, probs.shape)


def _softmax_backward(probs, dprobs):
    # vector-Jacobian product of the row-wise softmax
    return probs * (dprobs - np.sum(probs * dprobs, axis=1, keepdims=True))


def _target_dlogits(probs, c_weight, cb_weight):
    dprobs = np.zeros_like(probs)
    if c_weight:
        dprobs = dprobs + c_weight * _entropy_dprobs(probs)
    if cb_weight:
        dprobs = dprobs + cb_weight * _class_balance_dprobs(probs)
    return _softmax_backward(probs, dprobs)


# --- primary objective ------------------------------------------------------


def _target_terms(probs_t, c_weight, cb_weight):
    if probs_t.shape[0] == 0:
        if c_weight or cb_weight:
            raise DimensionError("empty target batch with non-zero target loss weights")
        return {}
    return {
        "cond_entropy": conditional_entropy(probs_t),
        "class_balance": class_balance(probs_t),
    }


def _empty_or(X, D):
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, D)
    return X


def primary_loss(
    classifier: SoftmaxClassifier, X_s, y_s, X_t_aligned, weights: LossWeights
) -> LossValue:
    """Source cross-entropy plus weighted target entropy and class-balance terms."""
    X_t_aligned = _empty_or(X_t_aligned, classifier.ambient_dim)
    probs_s = softmax(logits(classifier, X_s))
    probs_t = softmax(logits(classifier, X_t_aligned))
    components = {"ce": cross_entropy(probs_s, y_s)}
    components.update(_target_terms(probs_t, weights.lambda_c, weights.lambda_cb))
    coefficients = {"ce": 1.0}
    if "cond_entropy" in components:
        coefficients.update(cond_entropy=weights.lambda_c, class_balance=weights.lambda_cb)
    total = sum(coefficients[k] * components[k] for k in components)
    return LossValue(float(total), components, coefficients)


def grad_primary_wrt_theta(
    classifier: SoftmaxClassifier, X_s, y_s, X_t_aligned, weights: LossWeights
) -> dict[str, np.ndarray]:
    """Gradient of ``primary_loss(...).total`` w.r.t. weights and bias."""
    X_s = np.asarray(X_s, dtype=float)
    X_t_aligned = _empty_or(X_t_aligned, classifier.ambient_dim)
    probs_s = softmax(logits(classifier, X_s))
    m_s, C = probs_s.shape
    y_s = _check_labels(y_s, m_s, C)
    if m_s == 0:
        raise DimensionError("empty source batch")
    dz_s = probs_s.copy()
    dz_s[np.arange(m_s), y_s] -= 1.0
    dz_s /= m_s
    grad_w = X_s.T @ dz_s
    grad_b = dz_s.sum(axis=0)
    if X_t_aligned.shape[0] and (weights.lambda_c or weights.lambda_cb):
        probs_t = softmax(logits(classifier, X_t_aligned))
        dz_t = _target_dlogits(probs_t, weights.lambda_c, weights.lambda_cb)
        grad_w = grad_w + X_t_aligned.T @ dz_t
        grad_b = grad_b + dz_t.sum(axis=0)
    elif X_t_aligned.shape[0] == 0 and (weights.lambda_c or weights.lambda_cb):
        raise DimensionError("empty target batch with non-zero target loss weights")
    return {"weights": grad_w, "bias": grad_b}


# --- auxiliary objective ----------------------------------------------------


def auxiliary_loss(
    phi: AlignmentMap,
    Z_t: Subspace,
    Z_s: Subspace,
    classifier: SoftmaxClassifier,
    X_t_val,
    weights: LossWeights,
) -> LossValue:
    """Alignment cost plus weighted entropy terms of the frozen classifier on aligned rows."""
    components = {"align_cost": alignment_cost(Z_t, phi, Z_s)}
    coefficients = {"align_cost": 1.0}
    X_t_val = _empty_or(X_t_val, Z_t.ambient_dim)
    if X_t_val.shape[0]:
        probs = softmax(logits(classifier, align_features(X_t_val, Z_t, phi, Z_s)))
        components.update(_target_terms(probs, weights.gamma_c, weights.gamma_cb))
        coefficients.update(cond_entropy=weights.gamma_c, class_balance=weights.gamma_cb)
    elif weights.gamma_c or weights.gamma_cb:
        raise DimensionError("empty target batch with non-zero target loss weights")
    total = sum(coefficients[k] * components[k] for k in components)
    return LossValue(float(total), components, coefficients)


def grad_auxiliary_wrt_phi(
    phi: AlignmentMap,
    Z_t: Subspace,
    Z_s: Subspace,
    classifier: SoftmaxClassifier,
    X_t_val,
    weights: LossWeights,
) -> np.ndarray:
    """Gradient of ``auxiliary_loss(...).total`` w.r.t. ``phi`` (d x d)."""
    if phi.dim != Z_t.dim or Z_t.dim != Z_s.dim or Z_t.ambient_dim != Z_s.ambient_dim:
        raise DimensionError("inconsistent phi / subspace dimensions")
    Zt, Zs = Z_t.basis, Z_s.basis
    grad = 2.0 * Zt.T @ (Zt @ phi.phi - Zs)
    X_t_val = _empty_or(X_t_val, Z_t.ambient_dim)
    if X_t_val.shape[0] and (weights.gamma_c or weights.gamma_cb):
        coords = target_coordinates(X_t_val, Z_t)
        X_hat = (coords @ phi.phi) @ Zs.T + Z_s.center
        probs = softmax(logits(classifier, X_hat))
        dz = _target_dlogits(probs, weights.gamma_c, weights.gamma_cb)
        # X_hat = coords @ phi @ Zs^T  =>  dL/dphi = coords^T (dL/dX_hat) Zs
        grad = grad + coords.T @ (dz @ classifier.weights.T) @ Zs
    return grad
