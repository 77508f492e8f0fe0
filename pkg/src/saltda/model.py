"""Linear softmax classifier, from-scratch optimizers and model (de)serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SchemaError
from .subspace import AlignmentMap, Subspace

MODEL_FORMAT_VERSION = 1


@dataclass
class SoftmaxClassifier:
    """Single dense layer followed by a softmax.

    Attributes
    ----------
    weights : ndarray, shape (D, C)
    bias : ndarray, shape (C,)
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[1] < 2:
            raise DimensionError(f"weights must be D x C with C >= 2, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise DimensionError(
                f"bias has shape {self.bias.shape}, expected ({self.weights.shape[1]},)"
            )

    @property
    def ambient_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "SoftmaxClassifier":
        return cls(weights=params["weights"], bias=params["bias"])

    def copy(self) -> "SoftmaxClassifier":
        return SoftmaxClassifier(self.weights.copy(), self.bias.copy())


def init_classifier(ambient_dim: int, n_classes: int, seed: int) -> SoftmaxClassifier:
    """Glorot-uniform weights, zero bias."""
    if n_classes < 2:
        raise DimensionError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(seed)
    s = np.sqrt(6.0 / (ambient_dim + n_classes))
    return SoftmaxClassifier(
        weights=rng.uniform(-s, s, size=(ambient_dim, n_classes)),
        bias=np.zeros(n_classes),
    )


def logits(classifier: SoftmaxClassifier, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != classifier.ambient_dim:
        raise DimensionError(
            f"X must have {classifier.ambient_dim} columns, got shape {X.shape}"
        )
    return X @ classifier.weights + classifier.bias


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_probs(classifier: SoftmaxClassifier, X) -> np.ndarray:
    """Row-stochastic class probabilities ``softmax(X W + b)``, shape (m, C)."""
    return softmax(logits(classifier, X))


def accuracy(classifier: SoftmaxClassifier, X, y) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(predict_probs(classifier, X), axis=1) == y))


# --- optimizers -------------------------------------------------------------
#
# Both optimizers are functional: a step takes (state, params, grads) and returns
# fresh (params, state) without touching its inputs.


def _check_shapes(params, grads):
    if params.keys() != grads.keys():
        raise DimensionError(f"parameter keys {sorted(params)} != gradient keys {sorted(grads)}")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise DimensionError(
                f"{k}: parameter shape {np.shape(params[k])} != gradient shape {np.shape(grads[k])}"
            )


@dataclass(frozen=True)
class SgdMomentumState:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_momentum_step(state: SgdMomentumState, params: dict, grads: dict):
    """Heavy-ball update ``v <- mu v - lr g``, ``theta <- theta + v``.

    Velocities missing from ``state`` start at zero.
    """
    _check_shapes(params, grads)
    new_params, velocity = {}, {}
    for k, p in params.items():
        v = state.velocity.get(k)
        if v is None:
            v = np.zeros_like(p, dtype=float)
        v = state.momentum * v - state.learning_rate * grads[k]
        velocity[k] = v
        new_params[k] = p + v
    return new_params, SgdMomentumState(state.learning_rate, state.momentum, velocity)


@dataclass(frozen=True)
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0


def adam_step(state: AdamState, params: dict, grads: dict):
    """One bias-corrected Adam update."""
    _check_shapes(params, grads)
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        m = state.first_moment.get(k, np.zeros_like(g))
        v = state.second_moment.get(k, np.zeros_like(g))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_new[k], v_new[k] = m, v
        new_params[k] = p - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return new_params, AdamState(
        state.learning_rate, b1, b2, state.epsilon, m_new, v_new, t
    )


# --- serialization ----------------------------------------------------------


@dataclass
class AdaptedModel:
    """Everything needed to classify target rows after training.

    ``source`` is None when targets are classified through the identity map
    (no-adaptation and primary-only runs); otherwise every member pairs a
    target subspace with its alignment map.
    """

    classifier: SoftmaxClassifier
    source: Subspace | None = None
    members: list[tuple[Subspace, AlignmentMap]] = field(default_factory=list)

    @property
    def aligned(self) -> bool:
        return self.source is not None


def _subspace_doc(Z: Subspace) -> dict:
    return {"basis": Z.basis.ravel().tolist(), "center": Z.center.tolist()}


def _subspace_from_doc(doc: dict, D: int, d: int) -> Subspace:
    basis = np.asarray(doc["basis"], dtype=float)
    if basis.size != D * d:
        raise SchemaError(f"subspace basis has {basis.size} entries, expected {D * d}")
    return Subspace(basis.reshape(D, d), np.asarray(doc["center"], dtype=float))


def model_to_dict(model: AdaptedModel) -> dict:
    clf = model.classifier
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "ambient_dim": clf.ambient_dim,
        "classes": clf.n_classes,
        "weights": clf.weights.ravel().tolist(),
        "bias": clf.bias.tolist(),
        "aligned": model.aligned,
    }
    if model.aligned:
        doc["subspace_dim"] = model.source.dim
        doc["source_subspace"] = _subspace_doc(model.source)
        doc["members"] = [
            {"phi": phi.phi.ravel().tolist(), "target_subspace": _subspace_doc(Z_t)}
            for Z_t, phi in model.members
        ]
    return doc


def model_from_dict(doc: dict) -> AdaptedModel:
    try:
        version = doc["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise SchemaError(f"unsupported model format version {version}")
        D, C = int(doc["ambient_dim"]), int(doc["classes"])
        weights = np.asarray(doc["weights"], dtype=float)
        if weights.size != D * C:
            raise SchemaError(f"weights has {weights.size} entries, expected {D * C}")
        clf = SoftmaxClassifier(weights.reshape(D, C), np.asarray(doc["bias"], dtype=float))
        if not doc["aligned"]:
            return AdaptedModel(clf)
        d = int(doc["subspace_dim"])
        source = _subspace_from_doc(doc["source_subspace"], D, d)
        members = []
        for m in doc["members"]:
            phi = np.asarray(m["phi"], dtype=float)
            if phi.size != d * d:
                raise SchemaError(f"phi has {phi.size} entries, expected {d * d}")
            members.append((_subspace_from_doc(m["target_subspace"], D, d), AlignmentMap(phi.reshape(d, d))))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed model document: {exc!r}") from exc
    except DimensionError as exc:
        raise SchemaError(str(exc)) from exc
    if not members:
        raise SchemaError("aligned model has no members")
    return AdaptedModel(clf, source, members)


def save_model(model: AdaptedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> AdaptedModel:
    """Read a model document, or the ``model`` entry of a run report."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "model" in doc and "format_version" not in doc:
        doc = doc["model"]
    return model_from_dict(doc)
