"""Alternating primary/auxiliary training of a classifier and subspace alignment maps.

Training has two phases. Initialization splits each domain into a primary part and a
held-out part, pre-trains the classifier with targets passed through unchanged, fits
the two subspaces and sets each alignment map to its closed-form value. The training
phase then repeats ``n_iter`` times: ``t1`` classifier steps on the primary objective
with the alignment frozen, followed by ``t2`` alignment steps on the auxiliary
objective over the held-out target rows with the classifier frozen.

Five modes are supported for ablations:

``A1_no_adapt``
    pre-train on source only and stop; targets are classified unchanged.
``A2_primary_only``
    train the primary objective with targets passed through unchanged.
``A3_independent``
    keep the closed-form alignment fixed and train only the classifier.
``A4_joint``
    update classifier and alignment simultaneously from the same point, both on the
    primary split.
``A5_alternating``
    the alternating procedure described above.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .data import BatchStream, FeatureDataset, bootstrap, split
from .errors import ConfigError, DimensionError, EmptyRunError
from .losses import (
    LossValue,
    LossWeights,
    auxiliary_loss,
    grad_auxiliary_wrt_phi,
    grad_primary_wrt_theta,
    primary_loss,
)
from .model import (
    AdamState,
    AdaptedModel,
    SgdMomentumState,
    SoftmaxClassifier,
    adam_step,
    init_classifier,
    model_to_dict,
    predict_probs,
    sgd_momentum_step,
)
from .subspace import (
    AlignmentMap,
    Subspace,
    align_features,
    closed_form_alignment,
    default_subspace_dim,
    fit_subspace,
)

MODES = (
    "A1_no_adapt",
    "A2_primary_only",
    "A3_independent",
    "A4_joint",
    "A5_alternating",
)
_MODE_ALIASES = {m.split("_", 1)[0]: m for m in MODES}


def resolve_mode(mode: str) -> str:
    """Accept either the full mode name or its ``A1``..``A5`` prefix."""
    if mode in MODES:
        return mode
    key = mode.upper()
    if key in _MODE_ALIASES:
        return _MODE_ALIASES[key]
    raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one training run.

    ``subspace_dim=None`` selects ``round(0.39 * D)`` clamped to the data. Learning
    rates follow the reference setup: SGD with momentum at 1e-4 for the classifier
    and Adam at 1e-3 for the alignment maps. Pre-training uses its own, larger
    learning rate since it starts from a random classifier.
    """

    subspace_dim: int | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    n_iter: int = 10
    t1: int = 100
    t2: int = 100
    batch_size: int = 512
    split_fraction: float = 0.8
    seed: int = 0
    ensemble_size: int = 1
    early_stop_tol: float = 0.0
    mode: str = "A5_alternating"
    warmup_steps: int = 500
    warmup_lr: float = 1e-2
    primary_lr: float = 1e-4
    momentum: float = 0.9
    aux_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "mode", resolve_mode(self.mode))
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        for name in ("n_iter", "t1", "t2", "batch_size", "ensemble_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if not 0 < self.split_fraction < 1:
            raise ConfigError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if self.subspace_dim is not None and self.subspace_dim < 1:
            raise ConfigError("subspace_dim must be >= 1")
        if self.early_stop_tol < 0:
            raise ConfigError("early_stop_tol must be >= 0")
        for name in ("warmup_lr", "primary_lr", "aux_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.ensemble_size > 1 and self.mode in ("A1_no_adapt", "A2_primary_only"):
            raise ConfigError(f"mode {self.mode} has no alignment maps to ensemble")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        doc = dict(doc)
        if "weights" in doc:
            doc["weights"] = LossWeights(**doc["weights"])
        return cls(**doc)


@dataclass
class IterationRecord:
    iteration: int
    primary: LossValue
    auxiliary: LossValue | None
    phi_drift: float
    phi_step: float
    source_accuracy: float
    target_accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "primary": self.primary.to_dict(),
            "auxiliary": None if self.auxiliary is None else self.auxiliary.to_dict(),
            "phi_drift": self.phi_drift,
            "phi_step": self.phi_step,
            "source_accuracy": self.source_accuracy,
            "target_accuracy": self.target_accuracy,
        }


CSV_COLUMNS = ("iter", "primary_total", "aux_total", "phi_drift", "phi_step", "src_acc", "tgt_acc")


@dataclass
class RunReport:
    mode: str
    config: TrainConfig
    iterations: list[IterationRecord]
    model: AdaptedModel
    phi_init: list[AlignmentMap]
    source_accuracy: float
    target_accuracy: float | None
    seconds: float = 0.0

    @property
    def phis(self) -> list[AlignmentMap]:
        return [phi for _, phi in self.model.members]

    @property
    def classifier(self) -> SoftmaxClassifier:
        return self.model.classifier

    def to_dict(self, include_timing: bool = False) -> dict:
        """JSON-ready document; wall-clock time is left out unless asked for so that
        seeded runs serialize identically."""
        doc = {
            "mode": self.mode,
            "config": self.config.to_dict(),
            "source_accuracy": self.source_accuracy,
            "target_accuracy": self.target_accuracy,
            "iterations": [r.to_dict() for r in self.iterations],
            "phi_init": [p.phi.ravel().tolist() for p in self.phi_init],
            "model": model_to_dict(self.model),
        }
        if include_timing:
            doc["seconds"] = self.seconds
        return doc

    def csv_rows(self) -> list[tuple]:
        return [
            (
                r.iteration,
                r.primary.total,
                None if r.auxiliary is None else r.auxiliary.total,
                r.phi_drift,
                r.phi_step,
                r.source_accuracy,
                r.target_accuracy,
            )
            for r in self.iterations
        ]


def phi_dynamics(report: RunReport) -> tuple[np.ndarray, np.ndarray]:
    """Distance of the alignment from its closed-form start, and the per-iteration change."""
    if not report.iterations:
        raise EmptyRunError(f"run in mode {report.mode} has no completed iterations")
    drift = np.array([r.phi_drift for r in report.iterations])
    step = np.array([r.phi_step for r in report.iterations])
    return drift, step


# --- prediction -------------------------------------------------------------


def predict(classifier: SoftmaxClassifier, phis, Z_ts, Z_s: Subspace, X_t) -> np.ndarray:
    """Majority vote over the alignment members.

    Ties go to the class with the larger summed probability across members, then to
    the lower class index.
    """
    phis, Z_ts = list(phis), list(Z_ts)
    if not phis:
        raise DimensionError("need at least one alignment map")
    if len(phis) != len(Z_ts):
        raise DimensionError(f"{len(phis)} alignment maps but {len(Z_ts)} target subspaces")
    C = classifier.n_classes
    X_t = np.asarray(X_t, dtype=float)
    votes = np.zeros((X_t.shape[0], C))
    prob_sum = np.zeros((X_t.shape[0], C))
    for phi, Z_t in zip(phis, Z_ts):
        probs = predict_probs(classifier, align_features(X_t, Z_t, phi, Z_s))
        votes[np.arange(len(probs)), np.argmax(probs, axis=1)] += 1
        prob_sum += probs
    top = votes == votes.max(axis=1, keepdims=True)
    return np.argmax(np.where(top, prob_sum, -np.inf), axis=1)


def predict_model(model: AdaptedModel, X) -> np.ndarray:
    if not model.aligned:
        return np.argmax(predict_probs(model.classifier, X), axis=1)
    Z_ts = [Z for Z, _ in model.members]
    phis = [p for _, p in model.members]
    return predict(model.classifier, phis, Z_ts, model.source, X)


def _accuracy(model: AdaptedModel, dataset: FeatureDataset | None) -> float | None:
    if dataset is None:
        return None
    if not dataset.has_labels:
        raise ConfigError("evaluation dataset must be labeled")
    return float(np.mean(predict_model(model, dataset.features) == dataset.labels))


def _source_accuracy(classifier: SoftmaxClassifier, source: FeatureDataset) -> float:
    pred = np.argmax(predict_probs(classifier, source.features), axis=1)
    return float(np.mean(pred == source.labels))


# --- initialization ---------------------------------------------------------


@dataclass
class Initialization:
    classifier: SoftmaxClassifier
    Z_s: Subspace
    Z_t: Subspace
    phi_init: AlignmentMap
    source_primary: FeatureDataset
    source_held: FeatureDataset
    target_primary: FeatureDataset
    target_held: FeatureDataset

    @property
    def splits(self):
        return self.source_primary, self.source_held, self.target_primary, self.target_held


def _seed(config: TrainConfig, *tags: int) -> int:
    return int(np.random.SeedSequence([config.seed, *tags]).generate_state(1)[0])


def _check_source(source: FeatureDataset):
    if not source.has_labels:
        raise ConfigError("source dataset must be labeled")


def pretrain_classifier(
    X_s, y_s, n_classes: int, config: TrainConfig, X_t=None
) -> SoftmaxClassifier:
    """Full-batch warm-up on the primary objective with targets left unaligned.

    With ``X_t=None`` only the source cross-entropy is used.
    """
    clf = init_classifier(X_s.shape[1], n_classes, config.seed)
    weights = config.weights if X_t is not None else LossWeights(0, 0, 0, 0)
    if X_t is None:
        X_t = np.empty((0, X_s.shape[1]))
    params = clf.params()
    state = SgdMomentumState(config.warmup_lr, config.momentum)
    for _ in range(config.warmup_steps):
        grads = grad_primary_wrt_theta(
            SoftmaxClassifier.from_params(params), X_s, y_s, X_t, weights
        )
        params, state = sgd_momentum_step(state, params, grads)
    return SoftmaxClassifier.from_params(params)


def initialize(source: FeatureDataset, target: FeatureDataset, config: TrainConfig) -> Initialization:
    """Split both domains, pre-train the classifier, fit subspaces and the closed-form map."""
    _check_source(source)
    if source.ambient_dim != target.ambient_dim:
        raise DimensionError(
            f"source has {source.ambient_dim} features, target has {target.ambient_dim}"
        )
    target = target.unlabeled()
    src_a, src_b = split(source, config.split_fraction, config.seed)
    tgt_a, tgt_b = split(target, config.split_fraction, config.seed)
    classifier = pretrain_classifier(
        src_a.features, src_a.labels, source.class_count, config, tgt_a.features
    )
    d = config.subspace_dim
    if d is None:
        d = default_subspace_dim(source.ambient_dim, min(len(src_a), len(tgt_a)))
    Z_s = fit_subspace(src_a.features, d)
    Z_t = fit_subspace(tgt_a.features, d)
    return Initialization(
        classifier, Z_s, Z_t, closed_form_alignment(Z_t, Z_s), src_a, src_b, tgt_a, tgt_b
    )


# --- training ---------------------------------------------------------------

StepHook = Callable[[str, int, int, SoftmaxClassifier, list], None]


@dataclass
class _Member:
    Z_t: Subspace
    phi: AlignmentMap
    phi_init: AlignmentMap
    X_primary: np.ndarray
    stream: BatchStream
    adam: AdamState


def _sum_losses(values: list[LossValue]) -> LossValue:
    if len(values) == 1:
        return values[0]
    components: dict = {}
    for v in values:
        for k, c in v.components.items():
            components[k] = components.get(k, 0.0) + c
    return LossValue(
        float(sum(v.total for v in values)), components, dict(values[0].coefficients)
    )


def _add_grads(a, b):
    return {k: a[k] + b[k] for k in a}


def _train_source_only(source, config, eval_set, start):
    # A1 reads nothing but the labeled source
    src_a, _ = split(source, config.split_fraction, config.seed)
    clf = pretrain_classifier(src_a.features, src_a.labels, source.class_count, config)
    model = AdaptedModel(clf)
    return RunReport(
        mode=config.mode,
        config=config,
        iterations=[],
        model=model,
        phi_init=[],
        source_accuracy=_source_accuracy(clf, source),
        target_accuracy=_accuracy(model, eval_set),
        seconds=time.perf_counter() - start,
    )


def _run(
    source: FeatureDataset,
    target: FeatureDataset,
    config: TrainConfig,
    eval_set: FeatureDataset | None,
    ensemble: bool,
    step_hook: StepHook | None,
    bootstrap_seeds=None,
) -> RunReport:
    start = time.perf_counter()
    if config.mode == "A1_no_adapt":
        return _train_source_only(source, config, eval_set, start)

    init = initialize(source, target, config)
    src_a = init.source_primary
    tgt_a, tgt_b = init.target_primary, init.target_held
    weights = config.weights
    mode = config.mode
    k = config.ensemble_size if ensemble else 1

    if k == 1:
        member_data = [(tgt_a.features, init.Z_t)]
    else:
        if bootstrap_seeds is None:
            bootstrap_seeds = [config.seed + i for i in range(k)]
        member_data = []
        for s in bootstrap_seeds:
            X_b = bootstrap(tgt_a, s).features
            member_data.append((X_b, fit_subspace(X_b, init.Z_s.dim)))

    members = []
    for i, (X_m, Z_t) in enumerate(member_data):
        phi0 = closed_form_alignment(Z_t, init.Z_s)
        members.append(
            _Member(
                Z_t=Z_t,
                phi=phi0,
                phi_init=phi0,
                X_primary=X_m,
                stream=BatchStream(len(X_m), config.batch_size, _seed(config, 2, i)),
                adam=AdamState(
                    config.aux_lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon
                ),
            )
        )

    Z_s = init.Z_s
    params = init.classifier.params()
    sgd = SgdMomentumState(config.primary_lr, config.momentum)
    src_stream = BatchStream(len(src_a), config.batch_size, _seed(config, 1))
    held_stream = BatchStream(len(tgt_b), config.batch_size, _seed(config, 3))
    X_s, y_s = src_a.features, src_a.labels
    X_held = tgt_b.features
    aligned_mode = mode != "A2_primary_only"

    def current_clf():
        return SoftmaxClassifier.from_params(params)

    def aligned(member, X):
        if not aligned_mode:
            return X
        return align_features(X, member.Z_t, member.phi, Z_s)

    def hook(kind, it, step):
        if step_hook is not None:
            step_hook(kind, it, step, current_clf(), [m.phi for m in members])

    records: list[IterationRecord] = []
    for it in range(config.n_iter):
        prev_phis = [m.phi for m in members]

        if mode == "A4_joint":
            for step in range(max(config.t1, config.t2)):
                idx_s = next(src_stream)
                clf = current_clf()
                theta_grad = None
                phi_grads = []
                for m in members:
                    X_b = m.X_primary[next(m.stream)]
                    if step < config.t1:
                        g = grad_primary_wrt_theta(
                            clf, X_s[idx_s], y_s[idx_s], aligned(m, X_b), weights
                        )
                        theta_grad = g if theta_grad is None else _add_grads(theta_grad, g)
                    if step < config.t2:
                        phi_grads.append(
                            grad_auxiliary_wrt_phi(m.phi, m.Z_t, Z_s, clf, X_b, weights)
                        )
                if theta_grad is not None:
                    params, sgd = sgd_momentum_step(sgd, params, theta_grad)
                for m, g in zip(members, phi_grads):
                    new, m.adam = adam_step(m.adam, {"phi": m.phi.phi}, {"phi": g})
                    m.phi = AlignmentMap(new["phi"])
                hook("joint", it, step)
        else:
            aligned_primary = [aligned(m, m.X_primary) for m in members]
            for step in range(config.t1):
                idx_s = next(src_stream)
                clf = current_clf()
                grads = None
                for m, X_hat in zip(members, aligned_primary):
                    g = grad_primary_wrt_theta(
                        clf, X_s[idx_s], y_s[idx_s], X_hat[next(m.stream)], weights
                    )
                    grads = g if grads is None else _add_grads(grads, g)
                params, sgd = sgd_momentum_step(sgd, params, grads)
                hook("primary", it, step)

            if mode == "A5_alternating":
                clf = current_clf()
                for step in range(config.t2):
                    X_b = X_held[next(held_stream)]
                    for m in members:
                        g = grad_auxiliary_wrt_phi(m.phi, m.Z_t, Z_s, clf, X_b, weights)
                        new, m.adam = adam_step(m.adam, {"phi": m.phi.phi}, {"phi": g})
                        m.phi = AlignmentMap(new["phi"])
                    hook("auxiliary", it, step)

        clf = current_clf()
        primary = _sum_losses(
            [primary_loss(clf, X_s, y_s, aligned(m, m.X_primary), weights) for m in members]
        )
        auxiliary = None
        if aligned_mode:
            auxiliary = _sum_losses(
                [auxiliary_loss(m.phi, m.Z_t, Z_s, clf, X_held, weights) for m in members]
            )
        drift = float(np.sqrt(sum(np.sum((m.phi.phi - m.phi_init.phi) ** 2) for m in members)))
        phi_step = float(
            np.sqrt(sum(np.sum((m.phi.phi - p.phi) ** 2) for m, p in zip(members, prev_phis)))
        )
        model = _model(clf, Z_s, members, aligned_mode)
        records.append(
            IterationRecord(
                iteration=it + 1,
                primary=primary,
                auxiliary=auxiliary,
                phi_drift=drift,
                phi_step=phi_step,
                source_accuracy=_source_accuracy(clf, source),
                target_accuracy=_accuracy(model, eval_set),
            )
        )
        if (
            config.early_stop_tol > 0
            and mode in ("A4_joint", "A5_alternating")
            and phi_step < config.early_stop_tol
        ):
            break

    model = _model(current_clf(), Z_s, members, aligned_mode)
    return RunReport(
        mode=mode,
        config=config,
        iterations=records,
        model=model,
        phi_init=[m.phi_init for m in members],
        source_accuracy=records[-1].source_accuracy,
        target_accuracy=records[-1].target_accuracy,
        seconds=time.perf_counter() - start,
    )


def _model(clf, Z_s, members, aligned_mode) -> AdaptedModel:
    if not aligned_mode:
        return AdaptedModel(clf)
    return AdaptedModel(clf, Z_s, [(m.Z_t, m.phi) for m in members])


def train(
    source: FeatureDataset,
    target: FeatureDataset,
    config: TrainConfig,
    eval_set: FeatureDataset | None = None,
    step_hook: StepHook | None = None,
) -> RunReport:
    """Run one training job; dispatches to :func:`train_ensemble` when ``ensemble_size > 1``.

    Parameters
    ----------
    source : FeatureDataset
        Labeled source rows.
    target : FeatureDataset
        Target rows; any labels are ignored.
    config : TrainConfig
    eval_set : FeatureDataset, optional
        Labeled target test rows used only to report accuracy.
    step_hook : callable, optional
        Called after every inner step as ``hook(kind, iteration, step, classifier, phis)``
        with ``kind`` one of ``"primary"``, ``"auxiliary"``, ``"joint"``.
    """
    if config.ensemble_size > 1:
        return train_ensemble(source, target, config, eval_set, step_hook)
    return _run(source, target, config, eval_set, False, step_hook)


def train_ensemble(
    source: FeatureDataset,
    target: FeatureDataset,
    config: TrainConfig,
    eval_set: FeatureDataset | None = None,
    step_hook: StepHook | None = None,
    bootstrap_seeds=None,
) -> RunReport:
    """Train one classifier against ``ensemble_size`` bootstrapped target subspaces.

    Member ``i`` resamples the primary target split with seed ``config.seed + i`` (or
    ``bootstrap_seeds[i]``) and keeps its own alignment map and Adam state. Classifier
    steps sum the primary objective over all members. With a single member no
    resampling happens and the run equals :func:`train`.
    """
    if bootstrap_seeds is not None and len(bootstrap_seeds) != config.ensemble_size:
        raise ConfigError("need one bootstrap seed per ensemble member")
    if config.ensemble_size > 1 and config.mode in ("A1_no_adapt", "A2_primary_only"):
        raise ConfigError(f"mode {config.mode} cannot be ensembled")
    return _run(source, target, config, eval_set, True, step_hook, bootstrap_seeds)


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **overrides)
