"""Feature datasets: CSV I/O, splitting, batching, bootstrap and a synthetic shift generator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InsufficientDataError, IoError, ParseError, SchemaError

CSV_FLOAT_FORMAT = "{:.17g}"


@dataclass(frozen=True)
class FeatureDataset:
    """Feature rows from one domain, optionally labeled.

    Attributes
    ----------
    features : ndarray, shape (n, D)
    labels : ndarray of int, shape (n,), or None
    domain_tag : str
    class_count : int or None
        Number of classes ``C``; inferred as ``max(label) + 1`` when omitted.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    domain_tag: str = ""
    class_count: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise SchemaError(f"features must be a non-empty n x D matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise SchemaError("features contain non-finite values")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (X.shape[0],):
                raise SchemaError(f"labels has shape {y.shape}, expected ({X.shape[0]},)")
            if y.size and not np.issubdtype(y.dtype, np.integer):
                if not np.all(y == np.round(y)):
                    raise SchemaError("labels must be integer class indices")
            y = y.astype(np.int64)
            if y.min() < 0:
                raise SchemaError("labels must be non-negative")
            C = self.class_count if self.class_count is not None else int(y.max()) + 1
            if y.max() >= C:
                raise SchemaError(f"label {int(y.max())} out of range for {C} classes")
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "class_count", int(C))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices) -> "FeatureDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
        )

    def unlabeled(self) -> "FeatureDataset":
        return FeatureDataset(self.features, None, self.domain_tag)


# --- splitting, batching, bootstrap -----------------------------------------


def split(dataset: FeatureDataset, fraction: float, seed: int):
    """Seeded random partition into ``round(fraction * n)`` and the remaining rows.

    Rounding is half-up, so ``n=5, fraction=0.8`` gives parts of 4 and 1.
    """
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    n_a = int(math.floor(fraction * n + 0.5))
    if n_a < 1 or n_a > n - 1:
        raise InsufficientDataError(
            f"cannot split {n} rows with fraction {fraction} into two non-empty parts"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_a])), dataset.subset(np.sort(perm[n_a:]))


def bootstrap(dataset: FeatureDataset, seed: int) -> FeatureDataset:
    """``n`` rows drawn with replacement."""
    n = len(dataset)
    idx = np.random.default_rng(seed).integers(0, n, size=n)
    return dataset.subset(idx)


def subsample(dataset: FeatureDataset, fraction: float, seed: int) -> FeatureDataset:
    """Seeded subset of ``round(fraction * n)`` rows without replacement; ``fraction=1`` is a no-op."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1:
        return dataset
    return split(dataset, fraction, seed)[0]


def batches(n_or_dataset, batch_size: int, seed: int) -> list[np.ndarray]:
    """One epoch of index batches: seeded shuffle, then contiguous slices."""
    n = n_or_dataset if isinstance(n_or_dataset, (int, np.integer)) else len(n_or_dataset)
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng(seed).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


class BatchStream:
    """Endless mini-batch indices over ``n`` rows, reshuffled every epoch.

    Each epoch's order depends only on ``(seed, epoch)``.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self._epoch = 0
        self._queue: list[np.ndarray] = []

    def __iter__(self):
        return self

    def __next__(self) -> np.ndarray:
        if not self._queue:
            epoch_seed = np.random.SeedSequence([self.seed, self._epoch]).generate_state(1)[0]
            self._queue = batches(self.n, self.batch_size, int(epoch_seed))
            self._epoch += 1
        return self._queue.pop(0)


# --- CSV ----------------------------------------------------------------------


def save_csv(dataset: FeatureDataset, path, include_labels: bool | None = None) -> None:
    """Write ``f0,...,f{D-1}[,label]`` with 17 significant digits per value."""
    if include_labels is None:
        include_labels = dataset.has_labels
    if include_labels and not dataset.has_labels:
        raise SchemaError("dataset has no labels to write")
    D = dataset.ambient_dim
    header = [f"f{j}" for j in range(D)] + (["label"] if include_labels else [])
    lines = [",".join(header)]
    for i, row in enumerate(dataset.features):
        cells = [CSV_FLOAT_FORMAT.format(v) for v in row]
        if include_labels:
            cells.append(str(int(dataset.labels[i])))
        lines.append(",".join(cells))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_csv(path, has_labels: bool | None, domain_tag: str = "") -> FeatureDataset:
    """Parse a feature CSV written in the ``f0,...,f{D-1}[,label]`` layout.

    ``has_labels=None`` takes the label column if the header ends with one.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8: {exc}") from exc
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    if has_labels is None:
        has_labels = header[-1] == "label"
    n_features = len(header) - (1 if has_labels else 0)
    if n_features < 1:
        raise SchemaError("header declares no feature columns")
    expected = [f"f{j}" for j in range(n_features)] + (["label"] if has_labels else [])
    if header != expected:
        raise ParseError(f"unexpected header {','.join(header)!r}", line=1)
    body = [(lineno, r) for lineno, r in enumerate(rows[1:], start=2) if r]
    if not body:
        raise ParseError("no data rows", line=2)
    X = np.empty((len(body), n_features))
    y = np.empty(len(body), dtype=np.int64) if has_labels else None
    for i, (lineno, r) in enumerate(body):
        if len(r) != len(header):
            raise SchemaError(f"line {lineno}: expected {len(header)} columns, got {len(r)}")
        try:
            X[i] = [float(v) for v in r[:n_features]]
            if has_labels:
                y[i] = int(r[-1])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not np.all(np.isfinite(X[i])):
            raise ParseError("non-finite value", line=lineno)
    return FeatureDataset(X, y, domain_tag)


# --- synthetic covariate shift ------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """Parameters of a synthetic source/target pair.

    Source rows are Gaussian clusters, one per class, whose means lie on a random
    ``intrinsic_dim``-plane of ``R^ambient_dim`` at distance ``class_separation``
    from the origin; every row carries isotropic noise of
    standard deviation ``noise_sigma``. Target rows come from the same clusters, then
    are rotated by ``rotation_angle_degrees`` in a random 2-plane (about the source
    centroid) and translated by ``translation_magnitude`` along a random in-plane
    direction.
    """

    class_count: int = 3
    ambient_dim: int = 10
    intrinsic_dim: int = 4
    samples_per_class: int = 200
    rotation_angle_degrees: float = 45.0
    translation_magnitude: float = 1.0
    noise_sigma: float = 0.3
    seed: int = 3
    class_separation: float = 1.0

    def validate(self) -> None:
        if self.class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if not 1 <= self.intrinsic_dim <= self.ambient_dim:
            raise ConfigError("intrinsic_dim must lie in [1, ambient_dim]")
        if self.ambient_dim < 2:
            raise ConfigError("ambient_dim must be >= 2 to define a rotation plane")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if not 0 <= self.rotation_angle_degrees <= 180:
            raise ConfigError("rotation_angle_degrees must lie in [0, 180]")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not self.translation_magnitude >= 0:
            raise ConfigError("translation_magnitude must be non-negative")


@dataclass(frozen=True)
class ShiftGeometry:
    """The generating parameters behind a :func:`generate_shift_pair` call."""

    plane: np.ndarray  # (D, k) orthonormal
    class_means: np.ndarray  # (C, D)
    pivot: np.ndarray  # (D,)
    rotation: np.ndarray  # (D, D) orthogonal
    translation: np.ndarray  # (D,)

    def forward(self, X):
        return (X - self.pivot) @ self.rotation.T + self.pivot + self.translation

    def inverse(self, X):
        return (X - self.pivot - self.translation) @ self.rotation + self.pivot


def _orthonormal(rng, D, k):
    q, r = np.linalg.qr(rng.standard_normal((D, k)))
    return q * np.sign(np.diag(r))


def _mean_directions(rng, C, k):
    # orthonormal when the plane has room for C directions, else random unit vectors
    raw = rng.standard_normal((C, k))
    if C <= k:
        return _orthonormal(rng, k, C).T
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def plane_rotation(u, v, angle_degrees):
    """Rotation of ``R^D`` by the given angle in the plane of orthonormal ``u, v``."""
    t = np.deg2rad(angle_degrees)
    D = len(u)
    return (
        np.eye(D)
        + (np.cos(t) - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + np.sin(t) * (np.outer(v, u) - np.outer(u, v))
    )


def shift_geometry(spec: ShiftSpec) -> ShiftGeometry:
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0])
    D, k, C = spec.ambient_dim, spec.intrinsic_dim, spec.class_count
    plane = _orthonormal(rng, D, k)
    class_means = spec.class_separation * _mean_directions(rng, C, k) @ plane.T
    uv = _orthonormal(rng, D, 2)
    rotation = plane_rotation(uv[:, 0], uv[:, 1], spec.rotation_angle_degrees)
    direction = plane @ rng.standard_normal(k)
    direction /= np.linalg.norm(direction)
    return ShiftGeometry(
        plane=plane,
        class_means=class_means,
        pivot=class_means.mean(axis=0),
        rotation=rotation,
        translation=spec.translation_magnitude * direction,
    )


def _draw_clusters(rng, geometry, spec):
    C, n = spec.class_count, spec.samples_per_class
    labels = np.repeat(np.arange(C), n)
    X = geometry.class_means[labels] + spec.noise_sigma * rng.standard_normal(
        (C * n, spec.ambient_dim)
    )
    return X, labels


def generate_shift_pair(spec: ShiftSpec):
    """Labeled source and target datasets with a pure covariate shift between them.

    Target labels are for evaluation only.
    """
    geometry = shift_geometry(spec)
    X_s, y_s = _draw_clusters(np.random.default_rng([spec.seed, 1]), geometry, spec)
    X_t, y_t = _draw_clusters(np.random.default_rng([spec.seed, 2]), geometry, spec)
    source = FeatureDataset(X_s, y_s, "source", spec.class_count)
    target = FeatureDataset(geometry.forward(X_t), y_t, "target", spec.class_count)
    return source, target


def synthetic_task(spec: ShiftSpec, test_fraction: float = 0.25):
    """``(source, target_train, target_test)``; the test part keeps its labels.

    The target is split with the generator seed, so a spec always yields the same
    three datasets.
    """
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    source, target = generate_shift_pair(spec)
    target_train, test = split(target, 1.0 - test_fraction, spec.seed)
    return source, target_train, test
