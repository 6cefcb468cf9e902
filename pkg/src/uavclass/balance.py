"""Training-fold class rebalancing: the five techniques of the imbalance grid.

All methods operate on lists of SampledInstance and only ever see training
data; assert_test_fold_purity enforces that held-out folds stay untouched.
Every generated or duplicated instance is marked synthetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .resample import SampledInstance
from .ulog import VehicleType

MINORITY_CLASSES = (VehicleType.FIXED_WING, VehicleType.HEXAROTOR)
MAJORITY_CLASS = VehicleType.QUADROTOR

METHOD_NONE = "none"
METHOD_RANDOM_OVERSAMPLE = "random_oversample"
METHOD_RANDOM_UNDERSAMPLE = "random_undersample"
METHOD_SMOTE = "smote"
METHOD_CLUSTER_CENTROID = "cluster_centroid"
METHOD_AUGMENTATION = "augmentation"

OVERSAMPLE_METHODS = (METHOD_RANDOM_OVERSAMPLE, METHOD_SMOTE, METHOD_AUGMENTATION)
UNDERSAMPLE_METHODS = (METHOD_RANDOM_UNDERSAMPLE, METHOD_CLUSTER_CENTROID)
ALL_METHODS = (METHOD_NONE,) + OVERSAMPLE_METHODS + UNDERSAMPLE_METHODS


class BalanceError(Exception):
    pass


class EmptyClass(BalanceError):
    pass


class ClassSmallerThanK(BalanceError):
    pass


class ContaminatedTestFold(BalanceError):
    pass


@dataclass
class AugmentSpec:
    """Transform magnitudes; crop/drift parameters are sampled per instance."""

    crop_min: float = 0.7  # cropped fraction drawn from [crop_min, 1]
    drift_max: float = 0.1  # max |drift| as a fraction of the feature range
    reverse_prob: float = 0.5


@dataclass
class BalanceConfig:
    method: str = METHOD_NONE
    minority_factor: float = 1.5  # oversampling: final = original * factor
    majority_reduction: float = 0.25  # undersampling: final = original * (1 - reduction)
    smote_k: int = 5
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    seed: int = 0

    def __post_init__(self):
        if self.method not in ALL_METHODS:
            raise BalanceError(f"unknown balance method {self.method!r}")

    def describe(self) -> str:
        if self.method == METHOD_NONE:
            return "-"
        if self.method in OVERSAMPLE_METHODS:
            return f"{self.minority_factor * 100:g}"
        return f"{self.majority_reduction * 100:g}"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def oversampled_count(original: int, factor: float) -> int:
    return _round_half_up(original * factor)


def undersampled_count(original: int, reduction: float) -> int:
    return _round_half_up(original * (1.0 - reduction))


def _split_by_class(instances, cls):
    members = [i for i, inst in enumerate(instances) if inst.label is cls]
    return members


def _flatten(instances, indices):
    return np.stack([instances[i].values.ravel() for i in indices])


def _make_synthetic(template: SampledInstance, values, source_id):
    return SampledInstance(
        values=values,
        mask=np.ones_like(template.mask, dtype=bool),
        label=template.label,
        source_id=source_id,
        synthetic=True,
    )


def random_oversample(instances, factor, seed):
    """Duplicate minority instances uniformly with replacement up to round(n * factor)."""
    rng = np.random.default_rng(seed)
    out = list(instances)
    for cls in MINORITY_CLASSES:
        members = _split_by_class(instances, cls)
        if not members:
            raise EmptyClass(f"no {cls.value} instances to oversample")
        extra = oversampled_count(len(members), factor) - len(members)
        if extra <= 0:
            continue
        picks = rng.integers(0, len(members), size=extra)
        for j, p in enumerate(picks):
            src = instances[members[p]]
            out.append(
                SampledInstance(
                    values=src.values.copy(),
                    mask=src.mask.copy(),
                    label=src.label,
                    source_id=f"{src.source_id}+dup{j}",
                    synthetic=True,
                )
            )
    return out


def random_undersample(instances, reduction, seed):
    """Drop a uniform sample of the majority class, keeping round(n * (1 - r))."""
    rng = np.random.default_rng(seed)
    members = _split_by_class(instances, MAJORITY_CLASS)
    target = undersampled_count(len(members), reduction)
    kept = set()
    if members:
        picks = rng.choice(len(members), size=min(target, len(members)), replace=False)
        kept = {members[p] for p in picks}
    return [
        inst
        for i, inst in enumerate(instances)
        if inst.label is not MAJORITY_CLASS or i in kept
    ]


def smote_oversample(instances, factor, k, seed):
    """Interpolate between minority points and their k nearest same-class neighbors.

    k is clamped to class size - 1; a class needs at least 2 members.
    """
    rng = np.random.default_rng(seed)
    out = list(instances)
    for cls in MINORITY_CLASSES:
        members = _split_by_class(instances, cls)
        if len(members) < 2:
            raise ClassSmallerThanK(f"{cls.value} has {len(members)} instances; SMOTE needs >= 2")
        extra = oversampled_count(len(members), factor) - len(members)
        if extra <= 0:
            continue
        X = _flatten(instances, members)
        k_eff = min(k, len(members) - 1)
        # exhaustive pairwise distances; minority classes are small
        d2 = np.sum((X[:, np.newaxis, :] - X[np.newaxis, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        neighbors = np.argsort(d2, axis=1)[:, :k_eff]
        template = instances[members[0]]
        for j in range(extra):
            base = rng.integers(0, len(members))
            mate = neighbors[base, rng.integers(0, k_eff)]
            u = rng.random()
            vec = X[base] + u * (X[mate] - X[base])
            out.append(
                _make_synthetic(
                    instances[members[base]],
                    vec.reshape(template.values.shape),
                    f"smote-{cls.value}-{j}",
                )
            )
    return out


def kmeans(X, k, rng, max_iter=300, tol=1e-4):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, objective_history); the objective is the sum of
    squared distances to the assigned centroid after each assignment step.
    """
    n = len(X)
    if k >= n:
        return X.copy(), [0.0]

    # k-means++ seeding
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(0, n)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[i] = X[rng.integers(0, n)]
        else:
            r = rng.random() * total
            centers[i] = X[np.searchsorted(np.cumsum(closest), r)]
        closest = np.minimum(closest, np.sum((X - centers[i]) ** 2, axis=1))

    history = []
    for _ in range(max_iter):
        d2 = (
            np.sum(X * X, axis=1)[:, np.newaxis]
            - 2.0 * X @ centers.T
            + np.sum(centers * centers, axis=1)[np.newaxis, :]
        )
        assign = np.argmin(d2, axis=1)
        history.append(float(np.maximum(d2[np.arange(n), assign], 0.0).sum()))
        new_centers = centers.copy()
        for c in range(k):
            mask = assign == c
            if mask.any():
                new_centers[c] = X[mask].mean(axis=0)
            else:
                new_centers[c] = X[np.argmax(d2[np.arange(n), assign])]
        shift = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    return centers, history


def cluster_centroid_undersample(instances, reduction, seed):
    """Replace the majority class by k-means centroids of its flattened vectors."""
    rng = np.random.default_rng(seed)
    members = _split_by_class(instances, MAJORITY_CLASS)
    target = max(undersampled_count(len(members), reduction), 1)
    if not members:
        return list(instances)
    X = _flatten(instances, members)
    centers, _ = kmeans(X, target, rng)
    template = instances[members[0]]
    out = [inst for inst in instances if inst.label is not MAJORITY_CLASS]
    for j, center in enumerate(centers):
        out.append(
            _make_synthetic(
                template, center.reshape(template.values.shape), f"centroid-{j}"
            )
        )
    return out


def _augment_one(values, spec: AugmentSpec, rng):
    n_rows, n_features = values.shape
    out = values.copy()

    # crop a contiguous fraction of rows and stretch back to full length
    frac = rng.uniform(spec.crop_min, 1.0)
    length = max(2, _round_half_up(frac * n_rows))
    length = min(length, n_rows)
    start = int(rng.integers(0, n_rows - length + 1))
    if length < n_rows or start > 0:
        segment = out[start : start + length]
        xp = np.linspace(0.0, 1.0, length)
        x = np.linspace(0.0, 1.0, n_rows)
        out = np.stack([np.interp(x, xp, segment[:, f]) for f in range(n_features)], axis=1)

    # random-walk drift scaled to a fraction of each feature's range
    d = rng.uniform(0.0, spec.drift_max)
    if d > 0:
        walk = np.cumsum(rng.standard_normal((n_rows, n_features)), axis=0)
        peak = np.abs(walk).max(axis=0)
        span = out.max(axis=0) - out.min(axis=0)
        scale = np.where((peak > 0) & (span > 0), d * span / np.maximum(peak, 1e-300), 0.0)
        out = out + walk * scale

    if rng.random() < spec.reverse_prob:
        out = out[::-1].copy()
    return out


def augment_timeseries(instances, factor, spec, seed):
    """Grow minority classes with crop/drift/reverse transforms of originals."""
    rng = np.random.default_rng(seed)
    out = list(instances)
    for cls in MINORITY_CLASSES:
        members = _split_by_class(instances, cls)
        if not members:
            raise EmptyClass(f"no {cls.value} instances to augment")
        extra = oversampled_count(len(members), factor) - len(members)
        if extra <= 0:
            continue
        for j in range(extra):
            src = instances[members[rng.integers(0, len(members))]]
            values = _augment_one(src.values, spec, rng)
            out.append(_make_synthetic(src, values, f"aug-{cls.value}-{j}"))
    return out


def rebalance(instances, config: BalanceConfig):
    """Apply the configured method to a training split."""
    if config.method == METHOD_NONE:
        return list(instances)
    if config.method == METHOD_RANDOM_OVERSAMPLE:
        return random_oversample(instances, config.minority_factor, config.seed)
    if config.method == METHOD_RANDOM_UNDERSAMPLE:
        return random_undersample(instances, config.majority_reduction, config.seed)
    if config.method == METHOD_SMOTE:
        return smote_oversample(instances, config.minority_factor, config.smote_k, config.seed)
    if config.method == METHOD_CLUSTER_CENTROID:
        return cluster_centroid_undersample(instances, config.majority_reduction, config.seed)
    return augment_timeseries(instances, config.minority_factor, config.augment, config.seed)


def assert_test_fold_purity(instances, fold_of, test_fold, expected_count):
    """Hard check that the held-out fold is untouched by rebalancing.

    fold_of maps each instance (by position) to its fold id; instances
    created by rebalancing must not carry the test fold id.
    """
    count = 0
    for inst, fold in zip(instances, fold_of):
        if fold != test_fold:
            continue
        if inst.synthetic:
            raise ContaminatedTestFold(
                f"synthetic instance {inst.source_id!r} assigned to test fold {test_fold}"
            )
        count += 1
    if count != expected_count:
        raise ContaminatedTestFold(
            f"test fold {test_fold} has {count} instances, expected {expected_count}"
        )
