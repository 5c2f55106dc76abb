"""Datasets, pair sampling and preprocessing.

The on-disk format is plain CSV: one row per example, first column an
integer class id, remaining columns decimal feature values. All ops are
functional: they take a :class:`Dataset` and return a new one.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import (
    InvalidBatchError,
    InvalidDatasetError,
    InvalidInputError,
    ParseError,
)
from .linalg import sym_eig
from .validation import check_finite_array

__all__ = [
    "Dataset",
    "PairBatch",
    "SynthSpec",
    "load_csv",
    "save_csv",
    "minmax_normalize",
    "pca_basis",
    "pca_reduce",
    "class_means",
    "sample_batch",
    "enumerate_pairs",
    "oversample",
    "synth_generate",
    "stratified_split",
]


@dataclass
class Dataset:
    """Labeled feature matrix.

    Attributes
    ----------
    features : ndarray of shape (n, d), float64, finite
    labels : ndarray of shape (n,), integer class ids
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = check_finite_array(self.features, "features")
        if self.features.ndim != 2:
            raise InvalidInputError("features must be 2-D")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != self.features.shape[0]:
            raise InvalidInputError("labels must be 1-D, one per example")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == labels.astype(np.int64)):
                raise InvalidInputError("labels must be integers")
        self.labels = labels.astype(np.int64)
        if self.num_examples < 2:
            raise InvalidDatasetError("a dataset needs at least two examples")

    @property
    def num_examples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def class_index(self) -> dict:
        """Maps each class id to the (sorted) indices of its examples."""
        idx = {}
        for label in np.unique(self.labels):
            idx[int(label)] = np.flatnonzero(self.labels == label)
        return idx

    @property
    def num_classes(self) -> int:
        return len(self.class_index)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices])


@dataclass
class PairBatch:
    """A batch of similar (same-class) and dissimilar (cross-class) pairs.

    Both arrays have shape (n_pairs, 2, d): element [i, 0] is x, [i, 1] is y.
    Either side may be empty at construction; consumers that need both
    raise :class:`InvalidDatasetError`.
    """

    similar: np.ndarray
    dissimilar: np.ndarray

    def __post_init__(self):
        for name in ("similar", "dissimilar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.size == 0:
                arr = arr.reshape(0, 2, 0)
            if arr.ndim != 3 or arr.shape[1] != 2:
                raise InvalidInputError(f"{name} must have shape (n, 2, d)")
            setattr(self, name, arr)
        if self.similar.shape[0] and self.dissimilar.shape[0]:
            if self.similar.shape[2] != self.dissimilar.shape[2]:
                raise InvalidInputError("pair sides disagree on dimension")

    @cached_property
    def similar_diffs(self) -> np.ndarray:
        return self.similar[:, 0, :] - self.similar[:, 1, :]

    @cached_property
    def dissimilar_diffs(self) -> np.ndarray:
        return self.dissimilar[:, 0, :] - self.dissimilar[:, 1, :]


def load_csv(path, has_header: bool = False) -> Dataset:
    """Read a dataset from CSV.

    Each row is ``class_id, feature_1, ..., feature_d`` with an integer id
    and decimal features ('.' decimal separator, UTF-8). Truly empty lines
    are skipped. Malformed rows raise :class:`ParseError` carrying the
    1-based line number; fewer than two distinct classes raise
    :class:`InvalidDatasetError`.
    """
    labels = []
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row:
                continue
            if len(row) < 2:
                raise ParseError("row needs a class id and features", lineno)
            try:
                label = int(row[0].strip())
            except ValueError:
                raise ParseError(
                    f"class id {row[0]!r} is not an integer", lineno
                ) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"expected {width - 1} features, got {len(row) - 1}", lineno
                )
            try:
                values = [float(f) for f in row[1:]]
            except ValueError:
                raise ParseError("non-numeric feature value", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite feature value", lineno)
            labels.append(label)
            rows.append(values)
    if len(rows) < 2:
        raise InvalidDatasetError(f"{path} holds fewer than two examples")
    if len(set(labels)) < 2:
        raise InvalidDatasetError(f"{path} holds fewer than two classes")
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels))


def save_csv(dataset: Dataset, path, header: bool = False) -> None:
    """Write a dataset in the format :func:`load_csv` reads.

    Features are written with shortest round-trip precision, so a
    write-then-load cycle reproduces the array exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(
                ["class"] + [f"x{j}" for j in range(dataset.dim)]
            )
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def minmax_normalize(dataset: Dataset) -> Dataset:
    """Scale every feature column to [0, 1]; constant columns become 0."""
    x = dataset.features
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    out = np.zeros_like(x)
    nonconst = span > 0
    out[:, nonconst] = (x[:, nonconst] - lo[nonconst]) / span[nonconst]
    return Dataset(out, dataset.labels.copy())


def pca_basis(features, target_dim: int):
    """Principal directions of a feature matrix.

    Returns ``(mean, components)`` where `components` has shape
    (target_dim, d): orthonormal rows sorted by decreasing component
    variance of the mean-centered data (covariance normalized by n - 1).
    """
    x = check_finite_array(features, "features")
    n, d = x.shape
    if not (1 <= target_dim <= d):
        raise InvalidInputError(f"target_dim must be in [1, {d}]")
    if n < 2:
        raise InvalidInputError("pca needs at least two examples")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    decomp = sym_eig(cov)
    return mean, decomp.eigenvectors[:, :target_dim].T


def pca_reduce(dataset: Dataset, target_dim: int) -> Dataset:
    """Project onto the top principal directions of the feature covariance."""
    mean, components = pca_basis(dataset.features, target_dim)
    projected = (dataset.features - mean) @ components.T
    return Dataset(projected, dataset.labels.copy())


def class_means(dataset: Dataset) -> np.ndarray:
    """Per-class feature means, one row per class in ascending label order."""
    return np.vstack(
        [
            dataset.features[idx].mean(axis=0)
            for _, idx in sorted(dataset.class_index.items())
        ]
    )


def _pair_weights(counts):
    return counts * (counts - 1) / 2.0


def sample_batch(dataset: Dataset, batch_size: int, rng) -> PairBatch:
    """Draw a half-similar, half-dissimilar batch of pairs with replacement.

    Similar pairs are uniform over all same-class pairs, dissimilar pairs
    uniform over all cross-class pairs: a class (or class pair) is chosen
    with probability proportional to its number of pairs, then members are
    drawn uniformly without replacement inside it.

    `batch_size` must be even and at least 2; each side gets half.
    """
    if batch_size < 2 or batch_size % 2 != 0:
        raise InvalidInputError("batch_size must be even and >= 2")
    per_side = batch_size // 2
    index = dataset.class_index
    class_ids = sorted(index)
    counts = np.array([index[c].size for c in class_ids], dtype=np.float64)

    sim_weights = _pair_weights(counts)
    total_sim = sim_weights.sum()
    if total_sim <= 0:
        raise InvalidDatasetError("no class has two examples; no similar pairs")
    k = len(class_ids)
    if k < 2:
        raise InvalidDatasetError("need at least two classes for dissimilar pairs")
    pair_j, pair_k = np.triu_indices(k, k=1)
    dis_weights = counts[pair_j] * counts[pair_k]

    x = dataset.features
    sim = np.empty((per_side, 2, dataset.dim))
    chosen = rng.choice(k, size=per_side, p=sim_weights / total_sim)
    for row, c in enumerate(chosen):
        members = index[class_ids[c]]
        n = members.size
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        sim[row, 0] = x[members[i]]
        sim[row, 1] = x[members[j]]

    dis = np.empty((per_side, 2, dataset.dim))
    chosen = rng.choice(
        pair_j.size, size=per_side, p=dis_weights / dis_weights.sum()
    )
    for row, c in enumerate(chosen):
        a = index[class_ids[pair_j[c]]]
        b = index[class_ids[pair_k[c]]]
        dis[row, 0] = x[a[int(rng.integers(a.size))]]
        dis[row, 1] = x[b[int(rng.integers(b.size))]]

    return PairBatch(sim, dis)


def enumerate_pairs(dataset: Dataset) -> PairBatch:
    """All unordered pairs, split into same-class and cross-class sides.

    Materializes O(n^2) pairs; intended for small datasets where exact
    full-batch objectives are wanted.
    """
    n = dataset.num_examples
    i, j = np.triu_indices(n, k=1)
    same = dataset.labels[i] == dataset.labels[j]
    x = dataset.features
    sim = np.stack([x[i[same]], x[j[same]]], axis=1)
    dis = np.stack([x[i[~same]], x[j[~same]]], axis=1)
    return PairBatch(sim, dis)


def oversample(dataset: Dataset, rng) -> Dataset:
    """Balance class counts by appending uniform copies of minority rows.

    Every class is topped up to the size of the largest one. Original rows
    are kept unchanged as a prefix, copies are appended in ascending label
    order. A balanced dataset passes through with no additions.
    """
    index = dataset.class_index
    target = max(idx.size for idx in index.values())
    extra_feats = []
    extra_labels = []
    for label in sorted(index):
        members = index[label]
        deficit = target - members.size
        if deficit > 0:
            picks = members[rng.integers(members.size, size=deficit)]
            extra_feats.append(dataset.features[picks])
            extra_labels.append(np.full(deficit, label, dtype=np.int64))
    if not extra_feats:
        return Dataset(dataset.features.copy(), dataset.labels.copy())
    return Dataset(
        np.vstack([dataset.features] + extra_feats),
        np.concatenate([dataset.labels] + extra_labels),
    )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for an isotropic Gaussian mixture dataset.

    Class means are given explicitly (shape ``(num_classes, dim)``) or
    drawn uniformly on the sphere of radius `mean_radius`. Class k
    contributes ``class_sizes[k]`` points from N(mean_k, std^2 I).
    """

    num_classes: int
    dim: int
    class_sizes: tuple
    within_class_std: float
    mean_radius: float = 1.0
    means: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidInputError("need at least two classes")
        if self.dim < 1:
            raise InvalidInputError("dim must be >= 1")
        if len(self.class_sizes) != self.num_classes:
            raise InvalidInputError("one class size per class required")
        if any(int(s) < 1 for s in self.class_sizes):
            raise InvalidInputError("class sizes must be >= 1")
        if not (math.isfinite(self.within_class_std) and self.within_class_std >= 0):
            raise InvalidInputError("within_class_std must be >= 0")
        if self.means is None:
            if not (math.isfinite(self.mean_radius) and self.mean_radius > 0):
                raise InvalidInputError("mean_radius must be > 0")
        else:
            object.__setattr__(
                self, "means", check_finite_array(self.means, "means")
            )
            if self.means.shape != (self.num_classes, self.dim):
                raise InvalidInputError(
                    "means must have shape (num_classes, dim)"
                )


def synth_generate(spec: SynthSpec) -> Dataset:
    """Sample the mixture described by `spec`, deterministically in its seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.means is not None:
        means = spec.means
    else:
        raw = rng.normal(size=(spec.num_classes, spec.dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InvalidInputError("degenerate direction draw for a mean")
        means = spec.mean_radius * raw / norms
    feats = []
    labels = []
    for k in range(spec.num_classes):
        size = int(spec.class_sizes[k])
        noise = rng.normal(size=(size, spec.dim))
        feats.append(means[k] + spec.within_class_std * noise)
        labels.append(np.full(size, k, dtype=np.int64))
    return Dataset(np.vstack(feats), np.concatenate(labels))


def stratified_split(dataset: Dataset, test_fraction: float, seed: int):
    """Split into (train, test) preserving class proportions.

    Within each class the examples are shuffled with a generator seeded by
    `seed`; ``round(n_k * test_fraction)`` go to test, clamped so both
    splits keep at least one member of every class with two or more
    examples. Singleton classes stay in train.
    """
    if not (0.0 < test_fraction < 1.0):
        raise InvalidInputError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx = []
    test_idx = []
    for label in sorted(dataset.class_index):
        members = dataset.class_index[label]
        perm = members[rng.permutation(members.size)]
        if members.size < 2:
            train_idx.append(perm)
            continue
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return dataset.subset(train), dataset.subset(test)
