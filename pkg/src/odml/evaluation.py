"""Retrieval-based evaluation of learned metrics.

Every example of a test set queries all remaining examples; candidates of
the same class count as positives and candidates are ranked by metric
distance. Pooling the ranked pairs of all queries gives one AUC. Queries
can be restricted to frequent or infrequent classes to expose metrics that
trade minority-class structure for majority-class margin.
"""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .data import Dataset, class_means
from .exceptions import (
    DegenerateMeansError,
    DomainError,
    EmptySelectionError,
    InvalidInputError,
)
from .linalg import psd_factorize, sym_eig
from .optim import MahalanobisMetric, ProjectionMatrix

__all__ = [
    "EvalReport",
    "balance_score",
    "compactness_score",
    "embedding_matrix",
    "evaluate",
    "imbalance_factor",
    "npv",
    "retrieval_auc",
]

DEFAULT_RANK_TOL = 1e-8
DEFAULT_FREQUENT_THRESHOLD = 1000

_MODES = ("roc", "pr")


def embedding_matrix(model, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Rows-as-projections matrix L with distances ||L x - L y||^2.

    A projection model is its own embedding; a PSD metric is factored so
    that L^T L reproduces it up to eigenvalues below `rank_tol` (relative
    to the largest).
    """
    if isinstance(model, ProjectionMatrix):
        return np.asarray(model.matrix, dtype=np.float64)
    if isinstance(model, MahalanobisMetric):
        return psd_factorize(model.matrix, rank_tol=rank_tol)
    raise InvalidInputError(
        "model must be a MahalanobisMetric or ProjectionMatrix"
    )


def npv(model, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of projection vectors a model effectively uses.

    Row count for a projection model; for a PSD metric, the number of
    eigenvalues above ``rank_tol * max(largest eigenvalue, 1)``.
    """
    if isinstance(model, ProjectionMatrix):
        return int(model.num_projections)
    if isinstance(model, MahalanobisMetric):
        w = sym_eig(model.matrix).eigenvalues
        if w.size == 0:
            return 0
        return int(np.sum(w > rank_tol * max(float(w[0]), 1.0)))
    raise InvalidInputError(
        "model must be a MahalanobisMetric or ProjectionMatrix"
    )


def _pairwise_sq_dists(embedded: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", embedded, embedded)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (embedded @ embedded.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def pair_distances_and_labels(
    model,
    dataset: Dataset,
    query_classes: Optional[Iterable[int]] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
):
    """Pooled (distance, same-class) pairs for retrieval scoring.

    Each query contributes one pair per other example. `query_classes`
    restricts which examples act as queries; candidates always span the
    whole dataset.
    """
    emb = dataset.features @ embedding_matrix(model, rank_tol).T
    labels = dataset.labels
    if query_classes is None:
        rows = np.arange(dataset.num_examples)
    else:
        wanted = np.asarray(sorted(set(int(c) for c in query_classes)))
        rows = np.flatnonzero(np.isin(labels, wanted))
        if rows.size == 0:
            raise EmptySelectionError("no examples in the requested query classes")
    d2 = _pairwise_sq_dists(emb)[rows]
    positive = labels[rows][:, None] == labels[None, :]
    keep = np.ones(d2.shape, dtype=bool)
    keep[np.arange(rows.size), rows] = False
    return d2[keep], positive[keep]


def _auc_from_scores(scores, positives, mode: str = "roc") -> float:
    """Area under the ROC (or precision-recall) curve for pooled scores.

    Ranks by score descending and places one curve point per distinct
    score, so ties contribute diagonal segments; trapezoidal integration
    then matches the rank statistic with ties counted half.
    """
    if mode not in _MODES:
        raise InvalidInputError(f"mode must be one of {_MODES}")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positives = np.asarray(positives, dtype=bool).ravel()
    if scores.shape != positives.shape:
        raise InvalidInputError("scores and positives must have equal length")
    total_pos = int(positives.sum())
    total_neg = positives.size - total_pos
    if total_pos == 0 or total_neg == 0:
        raise DomainError("AUC needs both positive and negative pairs")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    boundary = np.r_[np.flatnonzero(np.diff(sorted_scores)), scores.size - 1]
    tp = np.cumsum(sorted_pos)[boundary]
    fp = np.cumsum(~sorted_pos)[boundary]
    if mode == "roc":
        tpr = np.r_[0.0, tp / total_pos]
        fpr = np.r_[0.0, fp / total_neg]
        return float(np.trapezoid(tpr, fpr))
    recall = tp / total_pos
    precision = tp / (tp + fp)
    recall = np.r_[0.0, recall]
    precision = np.r_[precision[0], precision]
    return float(np.trapezoid(precision, recall))


def retrieval_auc(
    model,
    dataset: Dataset,
    query_classes: Optional[Iterable[int]] = None,
    mode: str = "roc",
    rank_tol: float = DEFAULT_RANK_TOL,
) -> float:
    """Pooled retrieval AUC of a model on a dataset.

    Smaller metric distance must mean more likely same-class; distances
    enter as negated scores.
    """
    dists, positive = pair_distances_and_labels(
        model, dataset, query_classes=query_classes, rank_tol=rank_tol
    )
    return _auc_from_scores(-dists, positive, mode=mode)


def balance_score(auc_infrequent: float, auc_frequent: float) -> float:
    """Relative gap between infrequent- and frequent-class AUC.

    Zero when both groups are retrieved equally well.
    """
    if auc_frequent == 0:
        raise DomainError("frequent-class AUC is zero")
    return abs(auc_infrequent / auc_frequent - 1.0)


def compactness_score(auc_all: float, num_projection_vectors: int) -> float:
    """AUC per projection vector."""
    if num_projection_vectors <= 0:
        raise DomainError("compactness needs at least one projection vector")
    return auc_all / num_projection_vectors


def imbalance_factor(model, dataset: Dataset) -> float:
    """Max over min pairwise metric distance between class means."""
    means = class_means(dataset)
    if means.shape[0] < 2:
        raise DegenerateMeansError("imbalance factor needs at least two classes")
    emb = means @ embedding_matrix(model).T
    d2 = _pairwise_sq_dists(emb)
    iu = np.triu_indices(means.shape[0], k=1)
    pair_d = d2[iu]
    d_min = float(pair_d.min())
    if d_min <= 0:
        raise DegenerateMeansError(
            "class means are not separated under the learned metric"
        )
    return float(pair_d.max()) / d_min


@dataclass(frozen=True)
class EvalReport:
    """Retrieval metrics of one model on one test set."""

    auc_all: float
    auc_frequent: float
    auc_infrequent: float
    balance_score: float
    npv: int
    compactness_score: float
    imbalance_factor: float
    train_auc: Optional[float] = None
    gap: Optional[float] = None

    _FIELDS = (
        "auc_all",
        "auc_frequent",
        "auc_infrequent",
        "balance_score",
        "npv",
        "compactness_score",
        "imbalance_factor",
        "train_auc",
        "gap",
    )

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self._FIELDS}

    def csv_header(self) -> str:
        return ",".join(self._FIELDS)

    def csv_row(self) -> str:
        cells = []
        for name in self._FIELDS:
            value = getattr(self, name)
            if value is None:
                cells.append("")
            elif isinstance(value, int):
                cells.append(str(value))
            else:
                cells.append(repr(float(value)))
        return ",".join(cells)


def evaluate(
    model,
    test: Dataset,
    frequent_threshold: int = DEFAULT_FREQUENT_THRESHOLD,
    rank_tol: float = DEFAULT_RANK_TOL,
    mode: str = "roc",
    train: Optional[Dataset] = None,
) -> EvalReport:
    """Full retrieval report on a test set.

    Classes with more than `frequent_threshold` test examples count as
    frequent; both groups must be nonempty. Passing the training set adds
    the train-side AUC and the train-test gap.
    """
    counts = {label: len(idx) for label, idx in test.class_index.items()}
    frequent = sorted(c for c, n in counts.items() if n > frequent_threshold)
    infrequent = sorted(c for c in counts if c not in set(frequent))
    if not frequent:
        raise EmptySelectionError(
            f"no class has more than {frequent_threshold} test examples"
        )
    if not infrequent:
        raise EmptySelectionError(
            f"every class has more than {frequent_threshold} test examples"
        )
    auc_all = retrieval_auc(model, test, mode=mode, rank_tol=rank_tol)
    auc_frequent = retrieval_auc(
        model, test, query_classes=frequent, mode=mode, rank_tol=rank_tol
    )
    auc_infrequent = retrieval_auc(
        model, test, query_classes=infrequent, mode=mode, rank_tol=rank_tol
    )
    vectors = npv(model, rank_tol=rank_tol)
    if vectors == 0:
        raise DomainError("model has no projection vectors above the rank tolerance")
    train_auc = None
    gap = None
    if train is not None:
        train_auc = retrieval_auc(model, train, mode=mode, rank_tol=rank_tol)
        gap = train_auc - auc_all
    return EvalReport(
        auc_all=auc_all,
        auc_frequent=auc_frequent,
        auc_infrequent=auc_infrequent,
        balance_score=balance_score(auc_infrequent, auc_frequent),
        npv=vectors,
        compactness_score=compactness_score(auc_all, vectors),
        imbalance_factor=imbalance_factor(model, test),
        train_auc=train_auc,
        gap=gap,
    )
