"""Scikit-learn style wrappers around the two trainers.

Both estimators learn from labeled rows (X, y), expose the learned
projection through ``components_`` (rows are projection vectors), and
``transform`` maps data into the space where squared Euclidean distance
equals the learned metric distance.
"""

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .evaluation import retrieval_auc
from .exceptions import InvalidInputError
from .linalg import psd_factorize
from .optim import TrainConfig, train_mdml, train_pdml
from .regularizers import FAMILIES, RegularizerSpec

__all__ = ["MahalanobisMetricLearner", "ProjectionMetricLearner"]


def _as_dataset(x, y):
    x, y = check_X_y(x, y, dtype=np.float64)
    labels = np.asarray(y)
    if labels.dtype.kind == "f":
        rounded = np.rint(labels)
        if not np.array_equal(rounded, labels):
            raise InvalidInputError("class labels must be integers")
        labels = rounded
    if labels.dtype.kind not in "iu":
        try:
            labels = labels.astype(np.int64)
        except (TypeError, ValueError):
            raise InvalidInputError("class labels must be integers") from None
    return Dataset(features=x, labels=labels.astype(np.int64))


def _seed_of(random_state):
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    raise InvalidInputError("random_state must be an integer or None")


class _PairDistanceMixin:
    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X @ self.components_.T

    def pair_distance(self, X, Y):
        """Squared metric distance between rows of X and rows of Y."""
        diff = self.transform(X) - self.transform(Y)
        return np.einsum("ij,ij->i", diff, diff)

    def score(self, X, y):
        """Pooled retrieval ROC AUC on (X, y); higher is better."""
        check_is_fitted(self, "components_")
        return retrieval_auc(self.metric_, _as_dataset(X, y), rank_tol=self.rank_tol)


class MahalanobisMetricLearner(_PairDistanceMixin, TransformerMixin, BaseEstimator):
    """Learn a PSD matrix metric with a convex orthogonality penalty.

    Parameters
    ----------
    family : {'sfn', 'vnd', 'ldd'} or None
        Penalty family; None trains without regularization.
    gamma : float
        Penalty weight (ignored when family is None).
    epsilon : float
        Spectrum shift for the 'vnd' and 'ldd' penalties.
    stepsize, batch_size, margin, max_epochs, rel_tol, full_batch :
        Passed through to the trainer; see TrainConfig.
    random_state : int or None
        Seeds batch sampling. None means seed 0.
    rank_tol : float
        Relative eigenvalue cutoff used when factoring the learned matrix.

    Attributes
    ----------
    metric_ : MahalanobisMetric
    matrix_ : ndarray of shape (n_features, n_features)
    components_ : ndarray of shape (n_kept, n_features)
        Rows are sqrt-eigenvalue-scaled eigenvectors of `matrix_`.
    history_ : list of EpochRecord
    """

    def __init__(
        self,
        family=None,
        gamma=0.1,
        epsilon=1e-5,
        stepsize=1e-3,
        batch_size=100,
        margin=1.0,
        max_epochs=50,
        rel_tol=1e-6,
        full_batch=False,
        random_state=0,
        rank_tol=1e-8,
    ):
        self.family = family
        self.gamma = gamma
        self.epsilon = epsilon
        self.stepsize = stepsize
        self.batch_size = batch_size
        self.margin = margin
        self.max_epochs = max_epochs
        self.rel_tol = rel_tol
        self.full_batch = full_batch
        self.random_state = random_state
        self.rank_tol = rank_tol

    def _regularizer(self):
        if self.family is None:
            return RegularizerSpec("sfn", "convex", 0.0)
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown family {self.family!r}")
        eps = self.epsilon if self.family in ("vnd", "ldd") else None
        return RegularizerSpec(self.family, "convex", self.gamma, eps)

    def fit(self, X, y):
        dataset = _as_dataset(X, y)
        config = TrainConfig(
            regularizer=self._regularizer(),
            stepsize=self.stepsize,
            batch_size=self.batch_size,
            margin=self.margin,
            max_epochs=self.max_epochs,
            rel_tol=self.rel_tol,
            seed=_seed_of(self.random_state),
            full_batch=self.full_batch,
            rank_tol=self.rank_tol,
        )
        self.metric_ = train_mdml(dataset, config)
        self.matrix_ = self.metric_.matrix
        self.components_ = psd_factorize(self.matrix_, rank_tol=self.rank_tol)
        self.history_ = self.metric_.history
        self.n_features_in_ = dataset.dim
        return self


class ProjectionMetricLearner(_PairDistanceMixin, TransformerMixin, BaseEstimator):
    """Learn a rectangular projection with a nonconvex orthogonality penalty.

    The projection is trained by plain stochastic subgradient descent with
    random restarts; `n_projections` fixes the embedding dimension up front.
    """

    def __init__(
        self,
        n_projections=10,
        family="sfn",
        gamma=0.1,
        stepsize=1e-3,
        batch_size=100,
        margin=1.0,
        max_epochs=50,
        rel_tol=1e-6,
        restarts=5,
        full_batch=False,
        random_state=0,
        rank_tol=1e-8,
    ):
        self.n_projections = n_projections
        self.family = family
        self.gamma = gamma
        self.stepsize = stepsize
        self.batch_size = batch_size
        self.margin = margin
        self.max_epochs = max_epochs
        self.rel_tol = rel_tol
        self.restarts = restarts
        self.full_batch = full_batch
        self.random_state = random_state
        self.rank_tol = rank_tol

    def fit(self, X, y):
        dataset = _as_dataset(X, y)
        config = TrainConfig(
            regularizer=RegularizerSpec(self.family, "nonconvex", self.gamma),
            stepsize=self.stepsize,
            batch_size=self.batch_size,
            margin=self.margin,
            max_epochs=self.max_epochs,
            rel_tol=self.rel_tol,
            seed=_seed_of(self.random_state),
            num_projections=self.n_projections,
            restarts=self.restarts,
            full_batch=self.full_batch,
            rank_tol=self.rank_tol,
        )
        self.metric_ = train_pdml(dataset, config)
        self.components_ = self.metric_.matrix
        self.history_ = self.metric_.history
        self.n_features_in_ = dataset.dim
        return self
