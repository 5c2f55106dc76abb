"""Tests for the scikit-learn style estimator wrappers."""

import numpy as np
import pytest
from sklearn.base import clone

from odml import (
    InvalidInputError,
    MahalanobisMetricLearner,
    ProjectionMetricLearner,
)


def two_blobs(seed=60, n_per_class=30, dim=4):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(n_per_class, dim)) * 0.4
    x1 = rng.normal(size=(n_per_class, dim)) * 0.4
    x1[:, 0] += 5.0
    x = np.vstack([x0, x1])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return x, y


def fast_psd_learner(**overrides):
    params = dict(family="vnd", gamma=0.01, max_epochs=15, random_state=0)
    params.update(overrides)
    return MahalanobisMetricLearner(**params)


def fast_proj_learner(**overrides):
    params = dict(
        n_projections=2, family="sfn", gamma=0.01,
        max_epochs=10, restarts=2, random_state=0,
    )
    params.update(overrides)
    return ProjectionMetricLearner(**params)


class TestMahalanobisLearner:
    def test_fit_sets_attributes(self):
        x, y = two_blobs()
        est = fast_psd_learner().fit(x, y)
        assert est.n_features_in_ == 4
        assert est.matrix_.shape == (4, 4)
        assert est.components_.shape[1] == 4
        assert np.allclose(est.matrix_, est.matrix_.T)
        assert len(est.history_) >= 1
        # components reproduce the matrix up to the rank cutoff
        assert np.allclose(est.components_.T @ est.components_, est.matrix_)

    def test_transform_shape_and_distances(self):
        x, y = two_blobs()
        est = fast_psd_learner().fit(x, y)
        z = est.transform(x[:7])
        assert z.shape == (7, est.components_.shape[0])
        d = est.pair_distance(x[:3], x[3:6])
        diff = (x[:3] - x[3:6]) @ est.matrix_ @ (x[:3] - x[3:6]).T
        assert np.allclose(d, np.diag(diff))

    def test_deterministic_given_seed(self):
        x, y = two_blobs()
        a = fast_psd_learner(random_state=7).fit(x, y)
        b = fast_psd_learner(random_state=7).fit(x, y)
        assert np.array_equal(a.matrix_, b.matrix_)

    def test_seed_changes_batches(self):
        x, y = two_blobs()
        a = fast_psd_learner(random_state=0).fit(x, y)
        b = fast_psd_learner(random_state=1).fit(x, y)
        assert not np.array_equal(a.matrix_, b.matrix_)

    def test_score_separable(self):
        x, y = two_blobs()
        est = fast_psd_learner().fit(x, y)
        assert est.score(x, y) > 0.95

    def test_none_family_trains_unregularized(self):
        x, y = two_blobs()
        est = fast_psd_learner(family=None).fit(x, y)
        assert est._regularizer().gamma == 0.0
        assert est.matrix_.shape == (4, 4)

    def test_unknown_family(self):
        x, y = two_blobs()
        with pytest.raises(InvalidInputError):
            fast_psd_learner(family="frob").fit(x, y)

    def test_float_labels_must_be_integral(self):
        x, y = two_blobs()
        fast_psd_learner().fit(x, y.astype(np.float64))  # integral floats pass
        with pytest.raises(InvalidInputError):
            fast_psd_learner().fit(x, y + 0.5)

    def test_transform_rejects_wrong_width(self):
        x, y = two_blobs()
        est = fast_psd_learner().fit(x, y)
        with pytest.raises(InvalidInputError):
            est.transform(x[:, :3])

    def test_bad_random_state(self):
        x, y = two_blobs()
        with pytest.raises(InvalidInputError):
            fast_psd_learner(random_state="shuffle").fit(x, y)


class TestProjectionLearner:
    def test_fit_sets_attributes(self):
        x, y = two_blobs()
        est = fast_proj_learner().fit(x, y)
        assert est.n_features_in_ == 4
        assert est.components_.shape == (2, 4)
        assert len(est.history_) >= 1

    def test_transform_matches_components(self):
        x, y = two_blobs()
        est = fast_proj_learner().fit(x, y)
        assert np.allclose(est.transform(x[:5]), x[:5] @ est.components_.T)

    def test_deterministic_given_seed(self):
        x, y = two_blobs()
        a = fast_proj_learner(random_state=3).fit(x, y)
        b = fast_proj_learner(random_state=3).fit(x, y)
        assert np.array_equal(a.components_, b.components_)

    def test_score_separable(self):
        x, y = two_blobs()
        est = fast_proj_learner(max_epochs=30).fit(x, y)
        assert est.score(x, y) > 0.95


class TestSklearnProtocol:
    @pytest.mark.parametrize("factory", [fast_psd_learner, fast_proj_learner])
    def test_get_params_round_trip(self, factory):
        est = factory()
        params = est.get_params()
        rebuilt = type(est)(**params)
        assert rebuilt.get_params() == params

    @pytest.mark.parametrize("factory", [fast_psd_learner, fast_proj_learner])
    def test_clone_is_unfitted(self, factory):
        x, y = two_blobs()
        est = factory().fit(x, y)
        fresh = clone(est)
        assert not hasattr(fresh, "components_")
        assert fresh.get_params() == est.get_params()

    def test_set_params_chains(self):
        est = fast_psd_learner().set_params(gamma=0.5, max_epochs=3)
        assert est.gamma == 0.5 and est.max_epochs == 3
