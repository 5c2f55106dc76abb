"""Hinge losses, subgradients, and both training loops.

Descent and determinism properties run on tiny synthetic sets so the whole
file stays under a few seconds.
"""

import numpy as np
import pytest

from odml import (
    Dataset,
    InvalidBatchError,
    PairBatch,
    RegularizerSpec,
    SynthSpec,
    TrainConfig,
    config_hash,
    enumerate_pairs,
    mdml_loss,
    mdml_subgradient,
    omega_convex,
    pdml_loss,
    pdml_subgradient,
    synth_generate,
    train_mdml,
    train_pdml,
)


def two_blob_dataset(seed=0, d=2, separation=6.0, n=30, std=0.5):
    means = np.zeros((2, d))
    means[1, 0] = separation
    spec = SynthSpec(num_classes=2, dim=d, class_sizes=(n, n),
                     within_class_std=std, mean_radius=1.0, means=means,
                     seed=seed)
    return synth_generate(spec)


def hand_batch():
    similar = [(np.array([0.0, 0.0]), np.array([1.0, 0.0]))]
    dissimilar = [(np.array([0.0, 0.0]), np.array([0.0, 2.0]))]
    return PairBatch(similar=similar, dissimilar=dissimilar)


def convex_config(family="sfn", gamma=0.0, **kw):
    reg = RegularizerSpec(family, "convex", gamma, kw.pop("epsilon", 1e-5))
    return TrainConfig(regularizer=reg, **kw)


# --------------------------------------------------------------------- losses


def test_mdml_loss_hand_value():
    # similar pair distance 1, dissimilar distance 4, margin 2 -> hinge 0
    batch = hand_batch()
    assert mdml_loss(np.eye(2), batch, margin=2.0) == pytest.approx(1.0)
    # margin 6 -> hinge adds 6 - 4 = 2
    assert mdml_loss(np.eye(2), batch, margin=6.0) == pytest.approx(3.0)


def test_mdml_loss_zero_matrix():
    batch = hand_batch()
    assert mdml_loss(np.zeros((2, 2)), batch, margin=1.0) == pytest.approx(1.0)


def test_mdml_loss_empty_side_rejected():
    batch = PairBatch(similar=[], dissimilar=hand_batch().dissimilar)
    with pytest.raises(InvalidBatchError):
        mdml_loss(np.eye(2), batch, margin=1.0)


def test_mdml_subgradient_inactive_hinge_is_similar_gram():
    batch = hand_batch()
    g = mdml_subgradient(np.eye(2), batch, margin=2.0)
    want = np.array([[1.0, 0.0], [0.0, 0.0]])  # z z^T of the similar pair
    np.testing.assert_allclose(g, want, atol=1e-12)
    assert np.linalg.eigvalsh(g).min() >= -1e-12


def test_mdml_subgradient_zero_pairs():
    z = np.zeros(2)
    batch = PairBatch(similar=[(z, z)], dissimilar=[(z, z.copy())])
    g = mdml_subgradient(np.eye(2), batch, margin=0.5)
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_mdml_subgradient_matches_finite_differences():
    rng = np.random.default_rng(201)
    sim = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(4)]
    dis = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(4)]
    batch = PairBatch(similar=sim, dissimilar=dis)
    m = np.eye(3) * 0.37  # keeps every hinge strictly off its kink
    g = mdml_subgradient(m, batch, margin=1.0)
    h = 1e-6
    for i in range(3):
        for j in range(3):
            e = np.zeros((3, 3))
            e[i, j] += h / 2
            e[j, i] += h / 2
            num = (mdml_loss(m + e, batch, 1.0) - mdml_loss(m - e, batch, 1.0)) / (2 * h)
            sym = g[i, j] if i == j else (g[i, j] + g[j, i]) / 2
            assert sym == pytest.approx(num, rel=1e-5, abs=1e-7)


def test_pdml_mdml_loss_bridge():
    rng = np.random.default_rng(203)
    a = rng.normal(size=(2, 4))
    sim = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(5)]
    dis = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(5)]
    batch = PairBatch(similar=sim, dissimilar=dis)
    for margin in (0.5, 1.0, 3.0):
        assert abs(pdml_loss(a, batch, margin)
                   - mdml_loss(a.T @ a, batch, margin)) <= 1e-10


def test_pdml_loss_zero_projection_returns_margin():
    batch = hand_batch()
    assert pdml_loss(np.zeros((2, 2)), batch, margin=1.5) == pytest.approx(1.5)


def test_pdml_subgradient_matches_finite_differences():
    rng = np.random.default_rng(207)
    a = rng.normal(size=(2, 3)) * 0.4
    sim = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(4)]
    dis = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(4)]
    batch = PairBatch(similar=sim, dissimilar=dis)
    g = pdml_subgradient(a, batch, margin=1.0)
    h = 1e-6
    for i in range(2):
        for j in range(3):
            e = np.zeros((2, 3))
            e[i, j] = h
            num = (pdml_loss(a + e, batch, 1.0) - pdml_loss(a - e, batch, 1.0)) / (2 * h)
            assert g[i, j] == pytest.approx(num, rel=1e-4, abs=1e-6)


# ------------------------------------------------------------------- training


def test_train_mdml_zero_epochs_returns_identity():
    data = two_blob_dataset()
    cfg = convex_config(max_epochs=0)
    metric = train_mdml(data, cfg)
    np.testing.assert_array_equal(metric.matrix, np.eye(2))
    assert len(metric.history) == 1  # the initial probe record


def test_train_mdml_full_batch_descent():
    data = two_blob_dataset(seed=3)
    batch = enumerate_pairs(data)
    for family in ("sfn", "vnd", "ldd"):
        cfg = convex_config(family=family, gamma=0.1, epsilon=1e-3,
                            stepsize=1e-3, max_epochs=60, rel_tol=0.0,
                            full_batch=True)
        metric = train_mdml(data, cfg)
        reg = RegularizerSpec(family, "convex", 0.1, 1e-3)
        objectives = [
            mdml_loss(np.eye(2), batch, 1.0) + 0.1 * omega_convex(reg, np.eye(2))
        ]
        objectives += [rec.objective for rec in metric.history[1:]]
        diffs = np.diff(objectives)
        assert (diffs <= 1e-9).all(), f"{family}: ascent step {diffs.max()}"


def test_train_mdml_history_shape_and_provenance():
    data = two_blob_dataset(seed=4)
    cfg = convex_config(max_epochs=5, rel_tol=0.0)
    metric = train_mdml(data, cfg)
    assert len(metric.history) == 6
    assert [rec.epoch for rec in metric.history] == list(range(6))
    assert metric.provenance["config_hash"] == config_hash(cfg)
    assert metric.provenance["epochs_run"] == 5
    w = np.linalg.eigvalsh(metric.matrix)
    assert w.min() >= -1e-8 * max(1.0, w.max())


def test_train_mdml_deterministic():
    data = two_blob_dataset(seed=5)
    cfg = convex_config(family="vnd", gamma=0.05, max_epochs=8, seed=11)
    a = train_mdml(data, cfg)
    b = train_mdml(data, cfg)
    assert np.array_equal(a.matrix, b.matrix)


def test_train_mdml_seed_changes_stochastic_path():
    data = two_blob_dataset(seed=5)
    a = train_mdml(data, convex_config(max_epochs=8, seed=1))
    b = train_mdml(data, convex_config(max_epochs=8, seed=2))
    assert not np.array_equal(a.matrix, b.matrix)


def test_train_mdml_rejects_nonconvex_spec():
    from odml import InvalidInputError
    data = two_blob_dataset()
    reg = RegularizerSpec("sfn", "nonconvex", 0.1)
    with pytest.raises(InvalidInputError):
        train_mdml(data, TrainConfig(regularizer=reg))


def test_train_pdml_zero_epochs_returns_seeded_init():
    data = two_blob_dataset(seed=6)
    reg = RegularizerSpec("sfn", "nonconvex", 0.1)
    cfg = TrainConfig(regularizer=reg, num_projections=2, restarts=1,
                      max_epochs=0, seed=3)
    a = train_pdml(data, cfg)
    b = train_pdml(data, cfg)
    assert a.matrix.shape == (2, 2)
    assert np.array_equal(a.matrix, b.matrix)


def test_train_pdml_descends_without_penalty():
    data = two_blob_dataset(seed=7)
    reg = RegularizerSpec("sfn", "nonconvex", 0.0)
    cfg = TrainConfig(regularizer=reg, num_projections=2, restarts=2,
                      max_epochs=40, stepsize=1e-3, rel_tol=0.0, seed=5)
    proj = train_pdml(data, cfg)
    hist = proj.history
    assert hist[-1].objective <= hist[0].objective


def test_train_pdml_picks_best_restart():
    data = two_blob_dataset(seed=8)
    reg = RegularizerSpec("ldd", "nonconvex", 0.01)
    cfg = TrainConfig(regularizer=reg, num_projections=2, restarts=4,
                      max_epochs=10, rel_tol=0.0, seed=9)
    proj = train_pdml(data, cfg)
    finals = proj.provenance["restart_objectives"]
    assert len(finals) == 4
    assert proj.provenance["final_objective"] <= min(finals) + 1e-12


def test_train_config_validation():
    from odml import InvalidInputError
    reg = RegularizerSpec("sfn", "convex", 0.1)
    with pytest.raises(InvalidInputError):
        TrainConfig(regularizer=reg, stepsize=0.0)
    with pytest.raises(InvalidInputError):
        TrainConfig(regularizer=reg, batch_size=3)  # odd batch cannot split
    with pytest.raises(InvalidInputError):
        TrainConfig(regularizer=reg, margin=-1.0)


def test_config_hash_sensitivity():
    reg = RegularizerSpec("sfn", "convex", 0.1)
    a = TrainConfig(regularizer=reg, stepsize=1e-3)
    b = TrainConfig(regularizer=reg, stepsize=2e-3)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(TrainConfig(regularizer=reg, stepsize=1e-3))
