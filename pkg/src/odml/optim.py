"""Metric training by stochastic proximal subgradient descent.

Two problem shapes share one hinge loss on pair distances:

- ``train_mdml``: learn a PSD matrix M scoring pairs by (x-y)^T M (x-y).
  The data term is handled by a subgradient step, the convex penalty by its
  exact prox, so M stays PSD at every iterate.
- ``train_pdml``: learn a rectangular projection A scoring pairs by
  ||A(x-y)||^2, with the nonconvex penalty folded into the subgradient and
  several random restarts.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .data import Dataset, PairBatch, enumerate_pairs, sample_batch
from .exceptions import (
    InvalidBatchError,
    InvalidDatasetError,
    InvalidInputError,
)
from .linalg import sym_eig
from .regularizers import (
    RegularizerSpec,
    grad_nonconvex,
    omega_convex,
    omega_nonconvex,
    prox_matrix,
)

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "MahalanobisMetric",
    "ProjectionMatrix",
    "config_hash",
    "mdml_loss",
    "mdml_subgradient",
    "pdml_loss",
    "pdml_subgradient",
    "train_mdml",
    "train_pdml",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both trainers.

    Parameters
    ----------
    regularizer : RegularizerSpec
        Convex form for :func:`train_mdml`, nonconvex for :func:`train_pdml`.
    stepsize : float
        Base step length eta.
    batch_size : int
        Pairs per stochastic step, half similar and half dissimilar.
    margin : float
        Hinge margin on dissimilar-pair distances.
    max_epochs : int
        Epoch cap; an epoch is ``n // batch_size`` steps (at least one), or
        a single full-batch step when `full_batch` is set.
    rel_tol : float
        Stop when the probe objective changes by less than this relative
        amount between epochs.
    seed : int
        Seeds batch sampling, the probe set and projection inits.
    num_projections : int, optional
        Row count of the learned projection (projection trainer only).
    restarts : int
        Independent random inits for the projection trainer; the run with
        the lowest final probe objective wins.
    full_batch : bool
        Deterministic mode: every step uses all pairs, objectives are exact.
    probe_pairs : int
        Size of the fixed pair sample used for objective logging and the
        stopping rule in stochastic mode.
    stepsize_decay : bool
        Scale the step by 1/sqrt(t) over global step count t.
    steps_per_epoch : int, optional
        Override the epoch length in stochastic mode.
    rank_tol : float
        Relative eigenvalue threshold used for the rank column of the log.
    """

    regularizer: RegularizerSpec
    stepsize: float = 1e-3
    batch_size: int = 100
    margin: float = 1.0
    max_epochs: int = 50
    rel_tol: float = 1e-6
    seed: int = 0
    num_projections: Optional[int] = None
    restarts: int = 5
    full_batch: bool = False
    probe_pairs: int = 2000
    stepsize_decay: bool = False
    steps_per_epoch: Optional[int] = None
    rank_tol: float = 1e-8

    def __post_init__(self):
        if not isinstance(self.regularizer, RegularizerSpec):
            raise InvalidInputError("regularizer must be a RegularizerSpec")
        if not (math.isfinite(self.stepsize) and self.stepsize > 0):
            raise InvalidInputError("stepsize must be finite and > 0")
        if self.batch_size < 2 or self.batch_size % 2:
            raise InvalidInputError("batch_size must be even and >= 2")
        if not (math.isfinite(self.margin) and self.margin > 0):
            raise InvalidInputError("margin must be finite and > 0")
        if self.max_epochs < 0:
            raise InvalidInputError("max_epochs must be >= 0")
        if not (math.isfinite(self.rel_tol) and self.rel_tol >= 0):
            raise InvalidInputError("rel_tol must be finite and >= 0")
        if self.num_projections is not None and self.num_projections < 1:
            raise InvalidInputError("num_projections must be >= 1")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.probe_pairs < 2 or self.probe_pairs % 2:
            raise InvalidInputError("probe_pairs must be even and >= 2")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise InvalidInputError("steps_per_epoch must be >= 1")
        if not (math.isfinite(self.rank_tol) and self.rank_tol > 0):
            raise InvalidInputError("rank_tol must be finite and > 0")

    def epoch_steps(self, num_examples: int) -> int:
        if self.full_batch:
            return 1
        if self.steps_per_epoch is not None:
            return self.steps_per_epoch
        return max(1, num_examples // self.batch_size)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    objective: float
    regularizer_value: float
    rank: int


@dataclass
class MahalanobisMetric:
    """A learned PSD matrix with its training provenance."""

    dim: int
    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)
    history: List[EpochRecord] = field(default_factory=list)


@dataclass
class ProjectionMatrix:
    """A learned rectangular projection (rows are projection vectors)."""

    num_projections: int
    dim: int
    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)
    history: List[EpochRecord] = field(default_factory=list)


def config_hash(config: TrainConfig) -> str:
    """Stable hex digest identifying a training configuration."""
    payload = json.dumps(asdict(config), sort_keys=True, default=repr)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _require_both_sides(batch: PairBatch):
    if batch.similar.shape[0] == 0:
        raise InvalidBatchError("batch has no similar pairs")
    if batch.dissimilar.shape[0] == 0:
        raise InvalidBatchError("batch has no dissimilar pairs")


def _quad_forms(z, m):
    return np.einsum("ij,ij->i", z @ m, z)


def mdml_loss(m, batch: PairBatch, margin: float) -> float:
    """Hinge loss of a PSD matrix on a pair batch.

    Mean squared metric distance over similar pairs plus mean hinge
    ``max(0, margin - distance)`` over dissimilar pairs.
    """
    _require_both_sides(batch)
    m = np.asarray(m, dtype=np.float64)
    sim = _quad_forms(batch.similar_diffs, m)
    dis = _quad_forms(batch.dissimilar_diffs, m)
    return float(sim.mean() + np.maximum(0.0, margin - dis).mean())


def mdml_subgradient(m, batch: PairBatch, margin: float) -> np.ndarray:
    """A subgradient of :func:`mdml_loss` in M.

    Dissimilar pairs contribute only while strictly inside the margin;
    pairs exactly at the hinge kink contribute zero.
    """
    _require_both_sides(batch)
    m = np.asarray(m, dtype=np.float64)
    zs = batch.similar_diffs
    zd = batch.dissimilar_diffs
    grad = zs.T @ zs / zs.shape[0]
    active = (margin - _quad_forms(zd, m)) > 0.0
    if np.any(active):
        za = zd[active]
        grad = grad - za.T @ za / zd.shape[0]
    return (grad + grad.T) / 2.0


def pdml_loss(a, batch: PairBatch, margin: float) -> float:
    """Hinge loss of a projection on a pair batch (distances ||A z||^2)."""
    _require_both_sides(batch)
    a = np.asarray(a, dtype=np.float64)
    sim = np.sum((batch.similar_diffs @ a.T) ** 2, axis=1)
    dis = np.sum((batch.dissimilar_diffs @ a.T) ** 2, axis=1)
    return float(sim.mean() + np.maximum(0.0, margin - dis).mean())


def pdml_subgradient(a, batch: PairBatch, margin: float) -> np.ndarray:
    """A subgradient of :func:`pdml_loss` in A: ``2 A (Cs - Cd_active)``."""
    _require_both_sides(batch)
    a = np.asarray(a, dtype=np.float64)
    zs = batch.similar_diffs
    zd = batch.dissimilar_diffs
    core = zs.T @ zs / zs.shape[0]
    active = (margin - np.sum((zd @ a.T) ** 2, axis=1)) > 0.0
    if np.any(active):
        za = zd[active]
        core = core - za.T @ za / zd.shape[0]
    return 2.0 * a @ core


def _spectral_rank(m, rank_tol):
    w = sym_eig(m).eigenvalues
    if w.size == 0:
        return 0
    return int(np.sum(w > rank_tol * max(float(w[0]), 1.0)))


def _build_probe(dataset, config, rng):
    if config.full_batch:
        return enumerate_pairs(dataset)
    return sample_batch(dataset, config.probe_pairs, rng)


def _converged(objective, previous, rel_tol):
    return abs(objective - previous) <= rel_tol * max(1.0, abs(previous))


def train_mdml(dataset: Dataset, config: TrainConfig) -> MahalanobisMetric:
    """Learn a PSD metric by proximal stochastic subgradient descent.

    Starts from the identity. Each step takes a subgradient of the hinge
    loss on a fresh pair batch, then applies the exact prox of the convex
    penalty, which also projects back onto the PSD cone. The per-epoch
    objective (hinge loss plus weighted penalty on the probe pair set)
    drives the log and the stopping rule.
    """
    spec = config.regularizer
    if spec.form != "convex":
        raise InvalidInputError("train_mdml needs a convex regularizer spec")
    if dataset.num_classes < 2:
        raise InvalidDatasetError("training needs at least two classes")
    d = dataset.dim
    probe_ss, batch_ss = np.random.SeedSequence(config.seed).spawn(2)
    probe = _build_probe(dataset, config, np.random.default_rng(probe_ss))
    batch_rng = np.random.default_rng(batch_ss)
    steps = config.epoch_steps(dataset.num_examples)

    m = np.eye(d)

    def log_entry(epoch, obj):
        return EpochRecord(
            epoch, obj, omega_convex(spec, m), _spectral_rank(m, config.rank_tol)
        )

    objective = mdml_loss(m, probe, config.margin) + spec.gamma * omega_convex(
        spec, m
    )
    history = [log_entry(0, objective)]
    t = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        for _ in range(steps):
            batch = (
                probe
                if config.full_batch
                else sample_batch(dataset, config.batch_size, batch_rng)
            )
            grad = mdml_subgradient(m, batch, config.margin)
            t += 1
            eta = (
                config.stepsize / math.sqrt(t)
                if config.stepsize_decay
                else config.stepsize
            )
            m = prox_matrix(spec, m - eta * grad, eta)
        previous = objective
        objective = mdml_loss(m, probe, config.margin) + spec.gamma * omega_convex(
            spec, m
        )
        history.append(log_entry(epoch, objective))
        epochs_run = epoch
        if _converged(objective, previous, config.rel_tol):
            break
    return MahalanobisMetric(
        dim=d,
        matrix=m,
        provenance={
            "config_hash": config_hash(config),
            "epochs_run": epochs_run,
            "final_objective": history[-1].objective,
        },
        history=history,
    )


def train_pdml(dataset: Dataset, config: TrainConfig) -> ProjectionMatrix:
    """Learn a rectangular projection by stochastic subgradient descent.

    Runs `config.restarts` independent runs from Gaussian inits with entry
    scale 1/sqrt(dim) and keeps the one with the lowest final probe
    objective (hinge loss plus weighted nonconvex penalty). All restarts
    share the probe pair set, so their objectives are comparable.
    """
    spec = config.regularizer
    if spec.form != "nonconvex":
        raise InvalidInputError("train_pdml needs a nonconvex regularizer spec")
    if config.num_projections is None:
        raise InvalidInputError("train_pdml needs num_projections")
    if dataset.num_classes < 2:
        raise InvalidDatasetError("training needs at least two classes")
    d = dataset.dim
    r = config.num_projections
    if r > d:
        raise InvalidInputError(f"num_projections must be <= dim ({d})")
    seeds = np.random.SeedSequence(config.seed).spawn(1 + config.restarts)
    probe = _build_probe(dataset, config, np.random.default_rng(seeds[0]))
    steps = config.epoch_steps(dataset.num_examples)

    def full_objective(a):
        value = pdml_loss(a, probe, config.margin)
        if spec.gamma > 0:
            value += spec.gamma * omega_nonconvex(spec.family, a)
        return value

    best = None
    finals = []
    for restart in range(config.restarts):
        init_ss, batch_ss = seeds[1 + restart].spawn(2)
        rng = np.random.default_rng(init_ss)
        batch_rng = np.random.default_rng(batch_ss)
        a = rng.normal(0.0, 1.0 / math.sqrt(d), size=(r, d))
        objective = full_objective(a)
        reg_value = omega_nonconvex(spec.family, a)
        history = [EpochRecord(0, objective, reg_value, r)]
        t = 0
        epochs_run = 0
        for epoch in range(1, config.max_epochs + 1):
            for _ in range(steps):
                batch = (
                    probe
                    if config.full_batch
                    else sample_batch(dataset, config.batch_size, batch_rng)
                )
                grad = pdml_subgradient(a, batch, config.margin)
                if spec.gamma > 0:
                    grad = grad + spec.gamma * grad_nonconvex(spec.family, a)
                t += 1
                eta = (
                    config.stepsize / math.sqrt(t)
                    if config.stepsize_decay
                    else config.stepsize
                )
                a = a - eta * grad
            previous = objective
            objective = full_objective(a)
            history.append(
                EpochRecord(epoch, objective, omega_nonconvex(spec.family, a), r)
            )
            epochs_run = epoch
            if _converged(objective, previous, config.rel_tol):
                break
        final = history[-1].objective
        finals.append(final)
        if best is None or final < best[0]:
            best = (final, restart, a, history, epochs_run)
    final, restart, a, history, epochs_run = best
    return ProjectionMatrix(
        num_projections=r,
        dim=d,
        matrix=a,
        provenance={
            "config_hash": config_hash(config),
            "epochs_run": epochs_run,
            "restart": restart,
            "restart_objectives": finals,
            "final_objective": final,
        },
        history=history,
    )
