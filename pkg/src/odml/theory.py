"""Numerical checks of the theoretical guarantees.

Two groups of results are covered:

1. Balancedness: the spectral condition number of a projection's Gram matrix
   is capped by an explicit function of its orthogonality penalty, and the
   imbalance factor of between-class distances inherits that cap times the
   Euclidean spread of the class means.
2. Generalization: the expected-vs-empirical error gap of a learned metric
   decays like 1/sqrt(m), with a constant controlled by the cap on the
   convex penalty.

Everything here is a plain calculator plus "does the inequality hold on this
instance" checkers used by the randomized verification suites.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import (
    BoundInapplicableError,
    DegenerateMeansError,
    DomainError,
    InvalidInputError,
)
from .linalg import condition_number
from .regularizers import RegularizerSpec, omega_convex, omega_nonconvex
from .validation import check_finite_array

__all__ = [
    "cond_curve",
    "cond_curve_inverse",
    "mean_distance_ratio",
    "vnd_imbalance_bound",
    "ldd_imbalance_bound",
    "GenBoundInputs",
    "generalization_bound",
    "TraceLemmaReport",
    "check_trace_lemmas",
    "CondBoundReport",
    "check_cond_bounds",
]

# Slack allowed when verifying an inequality numerically.
CHECK_SLACK = 1e-9


def cond_curve(c) -> float:
    """The two-eigenvalue penalty curve ``f(c) = c^(1/(c+1)) * (1 + 1/c)``.

    For a Gram spectrum with condition number c, the smallest possible von
    Neumann orthogonality penalty of the extreme eigenvalue pair is
    ``2 - f(c)``; inverting the curve therefore converts a penalty value
    into a condition-number ceiling. f is strictly increasing on (0, 1],
    strictly decreasing on [1, inf), f(1) = 2, and tends to 1 at infinity.
    """
    c = float(c)
    if not (math.isfinite(c) and c > 0):
        raise DomainError(f"cond_curve requires c > 0, got {c}")
    # exp(log(c)/(c+1)) avoids overflow of c**x for huge c.
    return math.exp(math.log(c) / (c + 1.0)) * (1.0 + 1.0 / c)


def cond_curve_inverse(v) -> float:
    """Inverse of :func:`cond_curve` on its decreasing branch c >= 1.

    Defined for v in (1, 2]; returns the unique c >= 1 with f(c) = v,
    located by bisection after doubling an upper bracket, to a residual
    ``|f(c) - v| <= 1e-10``.
    """
    v = float(v)
    if not (1.0 < v <= 2.0):
        raise DomainError(f"cond_curve_inverse requires v in (1, 2], got {v}")
    if v == 2.0:
        return 1.0
    lo = 1.0
    hi = 2.0
    for _ in range(200):
        if cond_curve(hi) < v:
            break
        lo = hi
        hi *= 2.0
    else:
        raise DomainError(f"failed to bracket cond_curve_inverse({v})")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        fm = cond_curve(mid)
        if abs(fm - v) <= 1e-10:
            return mid
        if fm > v:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mean_distance_ratio(means) -> float:
    """Euclidean spread of class means: max over min squared distance.

    `means` has one row per class. Raises if fewer than two classes or if
    two means coincide.
    """
    means = check_finite_array(means, "means")
    if means.ndim != 2 or means.shape[0] < 2:
        raise InvalidInputError("means must be a (K, D) array with K >= 2")
    diff = means[:, None, :] - means[None, :, :]
    sq = np.sum(diff**2, axis=-1)
    iu = np.triu_indices(means.shape[0], k=1)
    pair_sq = sq[iu]
    d_min = float(pair_sq.min())
    if d_min <= 0.0:
        raise DegenerateMeansError("two class means coincide")
    return float(pair_sq.max()) / d_min


def vnd_imbalance_bound(omega_vnd, mean_ratio) -> float:
    """Imbalance-factor cap from a von Neumann orthogonality penalty.

    Valid only when the penalty is below 1; outside that range the curve
    inversion is undefined and :class:`BoundInapplicableError` is raised.
    """
    omega_vnd = float(omega_vnd)
    if not (0.0 <= omega_vnd < 1.0):
        raise BoundInapplicableError(
            f"bound requires 0 <= penalty < 1, got {omega_vnd}"
        )
    mean_ratio = float(mean_ratio)
    if mean_ratio < 1.0:
        raise InvalidInputError("mean_ratio is a max/min ratio, must be >= 1")
    return mean_ratio * cond_curve_inverse(2.0 - omega_vnd)


def ldd_imbalance_bound(omega_ldd, mean_ratio) -> float:
    """Imbalance-factor cap from a log-determinant orthogonality penalty:
    ``4 * mean_ratio * exp(penalty)``."""
    omega_ldd = float(omega_ldd)
    if omega_ldd < 0.0:
        raise InvalidInputError("the ldd penalty is nonnegative")
    mean_ratio = float(mean_ratio)
    if mean_ratio < 1.0:
        raise InvalidInputError("mean_ratio is a max/min ratio, must be >= 1")
    return 4.0 * mean_ratio * math.exp(omega_ldd)


@dataclass(frozen=True)
class GenBoundInputs:
    """Quantities entering a generalization bound.

    Attributes
    ----------
    radius_bound : float
        B, a bound on |v^T (x - y)| over unit v and training pairs.
    penalty_cap : float
        C, the cap on the convex penalty over the hypothesis class.
    margin : float
        The hinge margin of the loss.
    confidence : float
        delta in (0, 1); the bound holds with probability 1 - delta.
    sample_size : int
        m, the number of training pairs.
    epsilon : float, optional
        Spectrum shift of the convex penalty ('ldd' only).
    dim : int, optional
        Ambient dimension D ('ldd' only).
    """

    radius_bound: float
    penalty_cap: float
    margin: float
    confidence: float
    sample_size: int
    epsilon: Optional[float] = None
    dim: Optional[int] = None

    def __post_init__(self):
        for name in ("radius_bound", "penalty_cap", "margin"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be finite and > 0")
        if not (0.0 < self.confidence < 1.0):
            raise InvalidInputError("confidence must lie in (0, 1)")
        if self.sample_size < 1:
            raise InvalidInputError("sample_size must be >= 1")


def generalization_bound(family, inputs: GenBoundInputs) -> float:
    """Cap on the expected-minus-empirical error of a learned metric.

    With B, C, tau, delta and m from `inputs`:

    - 'vnd': ``(4 B^2 C + max(tau, B^2 C) sqrt(2 log(1/delta))) / sqrt(m)``
    - 'ldd': ``(4 B^2 C / (log(1/eps) - 1)
      + max(tau, (C - D eps)/(log(1/eps) - 1)) sqrt(2 log(1/delta))) / sqrt(m)``,
      requiring ``log(1/eps) > 1`` and the dimension D
    - 'sfn': ``(2 B^2 min(2C, sqrt(C)) + max(tau, C) sqrt(2 log(1/delta))) / sqrt(m)``

    All three decay like 1/sqrt(m) and grow with the penalty cap C.
    """
    if family not in ("sfn", "vnd", "ldd"):
        raise InvalidInputError(f"unknown family {family!r}")
    b2 = inputs.radius_bound**2
    cap = inputs.penalty_cap
    tail = math.sqrt(2.0 * math.log(1.0 / inputs.confidence))
    root_m = math.sqrt(inputs.sample_size)
    if family == "vnd":
        return (4.0 * b2 * cap + max(inputs.margin, b2 * cap) * tail) / root_m
    if family == "sfn":
        complexity = 2.0 * b2 * min(2.0 * cap, math.sqrt(cap))
        return (complexity + max(inputs.margin, cap) * tail) / root_m
    # ldd
    if inputs.epsilon is None or inputs.dim is None:
        raise InvalidInputError("the ldd bound needs epsilon and dim")
    if not (0.0 < inputs.epsilon < 1.0) or inputs.dim < 1:
        raise InvalidInputError("epsilon must be in (0, 1) and dim >= 1")
    denom = math.log(1.0 / inputs.epsilon) - 1.0
    if denom <= 0.0:
        raise DomainError("the ldd bound requires log(1/epsilon) > 1")
    trace_cap = (cap - inputs.dim * inputs.epsilon) / denom
    return (
        4.0 * b2 * cap / denom + max(inputs.margin, trace_cap) * tail
    ) / root_m


@dataclass(frozen=True)
class TraceLemmaReport:
    trace: float
    vnd_penalty: float
    ldd_penalty: float
    ldd_trace_cap: float
    vnd_holds: bool
    ldd_holds: bool

    def to_dict(self):
        return {
            "trace": self.trace,
            "vnd_penalty": self.vnd_penalty,
            "ldd_penalty": self.ldd_penalty,
            "ldd_trace_cap": self.ldd_trace_cap,
            "vnd_holds": self.vnd_holds,
            "ldd_holds": self.ldd_holds,
        }


def check_trace_lemmas(m, epsilon) -> TraceLemmaReport:
    """Verify the trace caps behind the generalization bounds on one matrix.

    For any PSD `m`: ``tr(m)`` must not exceed the convex 'vnd' penalty,
    nor ``ldd penalty / (log(1/eps) - 1)``. The 'ldd' cap is tight at
    ``m = (1-eps) I``; subtracting a further ``D eps`` from the penalty
    (as a looser reading of the per-eigenvalue inequality might suggest)
    would make the identity itself a counterexample. Requires
    ``log(1/epsilon) > 1``. Inequalities are checked with 1e-9 slack.
    """
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 1.0) or math.log(1.0 / epsilon) <= 1.0:
        raise DomainError("epsilon must satisfy 0 < epsilon < 1/e")
    m = np.asarray(m, dtype=np.float64)
    trace = float(np.trace(m))
    vnd_val = omega_convex(
        RegularizerSpec("vnd", "convex", 0.0, epsilon), m
    )
    ldd_val = omega_convex(
        RegularizerSpec("ldd", "convex", 0.0, epsilon), m
    )
    ldd_cap = ldd_val / (math.log(1.0 / epsilon) - 1.0)
    return TraceLemmaReport(
        trace=trace,
        vnd_penalty=vnd_val,
        ldd_penalty=ldd_val,
        ldd_trace_cap=ldd_cap,
        vnd_holds=trace <= vnd_val + CHECK_SLACK,
        ldd_holds=trace <= ldd_cap + CHECK_SLACK,
    )


@dataclass(frozen=True)
class CondBoundReport:
    cond: float
    vnd_penalty: float
    ldd_penalty: float
    vnd_applicable: bool
    vnd_cap: Optional[float]
    ldd_cap: float
    vnd_holds: Optional[bool]
    ldd_holds: bool

    def to_dict(self):
        return {
            "cond": self.cond,
            "vnd_penalty": self.vnd_penalty,
            "ldd_penalty": self.ldd_penalty,
            "vnd_applicable": self.vnd_applicable,
            "vnd_cap": self.vnd_cap,
            "ldd_cap": self.ldd_cap,
            "vnd_holds": self.vnd_holds,
            "ldd_holds": self.ldd_holds,
        }


def check_cond_bounds(a) -> CondBoundReport:
    """Verify the condition-number caps on one projection matrix.

    ``cond(a a^T)`` must stay below the inverted penalty curve at
    ``2 - vnd penalty`` whenever that penalty is below 1, and below
    ``4 exp(ldd penalty)`` always. Checked with 1e-9 slack; `a` must have
    full row rank.
    """
    a = check_finite_array(a, "a")
    gram = a @ a.T
    cond = condition_number(gram)
    vnd_val = omega_nonconvex("vnd", a)
    ldd_val = omega_nonconvex("ldd", a)
    applicable = vnd_val < 1.0
    vnd_cap = cond_curve_inverse(2.0 - vnd_val) if applicable else None
    ldd_cap = 4.0 * math.exp(ldd_val)
    return CondBoundReport(
        cond=cond,
        vnd_penalty=vnd_val,
        ldd_penalty=ldd_val,
        vnd_applicable=applicable,
        vnd_cap=vnd_cap,
        ldd_cap=ldd_cap,
        vnd_holds=(cond <= vnd_cap + CHECK_SLACK) if applicable else None,
        ldd_holds=cond <= ldd_cap + CHECK_SLACK,
    )
