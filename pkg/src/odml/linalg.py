"""Spectral linear algebra for symmetric matrices.

Everything in this package that touches a symmetric matrix goes through
:func:`sym_eig`, so ordering, tie-breaking and sign conventions are decided
in exactly one place and every downstream result is reproducible bit for bit
for identical inputs.
"""

from typing import Callable, NamedTuple

import numpy as np

from .exceptions import (
    DomainError,
    InvalidInputError,
    NotPSDError,
    NumericalFailureError,
    SingularMatrixError,
)
from .validation import check_symmetric

__all__ = [
    "EigenDecomposition",
    "sym_eig",
    "spectral_apply",
    "wright_omega",
    "psd_factorize",
    "condition_number",
]


class EigenDecomposition(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    Attributes
    ----------
    eigenvalues : ndarray of shape (d,)
        Sorted in descending order. Ties keep a deterministic order.
    eigenvectors : ndarray of shape (d, d)
        Orthonormal; column j pairs with ``eigenvalues[j]``. Each column is
        sign-normalized so its largest-magnitude entry is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eig(m) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : array-like of shape (d, d)
        Symmetric within a 1e-8 relative tolerance; it is exactly
        symmetrized before factorization.

    Returns
    -------
    EigenDecomposition
        Satisfies ``U diag(w) U.T ≈ m`` to 1e-8 · max(1, ||m||_F) and
        ``U.T U ≈ I`` to 1e-10 entrywise.

    Raises
    ------
    InvalidInputError
        If `m` is not square, finite and symmetric.
    NumericalFailureError
        If the underlying factorization does not converge.
    """
    m = check_symmetric(m)
    if m.shape[0] == 0:
        return EigenDecomposition(np.empty(0), np.empty((0, 0)))
    try:
        w, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"eigendecomposition failed: {e}") from e
    # Descending order; stable sort keeps tied eigenvalues in a fixed order.
    order = np.argsort(-w, kind="stable")
    w = w[order]
    u = u[:, order]
    # Sign convention: largest-magnitude entry of each eigenvector positive.
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    return EigenDecomposition(w, np.ascontiguousarray(u))


def spectral_apply(m, f: Callable) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its spectrum.

    Computes ``U diag(f(w)) U.T`` where ``m = U diag(w) U.T``. `f` may be a
    vectorized ufunc or a plain scalar function.

    Raises
    ------
    DomainError
        If `f` produces a non-finite value on any eigenvalue.
    """
    decomp = sym_eig(m)
    w = decomp.eigenvalues
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=np.float64)
        if fw.shape != w.shape:
            fw = np.array([f(x) for x in w], dtype=np.float64)
    if not np.all(np.isfinite(fw)):
        raise DomainError("function produced non-finite values on the spectrum")
    out = (decomp.eigenvectors * fw) @ decomp.eigenvectors.T
    return (out + out.T) / 2.0


def wright_omega(z) -> float:
    """Wright omega: the real y > 0 solving ``y + log(y) = z``.

    Solved by a Newton iteration on ``g(y) = y + log(y) - z`` safeguarded by
    bisection on a bracketing interval, so each step either contracts the
    bracket or is replaced by its midpoint. Converges for the whole real
    line; the residual satisfies ``|y + log(y) - z| ≤ 1e-12 · max(1, |z|)``.

    For z below the exp-underflow threshold (about −745) the root itself is
    not representable in float64; the closest representable value ``exp(z)``
    (possibly 0.0) is returned.
    """
    z = float(z)
    if not np.isfinite(z):
        raise InvalidInputError("wright_omega requires finite z")
    if z < -700.0:
        # Root ≈ exp(z)(1 - exp(z) + ...); the correction is below resolution.
        return float(np.exp(z))

    def g(y):
        return y + np.log(y) - z

    if z < 0.0:
        y = float(np.exp(z))
    elif z >= 1.0:
        y = z
    else:
        y = 1.0

    # Bracket the root: g is strictly increasing on (0, inf).
    lo, hi = y, y
    gv = g(y)
    for _ in range(1200):
        if gv > 0.0:
            break
        lo = hi
        hi *= 2.0
        gv = g(hi)
    else:
        raise NumericalFailureError("wright_omega failed to bracket above")
    gv = g(lo)
    for _ in range(1200):
        if gv < 0.0:
            break
        hi = lo
        lo /= 2.0
        gv = g(lo)
    else:
        raise NumericalFailureError("wright_omega failed to bracket below")

    tol = 1e-13 * max(1.0, abs(z))
    for _ in range(100):
        gy = g(y)
        if abs(gy) <= tol:
            return y
        if gy > 0.0:
            hi = y
        else:
            lo = y
        step = gy / (1.0 + 1.0 / y)
        y_new = y - step
        if not (lo < y_new < hi) or not np.isfinite(y_new):
            y_new = 0.5 * (lo + hi)
        if y_new == y:
            return y
        y = y_new
    if abs(g(y)) <= 1e-12 * max(1.0, abs(z)):
        return y
    raise NumericalFailureError(f"wright_omega did not converge for z={z}")


def psd_factorize(m, rank_tol: float = 1e-8) -> np.ndarray:
    """Factor a PSD matrix as ``m = L.T L`` with full-row-rank L.

    Rows of L are ``sqrt(w_i) * u_i`` for the eigenvalues above the rank
    threshold ``rank_tol * max(w_1, 1)``, in descending eigenvalue order.
    The row count is the effective rank of `m`; a zero matrix yields an
    L with zero rows.

    Raises
    ------
    NotPSDError
        If some eigenvalue is below ``-rank_tol * max(w_1, 1)``.
    """
    decomp = sym_eig(m)
    w, u = decomp
    d = w.shape[0]
    if d == 0:
        return np.empty((0, 0))
    scale = max(float(w[0]), 1.0)
    if float(w[-1]) < -rank_tol * scale:
        raise NotPSDError(
            f"matrix has eigenvalue {w[-1]:.3e} below -rank_tol*max(w1,1)"
            f" = {-rank_tol * scale:.3e}"
        )
    keep = w > rank_tol * scale
    return np.sqrt(w[keep])[:, None] * u[:, keep].T


def condition_number(m) -> float:
    """Spectral condition number ``w_max / w_min`` of an SPD matrix.

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue is nonpositive or negligible relative
        to the largest (rank-deficient to working precision).
    """
    decomp = sym_eig(m)
    w = decomp.eigenvalues
    if w.size == 0:
        raise InvalidInputError("condition number of an empty matrix")
    w_max, w_min = float(w[0]), float(w[-1])
    tiny = w.size * np.finfo(np.float64).eps * max(w_max, 0.0)
    if w_min <= tiny:
        raise SingularMatrixError(
            f"matrix is singular to working precision (w_min={w_min:.3e})"
        )
    return w_max / w_min
