"""Input validation helpers shared by the numerical core."""

import numpy as np

from .exceptions import InvalidInputError, NotPSDError

# Relative tolerance under which a nominally symmetric / PSD input is accepted.
SYMMETRY_RTOL = 1e-8
PSD_RTOL = 1e-8


def check_finite_array(a, name="array", dtype=np.float64):
    """Coerce `a` to a float ndarray and require every entry to be finite."""
    a = np.asarray(a, dtype=dtype)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def check_square(m, name="matrix"):
    m = check_finite_array(m, name)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {m.shape}")
    return m


def check_symmetric(m, name="matrix", rtol=SYMMETRY_RTOL):
    """Validate that `m` is square, finite and symmetric within `rtol`.

    Returns the exactly symmetrized matrix (m + m.T)/2 so downstream
    eigendecompositions see a bit-symmetric input.
    """
    m = check_square(m, name)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
    if m.size and float(np.max(np.abs(m - m.T))) > rtol * scale:
        raise InvalidInputError(f"{name} is not symmetric within rtol={rtol}")
    return (m + m.T) / 2.0


def check_psd_eigenvalues(eigenvalues, name="matrix", rtol=PSD_RTOL):
    """Require eigenvalues of a nominally PSD matrix to be ≥ −rtol·max(λ₁,1).

    Returns the eigenvalues clipped at zero, so callers can take logs and
    square roots without chasing −1e-17 noise.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if eigenvalues.size == 0:
        return eigenvalues
    floor = -rtol * max(float(eigenvalues.max()), 1.0)
    if float(eigenvalues.min()) < floor:
        raise NotPSDError(
            f"{name} has eigenvalue {eigenvalues.min():.3e}, "
            f"below the PSD tolerance {floor:.3e}"
        )
    return np.clip(eigenvalues, 0.0, None)


def check_positive_scalar(x, name, allow_zero=False):
    x = float(x)
    if not np.isfinite(x):
        raise InvalidInputError(f"{name} must be finite")
    if x < 0 or (x == 0 and not allow_zero):
        bound = "≥ 0" if allow_zero else "> 0"
        raise InvalidInputError(f"{name} must be {bound}, got {x}")
    return x
