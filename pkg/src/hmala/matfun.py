"""Dense symmetric matrix functions.

Everything here works on a single ``(d, d)`` matrix or on a stack of them with
shape ``(..., d, d)``; the leading axes are treated as a batch.
"""

from __future__ import annotations

from math import factorial
from typing import NamedTuple

import numpy as np

from hmala.errors import NonConvergence, NotPositiveDefinite

#: Below this magnitude phi1 is evaluated from its Taylor series.
PHI1_SERIES_THRESHOLD = 1e-2
PHI1_SERIES_TERMS = 12


class SpectralDecomp(NamedTuple):
    """Eigen-pairs of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues[..., None, :]) @ np.swapaxes(q, -1, -2)


class CholeskyFactor(NamedTuple):
    """Lower-triangular ``L`` with ``L @ L.T == S`` and ``log|S|``."""

    lower: np.ndarray
    log_det: np.ndarray | float


def symmetrize(a) -> np.ndarray:
    """Return ``(A + A.T) / 2`` after checking ``A`` is square and finite."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def phi1_series(x, n_terms: int = PHI1_SERIES_TERMS):
    """Truncated power series ``sum_{a < n_terms} x**a / (a+1)!``."""
    x = np.asarray(x, dtype=float)
    coeffs = [1.0 / factorial(a + 1) for a in range(n_terms)]
    return np.polynomial.polynomial.polyval(x, coeffs)


def phi1_scalar(x):
    """Elementwise ``phi1(x) = (exp(x) - 1) / x`` with ``phi1(0) = 1``.

    Small arguments go through a 12-term Taylor series to avoid cancellation
    in ``exp(x) - 1``. Accepts scalars or arrays; returns the same kind.
    Large positive arguments overflow to ``inf``.
    """
    x_arr = np.asarray(x, dtype=float)
    small = np.abs(x_arr) < PHI1_SERIES_THRESHOLD
    # keep the closed form away from x == 0; those entries come from the series
    safe = np.where(small, 1.0, x_arr)
    with np.errstate(over="ignore"):
        closed = np.expm1(safe) / safe
    series = phi1_series(x_arr)
    out = np.where(small, series, closed)
    if np.ndim(x) == 0:
        return float(out)
    return out


def sym_eig(m) -> SpectralDecomp:
    """Spectral decomposition of a symmetric matrix (or stack of them).

    Eigenvalues are ascending. Each eigenvector is flipped so its first
    non-negligible component is positive, which makes the output
    reproducible bit-for-bit.

    Raises:
        NonConvergence: if LAPACK fails to converge.
    """
    m = symmetrize(m)
    try:
        lam, q = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    # index of first component with |q| > tol, per eigenvector column
    lead = np.argmax(np.abs(q) > 1e-12, axis=-2)
    pivot = np.take_along_axis(q, lead[..., None, :], axis=-2)
    signs = np.where(pivot < 0, -1.0, 1.0)
    return SpectralDecomp(lam, q * signs)


def phi1_spectral(decomp: SpectralDecomp, scale=1.0) -> np.ndarray:
    """``phi1(scale * M)`` from a precomputed decomposition of ``M``.

    ``scale`` may be a scalar or an array broadcasting against the batch
    shape of the decomposition.
    """
    scale = np.asarray(scale, dtype=float)[..., None]
    f = phi1_scalar(scale * decomp.eigenvalues)
    q = decomp.eigenvectors
    return (q * np.asarray(f)[..., None, :]) @ np.swapaxes(q, -1, -2)


def phi1_sym(m) -> np.ndarray:
    """``phi1(M) = (exp(M) - I) M^{-1}`` for symmetric ``M``.

    Defined through the eigenvalues, so singular ``M`` needs no special
    handling. The result is symmetric positive definite whenever it is
    finite.
    """
    return phi1_spectral(sym_eig(m))


def spd_factor(s) -> CholeskyFactor:
    """Cholesky factor and log-determinant of an SPD matrix.

    Raises:
        NotPositiveDefinite: if the factorization breaks down or ``S`` has
            non-finite entries.
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        lower = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    diag = np.diagonal(lower, axis1=-2, axis2=-1)
    log_det = 2.0 * np.sum(np.log(diag), axis=-1)
    if np.ndim(log_det) == 0:
        log_det = float(log_det)
    return CholeskyFactor(lower, log_det)
