"""Differentiable log-densities with analytic gradients and Hessians.

Every target evaluates a whole batch of points at once through
:meth:`TargetDensity.evaluate_batch`; the single-point :func:`target_eval`
is a thin wrapper around it. Points outside a target's support get
``value = -inf`` and are flagged in ``in_support``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from os import PathLike
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, polygamma

from hmala.errors import DimensionMismatch, OutOfSupport
from hmala.matfun import spd_factor, symmetrize

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LogDensityEval:
    """Log density, gradient and Hessian at one point.

    ``gradient`` and ``hessian`` are ``None`` when the point is out of
    support (``value`` is then ``-inf``) or when they were not requested.
    """

    value: float
    gradient: Optional[np.ndarray]
    hessian: Optional[np.ndarray]
    in_support: bool


class BatchEval(NamedTuple):
    """Evaluations at ``B`` points.

    Rows that are out of support hold ``-inf`` in ``value`` and zeros in
    ``gradient``/``hessian``; always mask with ``in_support``.
    """

    value: np.ndarray
    gradient: Optional[np.ndarray]
    hessian: Optional[np.ndarray]
    in_support: np.ndarray

    def row(self, i: int) -> LogDensityEval:
        ok = bool(self.in_support[i])
        grad = self.gradient[i].copy() if ok and self.gradient is not None else None
        hess = self.hessian[i].copy() if ok and self.hessian is not None else None
        return LogDensityEval(float(self.value[i]), grad, hess, ok)

    def take(self, mask: np.ndarray, other: "BatchEval") -> "BatchEval":
        """Rows from ``other`` where ``mask`` is true, else rows from self."""

        def pick(a, b, extra_dims):
            if a is None or b is None:
                return None
            return np.where(mask.reshape(mask.shape + (1,) * extra_dims), b, a)

        return BatchEval(
            np.where(mask, other.value, self.value),
            pick(self.gradient, other.gradient, 1),
            pick(self.hessian, other.hessian, 2),
            np.where(mask, other.in_support, self.in_support),
        )


class TargetDensity(ABC):
    """Abstract unnormalized log density on ``R^dim``."""

    dim: int

    @abstractmethod
    def _evaluate(self, theta: np.ndarray, order: int) -> BatchEval:
        """Evaluate at ``theta`` of shape ``(B, dim)`` up to derivative ``order``."""

    def evaluate_batch(self, theta, order: int = 2) -> BatchEval:
        """Evaluate at a batch of points.

        Args:
            theta: Array of shape ``(B, dim)``.
            order: 0 for the value only, 1 to add the gradient, 2 to add the
                Hessian as well.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[1] != self.dim:
            raise DimensionMismatch(
                f"expected points of shape (B, {self.dim}), got {theta.shape}"
            )
        return self._evaluate(theta, order)

    def evaluate(self, theta, order: int = 2) -> LogDensityEval:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(
                f"expected point of shape ({self.dim},), got {theta.shape}"
            )
        return self._evaluate(theta[None, :], order).row(0)

    def log_density(self, theta) -> float:
        return self.evaluate(theta, order=0).value

    def in_support(self, theta) -> bool:
        return self.evaluate(theta, order=0).in_support


def target_eval(target: TargetDensity, theta) -> LogDensityEval:
    """Value, gradient and Hessian of ``target`` at ``theta``."""
    return target.evaluate(theta, order=2)


# -- negative binomial -------------------------------------------------------


@dataclass(frozen=True)
class NegBinData:
    """Observed counts for the negative binomial likelihood."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-d array")
        if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
            raise ValueError("counts must be integers")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.size)

    @classmethod
    def from_file(cls, path: str | PathLike) -> "NegBinData":
        """Read one non-negative integer per line; blank lines are skipped."""
        values = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    values.append(int(line))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: expected an integer, got {line!r}"
                    ) from None
        return cls(np.array(values, dtype=np.int64))

    def to_file(self, path: str | PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{k}\n" for k in self.counts)


def _check_negbin_params(r, p):
    if not (np.isfinite(r) and np.isfinite(p) and r > 0 and 0 < p < 1):
        raise OutOfSupport(f"negative binomial needs r > 0, 0 < p < 1; got r={r}, p={p}")


def negbin_logpdf(data: NegBinData, r: float, p: float) -> float:
    """Log likelihood of the counts, summed over observations."""
    _check_negbin_params(r, p)
    k = data.counts
    return float(
        np.sum(gammaln(k + r) - gammaln(k + 1.0) + k * np.log(p))
        + data.n * (r * np.log1p(-p) - gammaln(r))
    )


def negbin_grad(data: NegBinData, r: float, p: float) -> np.ndarray:
    """Gradient of :func:`negbin_logpdf` in the order ``(r, p)``."""
    _check_negbin_params(r, p)
    k = data.counts
    n = data.n
    d_r = np.sum(digamma(k + r)) - n * digamma(r) + n * np.log1p(-p)
    d_p = np.sum(k) / p - n * r / (1.0 - p)
    return np.array([d_r, d_p])


def negbin_hess(data: NegBinData, r: float, p: float) -> np.ndarray:
    """Hessian of :func:`negbin_logpdf` in the order ``(r, p)``."""
    _check_negbin_params(r, p)
    k = data.counts
    n = data.n
    d_rr = np.sum(polygamma(1, k + r)) - n * polygamma(1, r)
    d_pp = -(np.sum(k) / p**2 + n * r / (1.0 - p) ** 2)
    d_rp = -n / (1.0 - p)
    return np.array([[d_rr, d_rp], [d_rp, d_pp]])


def negbin_simulate(n: int, r: float, p: float, seed) -> NegBinData:
    """Draw ``n`` counts with ``P(k) = Gamma(k+r) / (k! Gamma(r)) p^k (1-p)^r``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    _check_negbin_params(r, p)
    rng = np.random.default_rng(seed)
    # numpy counts failures before r successes with success probability 1-p
    return NegBinData(rng.negative_binomial(r, 1.0 - p, size=n))


class NegBinLikelihood(TargetDensity):
    """Negative binomial likelihood over ``theta = (r, p)``.

    Support is ``r > 0, 0 < p < 1``. No prior is applied.

    Because the counts are integers, the r-dependent terms telescope:
    ``lnGamma(k + r) - lnGamma(r) = sum_{i<k} ln(r + i)`` and likewise for
    digamma and trigamma. Only the number of counts exceeding each ``i`` is
    needed, so a batch evaluation costs ``O(B * max(k))``.
    """

    dim = 2

    def __init__(self, data: NegBinData):
        self.data = data
        counts = data.counts
        kmax = int(counts.max())
        # tail[i] = #{a : k_a > i}
        self._offsets = np.arange(kmax, dtype=float)
        self._tail = np.array([np.sum(counts > i) for i in range(kmax)], dtype=float)
        self._n = data.n
        self._total = float(np.sum(counts))
        self._log_fact = float(np.sum(gammaln(counts + 1.0)))

    def _evaluate(self, theta, order):
        r, p = theta[:, 0], theta[:, 1]
        ok = np.isfinite(r) & np.isfinite(p) & (r > 0) & (p > 0) & (p < 1)
        r = np.where(ok, r, 1.0)
        p = np.where(ok, p, 0.5)
        n, total = self._n, self._total
        shifted = r[:, None] + self._offsets[None, :]
        log_q = np.log1p(-p)

        value = np.log(shifted) @ self._tail - self._log_fact + total * np.log(p) + n * r * log_q
        value = np.where(ok, value, -np.inf)

        grad = hess = None
        if order >= 1:
            inv = 1.0 / shifted
            d_r = inv @ self._tail + n * log_q
            d_p = total / p - n * r / (1.0 - p)
            grad = np.where(ok[:, None], np.stack([d_r, d_p], axis=1), 0.0)
        if order >= 2:
            d_rr = -(inv * inv) @ self._tail
            d_pp = -(total / p**2 + n * r / (1.0 - p) ** 2)
            d_rp = -n / (1.0 - p)
            hess = np.empty((theta.shape[0], 2, 2))
            hess[:, 0, 0] = d_rr
            hess[:, 0, 1] = hess[:, 1, 0] = d_rp
            hess[:, 1, 1] = d_pp
            hess = np.where(ok[:, None, None], hess, 0.0)
        return BatchEval(value, grad, hess, ok)


# -- Gaussians ---------------------------------------------------------------


class _GaussianBase:
    def _set_covariance(self, cov):
        cov = symmetrize(cov)
        self.dim = cov.shape[0]
        self.cov = cov
        try:
            factor = spd_factor(cov)
        except Exception as exc:
            raise ValueError("covariance must be symmetric positive definite") from exc
        self.precision = symmetrize(np.linalg.inv(cov))
        self._log_norm = -0.5 * factor.log_det - 0.5 * self.dim * LOG_2PI


class GaussianTarget(_GaussianBase, TargetDensity):
    """Normalized multivariate normal ``N(mean, cov)``.

    The log density is exactly quadratic, which makes it a useful check for
    samplers built on a local second-order expansion.
    """

    def __init__(self, mean, cov):
        self._set_covariance(cov)
        self.mean = np.asarray(mean, dtype=float).reshape(self.dim)

    def _evaluate(self, theta, order):
        diff = theta - self.mean
        score = -diff @ self.precision
        value = 0.5 * np.einsum("bi,bi->b", diff, score) + self._log_norm
        grad = score if order >= 1 else None
        hess = None
        if order >= 2:
            hess = np.broadcast_to(-self.precision, (theta.shape[0], self.dim, self.dim))
        ok = np.all(np.isfinite(theta), axis=1)
        return BatchEval(np.where(ok, value, -np.inf), grad, hess, ok)


def gaussian_eval(mean, cov, theta) -> LogDensityEval:
    return target_eval(GaussianTarget(mean, cov), theta)


class GaussianMixture(_GaussianBase, TargetDensity):
    """Equal-weight mixture of Gaussians sharing one covariance.

    Derivatives use the responsibility-weighted identities

        grad = sum_i w_i g_i,
        hess = sum_i w_i (g_i g_i^T - P) - grad grad^T,

    where ``g_i = -P (theta - mu_i)`` and ``P`` is the shared precision.
    """

    def __init__(self, means: Sequence, cov):
        self._set_covariance(cov)
        self.means = np.asarray(means, dtype=float).reshape(-1, self.dim)
        self._log_weight = -math.log(len(self.means))

    @property
    def mixture_mean(self) -> np.ndarray:
        return self.means.mean(axis=0)

    @property
    def mixture_cov(self) -> np.ndarray:
        centred = self.means - self.mixture_mean
        return self.cov + centred.T @ centred / len(self.means)

    def _evaluate(self, theta, order):
        # diff: (B, K, d), scores g_i: (B, K, d)
        diff = theta[:, None, :] - self.means[None, :, :]
        scores = -diff @ self.precision
        comp = 0.5 * np.einsum("bkd,bkd->bk", diff, scores) + self._log_norm
        comp = comp + self._log_weight
        value = logsumexp(comp, axis=1)
        resp = np.exp(comp - value[:, None])

        grad = hess = None
        if order >= 1:
            grad = np.einsum("bk,bkd->bd", resp, scores)
        if order >= 2:
            second = np.einsum("bk,bki,bkj->bij", resp, scores, scores)
            hess = second - self.precision - grad[:, :, None] * grad[:, None, :]
            hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
        ok = np.all(np.isfinite(theta), axis=1)
        return BatchEval(np.where(ok, value, -np.inf), grad, hess, ok)


def mixture_eval(mixture: GaussianMixture, theta) -> LogDensityEval:
    return target_eval(mixture, theta)


#: Parameters used for the count-data experiment.
NEGBIN_TRUE_R = 1.5
NEGBIN_TRUE_P = 0.4
NEGBIN_N_COUNTS = 100

#: Mixture parameters. The second mean is the reflection of the first,
#: which gives two modes with a saddle at the origin.
MIXTURE_MU1 = (4.0, 4.0)
MIXTURE_MU2 = (-4.0, -4.0)
MIXTURE_COV = ((3.0, 2.0), (2.0, 3.0))


def default_mixture(mu1=MIXTURE_MU1, mu2=MIXTURE_MU2, cov=MIXTURE_COV) -> GaussianMixture:
    return GaussianMixture([mu1, mu2], cov)
