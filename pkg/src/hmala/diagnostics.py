"""Autocorrelation-based effective sample size and chain summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmala.errors import ZeroVariance

MIN_SERIES_LENGTH = 10
#: The autocorrelation sum never extends past N // MAX_LAG_DIVISOR.
MAX_LAG_DIVISOR = 50


def _centred(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if x.size < MIN_SERIES_LENGTH:
        raise ValueError(f"series needs at least {MIN_SERIES_LENGTH} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series has non-finite values")
    x = x - x.mean()
    if not np.any(x):
        raise ZeroVariance("series is constant")
    return x


def autocorrelation(series, max_lag: int | None = None) -> np.ndarray:
    """Sample autocorrelations ``rho_0 .. rho_max_lag``.

    Uses the biased estimator: lag-k cross products are summed and divided
    by N, then normalized by the lag-0 value. Computed with an FFT.
    """
    x = _centred(series)
    n = x.size
    if max_lag is None:
        max_lag = n - 1
    max_lag = int(min(max_lag, n - 1))
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[: max_lag + 1]
    return acov / acov[0]


def _truncation(rho: np.ndarray, cap: int) -> tuple[int, float]:
    """Initial monotone positive sequence on pair sums ``rho_2t + rho_2t+1``.

    Returns the last lag included and ``sum_{k=1}^{K} rho_k``.
    """
    n_pairs = (min(cap, rho.size - 1) + 1) // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    total = 0.0
    last_lag = 0
    prev = np.inf
    for t, gamma in enumerate(pairs):
        if gamma <= 0:
            break
        gamma = min(gamma, prev)
        prev = gamma
        total += gamma
        last_lag = 2 * t + 1
    # pair sums include rho_0 = 1
    return last_lag, total - 1.0 if last_lag else 0.0


def ess_with_lag(series) -> tuple[float, int]:
    x = _centred(series)
    n = x.size
    cap = max(1, n // MAX_LAG_DIVISOR)
    rho = autocorrelation(x, cap + 1)
    lag, rho_sum = _truncation(rho, cap)
    tau = 1.0 + 2.0 * rho_sum
    value = n / tau if tau > 0 else float(n)
    return float(min(max(value, np.finfo(float).tiny), n)), lag


def ess(series) -> float:
    """Effective sample size ``N / (1 + 2 sum_k rho_k)``.

    The sum is truncated by Geyer's initial monotone sequence rule applied to
    consecutive pairs of autocorrelations, and never goes beyond lag N/50.
    The result is clamped to ``(0, N]``.

    Raises:
        ZeroVariance: if the series is constant.
    """
    return ess_with_lag(series)[0]


@dataclass(frozen=True)
class EssReport:
    per_coordinate_ess: np.ndarray
    min_ess: float
    acceptance_rate: float
    autocorr_truncation_lag: np.ndarray


def ess_report(trace) -> EssReport:
    """Per-coordinate ESS of a chain's positions plus its acceptance rate.

    A coordinate that never moves gets ESS 1.
    """
    samples = np.asarray(trace.samples, dtype=float)
    dim = samples.shape[1]
    values = np.empty(dim)
    lags = np.zeros(dim, dtype=np.int64)
    for j in range(dim):
        try:
            values[j], lags[j] = ess_with_lag(samples[:, j])
        except ZeroVariance:
            values[j], lags[j] = 1.0, 0
    accepted = np.asarray(trace.accepted)
    rate = float(accepted.mean()) if accepted.size else 0.0
    return EssReport(values, float(values.min()), rate, lags)


@dataclass(frozen=True)
class PosteriorSummary:
    n_samples: int
    mean: np.ndarray
    sd: np.ndarray


def posterior_summary(samples) -> PosteriorSummary:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n == 0:
        nan = np.full(samples.shape[1], np.nan)
        return PosteriorSummary(0, nan, nan)
    sd = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(samples.shape[1])
    return PosteriorSummary(n, samples.mean(axis=0), sd)
