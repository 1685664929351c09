"""Random-walk, MALA and Hessian-corrected MALA proposals with a shared
Metropolis-Hastings loop.

All three kernels propose ``theta* ~ N(theta + m, S)``:

* ``RW``:    ``m = 0``, ``S = delta I``
* ``MALA``:  ``m = delta v / 2``, ``S = delta I``
* ``HMALA``: ``m = (delta/2) phi1(delta H / 2) v``, ``S = delta phi1(delta H)``

where ``v`` and ``H`` are the gradient and Hessian of the log density at
``theta``. The HMALA moments are the exact mean and covariance of the
Langevin diffusion run for time ``delta`` on the local quadratic model of the
log density, so ``S`` stays positive definite even where ``H`` is indefinite.

The step itself is vectorized over a batch of independent chains. Each step
consumes ``dim + 1`` standard normals from the chain's own generator: the
first ``dim`` drive the proposal and the last is mapped through the normal
CDF to give the acceptance uniform. This keeps a chain's trajectory
independent of how chains are batched together.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import log_ndtr

from hmala.errors import BadInit, NonConvergence, NotPositiveDefinite
from hmala.matfun import phi1_scalar, sym_eig, symmetrize
from hmala.targets import BatchEval, LogDensityEval, TargetDensity

LOG_2PI = math.log(2.0 * math.pi)


class SamplerKind(str, enum.Enum):
    RW = "rw"
    MALA = "mala"
    HMALA = "hmala"

    @classmethod
    def parse(cls, value) -> "SamplerKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown sampler {value!r}; expected one of {names}") from None

    @property
    def derivative_order(self) -> int:
        """Highest derivative of the log density the kernel needs."""
        return {SamplerKind.RW: 0, SamplerKind.MALA: 1, SamplerKind.HMALA: 2}[self]


@dataclass(frozen=True)
class SamplerConfig:
    kind: SamplerKind
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind.parse(self.kind))
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))


@dataclass(frozen=True)
class ProposalMoments:
    """Mean offset ``m`` and covariance ``S`` of a Gaussian proposal."""

    mean_offset: np.ndarray
    covariance: np.ndarray
    log_det: float
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean_offset.shape[0]


class BatchMoments(NamedTuple):
    mean_offset: np.ndarray  # (B, d)
    covariance: np.ndarray  # (B, d, d)
    chol: np.ndarray  # (B, d, d)
    log_det: np.ndarray  # (B,)
    valid: np.ndarray  # (B,)

    def take(self, mask, other: "BatchMoments") -> "BatchMoments":
        m1, m2, m3 = mask[:, None], mask[:, None, None], mask
        return BatchMoments(
            np.where(m1, other.mean_offset, self.mean_offset),
            np.where(m2, other.covariance, self.covariance),
            np.where(m2, other.chol, self.chol),
            np.where(m3, other.log_det, self.log_det),
            np.where(m3, other.valid, self.valid),
        )

    def row(self, i: int) -> ProposalMoments:
        return ProposalMoments(
            self.mean_offset[i].copy(),
            self.covariance[i].copy(),
            float(self.log_det[i]),
            self.chol[i].copy(),
        )


# -- moments -----------------------------------------------------------------


def _isotropic(batch: int, dim: int, delta: float, mean_offset=None) -> BatchMoments:
    eye = np.eye(dim)
    if mean_offset is None:
        mean_offset = np.zeros((batch, dim))
    return BatchMoments(
        mean_offset,
        np.broadcast_to(delta * eye, (batch, dim, dim)),
        np.broadcast_to(math.sqrt(delta) * eye, (batch, dim, dim)),
        np.full(batch, dim * math.log(delta)),
        np.ones(batch, dtype=bool),
    )


def _eig_rows(hess):
    """Batched :func:`sym_eig` that isolates failing rows instead of raising."""
    batch, dim = hess.shape[:2]
    finite = np.all(np.isfinite(hess), axis=(1, 2))
    safe = np.where(finite[:, None, None], hess, 0.0)
    try:
        lam, q = sym_eig(safe)
        return lam, q, finite
    except NonConvergence:
        lam = np.zeros((batch, dim))
        q = np.broadcast_to(np.eye(dim), (batch, dim, dim)).copy()
        ok = finite.copy()
        for i in range(batch):
            try:
                lam[i], q[i] = sym_eig(safe[i])
            except NonConvergence:
                ok[i] = False
        return lam, q, ok


def _cholesky_rows(cov, valid):
    """Batched Cholesky; rows that break down are flagged invalid."""
    batch, dim = cov.shape[:2]
    finite = valid & np.all(np.isfinite(cov), axis=(1, 2))
    safe = np.where(finite[:, None, None], cov, np.eye(dim))
    try:
        chol = np.linalg.cholesky(safe)
        ok = finite
    except np.linalg.LinAlgError:
        chol = np.broadcast_to(np.eye(dim), (batch, dim, dim)).copy()
        ok = finite.copy()
        for i in range(batch):
            try:
                chol[i] = np.linalg.cholesky(safe[i])
            except np.linalg.LinAlgError:
                ok[i] = False
    diag = np.diagonal(chol, axis1=1, axis2=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_det = 2.0 * np.sum(np.log(diag), axis=1)
    ok = ok & np.isfinite(log_det)
    return chol, np.where(ok, log_det, 0.0), ok


def _hmala_batch(grad, hess, delta) -> BatchMoments:
    lam, q, ok = _eig_rows(hess)
    with np.errstate(over="ignore", invalid="ignore"):
        f_mean = 0.5 * delta * phi1_scalar(0.5 * delta * lam)
        f_cov = delta * phi1_scalar(delta * lam)
        ok = ok & np.all(np.isfinite(f_mean), axis=1) & np.all(np.isfinite(f_cov), axis=1)
        # m = Q diag(f_mean) Q^T v,  S = Q diag(f_cov) Q^T
        proj = np.einsum("bji,bj->bi", q, grad)
        mean = np.einsum("bij,bj->bi", q, f_mean * proj)
        cov = (q * f_cov[:, None, :]) @ np.swapaxes(q, 1, 2)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    ok = ok & np.all(np.isfinite(mean), axis=1)
    chol, log_det, ok = _cholesky_rows(cov, ok)
    mean = np.where(ok[:, None], mean, 0.0)
    return BatchMoments(mean, cov, chol, log_det, ok)


def batch_moments(kind: SamplerKind, delta: float, ev: BatchEval, dim: int) -> BatchMoments:
    """Proposal moments for every row of a batch evaluation.

    Rows that are out of support, or whose moments cannot be formed, come
    back with ``valid = False``.
    """
    batch = ev.value.shape[0]
    if kind is SamplerKind.RW:
        out = _isotropic(batch, dim, delta)
    elif kind is SamplerKind.MALA:
        out = _isotropic(batch, dim, delta, 0.5 * delta * ev.gradient)
    else:
        out = _hmala_batch(ev.gradient, ev.hessian, delta)
    return out._replace(valid=out.valid & ev.in_support)


def _single(ev: LogDensityEval, need_hessian: bool):
    if not ev.in_support or ev.gradient is None:
        raise ValueError("moments need an in-support evaluation with a gradient")
    grad = np.asarray(ev.gradient, dtype=float)[None, :]
    hess = None
    if need_hessian:
        if ev.hessian is None:
            raise ValueError("HMALA moments need the Hessian")
        hess = symmetrize(ev.hessian)[None, :, :]
    return grad, hess


def hmala_moments(ev: LogDensityEval, delta: float) -> ProposalMoments:
    """HMALA proposal moments at a point.

    Raises:
        NonConvergence: if the eigendecomposition of the Hessian fails.
        NotPositiveDefinite: if the covariance overflows or cannot be
            factorized.
    """
    grad, hess = _single(ev, need_hessian=True)
    out = _hmala_batch(grad, hess, delta)
    if not out.valid[0]:
        sym_eig(hess[0])  # raises NonConvergence if that was the cause
        raise NotPositiveDefinite("proposal covariance is not a finite SPD matrix")
    return out.row(0)


def mala_moments(ev: LogDensityEval, delta: float) -> ProposalMoments:
    grad, _ = _single(ev, need_hessian=False)
    return _isotropic(1, grad.shape[1], delta, 0.5 * delta * grad).row(0)


def rw_moments(delta: float, dim: int) -> ProposalMoments:
    return _isotropic(1, dim, delta).row(0)


def moments_for(config: SamplerConfig, ev: LogDensityEval, dim: int) -> ProposalMoments:
    if config.kind is SamplerKind.RW:
        return rw_moments(config.delta, dim)
    if config.kind is SamplerKind.MALA:
        return mala_moments(ev, config.delta)
    return hmala_moments(ev, config.delta)


# -- Gaussian proposal density -----------------------------------------------


def _gauss_logpdf(x, mean, chol, log_det):
    """Row-wise ``log N(x | mean, L L^T)`` for batched inputs."""
    diff = x - mean
    white = np.linalg.solve(chol, diff[..., None])[..., 0]
    quad = np.sum(white * white, axis=-1)
    return -0.5 * (quad + log_det + x.shape[-1] * LOG_2PI)


def proposal_logpdf(from_eval: LogDensityEval, from_point, to_point, config: SamplerConfig) -> float:
    """``log q(to | from)`` for the configured kernel; ``-inf`` if the
    moments at ``from`` cannot be formed."""
    from_point = np.asarray(from_point, dtype=float)
    to_point = np.asarray(to_point, dtype=float)
    try:
        mom = moments_for(config, from_eval, from_point.shape[0])
    except (ValueError, NonConvergence, NotPositiveDefinite):
        return -math.inf
    return float(_gauss_logpdf(to_point, from_point + mom.mean_offset, mom.chol, mom.log_det))


# -- Metropolis-Hastings -----------------------------------------------------


@dataclass
class ChainState:
    """Current position of a chain, its cached evaluation, and its RNG."""

    position: np.ndarray
    eval: LogDensityEval
    rng: np.random.Generator

    @classmethod
    def start(cls, target: TargetDensity, position, seed=None) -> "ChainState":
        position = np.asarray(position, dtype=float).copy()
        ev = target.evaluate(position)
        if not ev.in_support:
            raise BadInit(f"initial point {position.tolist()} is outside the target's support")
        return cls(position, ev, np.random.default_rng(seed))


class StepResult(NamedTuple):
    position: np.ndarray  # (B, d) new positions
    eval: BatchEval
    moments: BatchMoments
    accepted: np.ndarray  # (B,)
    log_alpha: np.ndarray  # (B,)
    proposal: np.ndarray  # (B, d)
    failed: np.ndarray  # (B,) moment formation failed at current or proposed point


def _as_batch_eval(ev: LogDensityEval, dim: int) -> BatchEval:
    grad = ev.gradient if ev.gradient is not None else np.zeros(dim)
    hess = ev.hessian if ev.hessian is not None else np.zeros((dim, dim))
    return BatchEval(
        np.array([ev.value]), np.asarray(grad, float)[None], np.asarray(hess, float)[None],
        np.array([ev.in_support]),
    )


def batch_step(
    target: TargetDensity,
    config: SamplerConfig,
    position: np.ndarray,
    ev: BatchEval,
    moments: BatchMoments,
    noise: np.ndarray,
) -> StepResult:
    """One Metropolis-Hastings step for a batch of independent chains.

    Args:
        position: Current points, shape ``(B, d)``, all in support.
        ev: Cached evaluations at ``position``.
        moments: Cached proposal moments at ``position``.
        noise: Standard normals of shape ``(B, d + 1)``.
    """
    kind, delta = config.kind, config.delta
    dim = position.shape[1]
    z, u_normal = noise[:, :dim], noise[:, dim]

    ok_here = moments.valid
    step = moments.mean_offset + np.einsum("bij,bj->bi", moments.chol, z)
    proposal = np.where(ok_here[:, None], position + step, position)

    ev_new = target.evaluate_batch(proposal, order=kind.derivative_order)
    mom_new = batch_moments(kind, delta, ev_new, dim)

    with np.errstate(invalid="ignore"):
        log_ratio = ev_new.value - ev.value
        if kind is not SamplerKind.RW:
            # RW is symmetric so the proposal densities cancel exactly
            fwd = _gauss_logpdf(proposal, position + moments.mean_offset, moments.chol, moments.log_det)
            rev = _gauss_logpdf(position, proposal + mom_new.mean_offset, mom_new.chol, mom_new.log_det)
            log_ratio = log_ratio + rev - fwd
    usable = ok_here & ev_new.in_support & mom_new.valid & np.isfinite(log_ratio)
    log_alpha = np.where(usable, np.minimum(0.0, np.where(usable, log_ratio, 0.0)), -np.inf)
    log_u = log_ndtr(u_normal)
    accepted = usable & ((log_alpha == 0.0) | (log_u < log_alpha))

    failed = ~ok_here | (ev_new.in_support & ~mom_new.valid)
    return StepResult(
        np.where(accepted[:, None], proposal, position),
        ev.take(accepted, ev_new),
        moments.take(accepted, mom_new),
        accepted,
        log_alpha,
        proposal,
        failed,
    )


def propose(state: ChainState, moments: ProposalMoments, z=None) -> np.ndarray:
    """Draw ``theta* = theta + m + L z`` with ``z`` from the chain's RNG."""
    if z is None:
        z = state.rng.standard_normal(moments.dim)
    return state.position + moments.mean_offset + moments.chol @ np.asarray(z, dtype=float)


def mh_step(state: ChainState, target: TargetDensity, config: SamplerConfig):
    """Advance one chain by one Metropolis-Hastings step.

    Returns:
        ``(new_state, accepted, alpha)``. On rejection ``new_state`` is the
        input state (same position array and evaluation).
    """
    dim = state.position.shape[0]
    cached = state.eval
    order = config.kind.derivative_order
    if (order >= 1 and cached.gradient is None) or (order >= 2 and cached.hessian is None):
        cached = target.evaluate(state.position, order=order)
    ev = _as_batch_eval(cached, dim)
    mom = batch_moments(config.kind, config.delta, ev, dim)
    noise = state.rng.standard_normal(dim + 1)[None, :]
    res = batch_step(target, config, state.position[None, :], ev, mom, noise)
    alpha = float(np.exp(res.log_alpha[0]))
    if not res.accepted[0]:
        return state, False, alpha
    new_state = ChainState(res.position[0].copy(), res.eval.row(0), state.rng)
    return new_state, True, alpha


# -- chains ------------------------------------------------------------------


@dataclass
class ChainTrace:
    """Output of one chain.

    ``samples[t]`` is the state after step ``t``; it equals the previous row
    exactly when ``accepted[t]`` is false.
    """

    samples: np.ndarray
    accepted: np.ndarray
    log_alpha: np.ndarray
    init: np.ndarray
    n_failed: int = 0
    proposals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return int(self.samples.shape[0])

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.n_steps else 0.0

    def after_burn_in(self, burn_in: int) -> "ChainTrace":
        return ChainTrace(
            self.samples[burn_in:],
            self.accepted[burn_in:],
            self.log_alpha[burn_in:],
            self.samples[burn_in - 1] if burn_in > 0 and self.n_steps >= burn_in else self.init,
            self.n_failed,
            None if self.proposals is None else self.proposals[burn_in:],
        )


def run_chains(
    target: TargetDensity,
    config: SamplerConfig,
    inits,
    n_steps: int,
    seeds: Sequence,
    record_proposals: bool = False,
) -> list[ChainTrace]:
    """Run independent chains side by side.

    Chain ``i`` starts at ``inits[i]`` and draws all its randomness from
    ``numpy.random.default_rng(seeds[i])``, so its trace does not depend on
    which other chains share the batch.
    """
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    n_chains, dim = inits.shape
    if len(seeds) != n_chains:
        raise ValueError("need one seed per chain")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")

    ev = target.evaluate_batch(inits, order=config.kind.derivative_order)
    bad = np.flatnonzero(~ev.in_support)
    if bad.size:
        raise BadInit(f"initial point {inits[bad[0]].tolist()} is outside the target's support")
    moments = batch_moments(config.kind, config.delta, ev, dim)

    noise = np.stack(
        [np.random.default_rng(s).standard_normal((n_steps, dim + 1)) for s in seeds], axis=1
    ) if n_steps else np.zeros((0, n_chains, dim + 1))

    samples = np.empty((n_steps, n_chains, dim))
    accepted = np.empty((n_steps, n_chains), dtype=bool)
    log_alpha = np.empty((n_steps, n_chains))
    proposals = np.empty((n_steps, n_chains, dim)) if record_proposals else None
    n_failed = np.zeros(n_chains, dtype=np.int64)

    position = inits.copy()
    for t in range(n_steps):
        res = batch_step(target, config, position, ev, moments, noise[t])
        position, ev, moments = res.position, res.eval, res.moments
        samples[t] = position
        accepted[t] = res.accepted
        log_alpha[t] = res.log_alpha
        n_failed += res.failed
        if record_proposals:
            proposals[t] = res.proposal

    return [
        ChainTrace(
            samples[:, i].copy(),
            accepted[:, i].copy(),
            log_alpha[:, i].copy(),
            inits[i].copy(),
            int(n_failed[i]),
            None if proposals is None else proposals[:, i].copy(),
        )
        for i in range(n_chains)
    ]


def run_chain(
    target: TargetDensity,
    config: SamplerConfig,
    init,
    n_steps: int,
    seed,
    record_proposals: bool = False,
) -> ChainTrace:
    """Run a single chain; identical to iterating :func:`mh_step` from
    ``ChainState.start(target, init, seed)``."""
    init = np.asarray(init, dtype=float)
    return run_chains(target, config, init[None, :], n_steps, [seed], record_proposals)[0]
