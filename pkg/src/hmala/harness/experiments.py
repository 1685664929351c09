"""The three experiments behind the CLI, plus CSV writers.

Randomness is derived from the master seed with :class:`numpy.random.SeedSequence`
spawn keys ``(stream, sampler, index)``. Chain ``i`` of a sampler therefore
gets the same stream regardless of how many chains are run or which step size
is being tried.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from hmala.diagnostics import ess_report, posterior_summary
from hmala.errors import BadInit, ConfigError
from hmala.harness.config import ExperimentConfig
from hmala.samplers import (
    ChainTrace,
    SamplerConfig,
    SamplerKind,
    batch_moments,
    batch_step,
    run_chain,
    run_chains,
)
from hmala.targets import (
    GaussianMixture,
    GaussianTarget,
    NegBinData,
    NegBinLikelihood,
    TargetDensity,
    negbin_simulate,
)

log = logging.getLogger(__name__)

STREAM_SWEEP = 1
STREAM_CLOUD = 2
STREAM_CHAIN = 3

_KIND_INDEX = {SamplerKind.RW: 0, SamplerKind.MALA: 1, SamplerKind.HMALA: 2}


def spawn_seed(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def chain_seeds(master: int, stream: int, kind: SamplerKind, n: int) -> list:
    return [spawn_seed(master, stream, _KIND_INDEX[kind], i) for i in range(n)]


# -- targets -----------------------------------------------------------------


def load_counts(config: ExperimentConfig) -> NegBinData:
    """Counts from ``config.data``, or simulated from the master seed exactly
    as ``simulate-data`` would."""
    if config.data is not None:
        try:
            return NegBinData.from_file(config.data)
        except OSError as exc:
            raise ConfigError(f"cannot read data file {config.data}: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return negbin_simulate(config.n_counts, config.true_r, config.true_p, config.seed)


def make_target(config: ExperimentConfig) -> TargetDensity:
    if config.target == "negbin":
        return NegBinLikelihood(load_counts(config))
    if config.target == "mixture":
        return GaussianMixture([config.mu1, config.mu2], config.cov_matrix)
    return GaussianTarget(config.mu1, config.cov_matrix)


def coordinate_names(config: ExperimentConfig) -> tuple[str, str]:
    return ("r", "p") if config.target == "negbin" else ("theta1", "theta2")


def default_init(config: ExperimentConfig) -> np.ndarray:
    if config.init is not None:
        return np.array(config.init, dtype=float)
    if config.target == "negbin":
        return np.array([config.true_r, config.true_p])
    return np.array(config.mu1, dtype=float)


def negbin_mle(target: NegBinLikelihood, start: Sequence[float]) -> Optional[np.ndarray]:
    """Maximum likelihood ``(r, p)``, or ``None`` when ``r`` runs off to
    infinity (counts not over-dispersed)."""

    def unpack(u):
        return np.array([math.exp(u[0]), 1.0 / (1.0 + math.exp(-u[1]))])

    def objective(u):
        return -target.log_density(unpack(u))

    r0, p0 = start
    res = minimize(objective, [math.log(r0), math.log(p0 / (1 - p0))], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    point = unpack(res.x)
    if not res.success or point[0] > 1e3:
        return None
    return point


def default_anchors(config: ExperimentConfig, target: TargetDensity) -> np.ndarray:
    """Three anchor points for the proposal plots.

    Count model: the MLE plus points three Laplace standard deviations away
    along each principal axis. Mixture: the first mode, the saddle midway
    between the modes, and the low-density point ``(8, -2)``.
    """
    if config.anchors is not None:
        return np.array(config.anchors, dtype=float)
    if config.target == "negbin":
        centre = negbin_mle(target, (config.true_r, config.true_p))
        if centre is None:
            centre = np.array([config.true_r, config.true_p])
        hess = target.evaluate(centre).hessian
        lam, vecs = np.linalg.eigh(-hess)
        anchors = [centre]
        for j in (0, 1):
            offset = 3.0 * vecs[:, j] / math.sqrt(lam[j]) if lam[j] > 0 else 0.5 * vecs[:, j]
            point = centre + offset
            while not target.in_support(point):
                offset = 0.5 * offset
                point = centre + offset
            anchors.append(point)
        return np.array(anchors)
    mu1 = np.array(config.mu1, dtype=float)
    mu2 = np.array(config.mu2, dtype=float)
    return np.array([mu1, 0.5 * (mu1 + mu2), [8.0, -2.0]])


# -- ESS sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    sampler: str
    delta: float
    ess_mean: float
    ess_p25: float
    ess_p75: float
    accept_mean: float
    n_chains: int
    n_failed: int


@dataclass(frozen=True)
class SweepResult:
    rows: list

    def peak(self, kind: SamplerKind | str) -> SweepRow:
        name = SamplerKind.parse(kind).value
        rows = [r for r in self.rows if r.sampler == name]
        return max(rows, key=lambda r: r.ess_mean)

    def for_sampler(self, kind) -> list:
        name = SamplerKind.parse(kind).value
        return [r for r in self.rows if r.sampler == name]


def _sweep_task(args) -> SweepRow:
    target, kind, delta, inits, n_steps, seeds, burn_in = args
    traces = run_chains(target, SamplerConfig(kind, delta), inits, n_steps, seeds)
    min_ess = np.empty(len(traces))
    accept = np.empty(len(traces))
    for i, trace in enumerate(traces):
        report = ess_report(trace.after_burn_in(burn_in))
        min_ess[i] = report.min_ess
        accept[i] = report.acceptance_rate
    failed = sum(t.n_failed for t in traces)
    if failed:
        log.warning("%s delta=%g: %d steps failed to form proposal moments", kind.value, delta, failed)
    return SweepRow(
        kind.value,
        float(delta),
        float(min_ess.mean()),
        float(np.percentile(min_ess, 25)),
        float(np.percentile(min_ess, 75)),
        float(accept.mean()),
        len(traces),
        int(failed),
    )


def ess_sweep(config: ExperimentConfig, target: Optional[TargetDensity] = None) -> SweepResult:
    """Mean and quartiles of per-chain min-ESS over a step-size grid for
    each sampler."""
    target = target if target is not None else make_target(config)
    burn_in = config.resolved_burn_in
    if config.chain_length - burn_in < 10:
        raise ConfigError("need at least 10 post-burn-in steps to estimate ESS")
    init = default_init(config)
    if not target.in_support(init):
        raise BadInit(f"initial point {init.tolist()} is outside the target's support")
    inits = np.tile(init, (config.n_chains, 1))

    tasks = []
    for kind in sorted(set(config.samplers), key=_KIND_INDEX.get):
        seeds = chain_seeds(config.seed, STREAM_SWEEP, kind, config.n_chains)
        for delta in config.delta_grid(kind):
            tasks.append((target, kind, float(delta), inits, config.chain_length, seeds, burn_in))

    workers = config.workers or os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    return SweepResult(rows)


# -- proposal clouds ---------------------------------------------------------


@dataclass(frozen=True)
class CloudResult:
    anchors: np.ndarray
    rows: list  # (sampler, delta, anchor_id, x, y, alpha, would_accept)


def proposal_cloud(config: ExperimentConfig, target: Optional[TargetDensity] = None) -> CloudResult:
    """Unfiltered proposals from each anchor, with the accept decision each
    one would have received in a Metropolis-Hastings step."""
    target = target if target is not None else make_target(config)
    anchors = default_anchors(config, target)
    n = config.resolved_n_proposals
    dim = anchors.shape[1]
    rows = []
    for kind in config.samplers:
        delta = config.delta if config.delta is not None else config.delta_for(kind)
        sampler = SamplerConfig(kind, delta)
        for a_id, anchor in enumerate(anchors):
            batch = np.tile(anchor, (n, 1))
            ev = target.evaluate_batch(batch, order=kind.derivative_order)
            if not ev.in_support[0]:
                raise BadInit(f"anchor {anchor.tolist()} is outside the target's support")
            moments = batch_moments(kind, delta, ev, dim)
            rng = np.random.default_rng(spawn_seed(config.seed, STREAM_CLOUD, _KIND_INDEX[kind], a_id))
            res = batch_step(target, sampler, batch, ev, moments, rng.standard_normal((n, dim + 1)))
            alpha = np.exp(res.log_alpha)
            for j in range(n):
                rows.append((kind.value, delta, a_id, res.proposal[j, 0], res.proposal[j, 1],
                             float(alpha[j]), bool(res.accepted[j])))
    return CloudResult(anchors, rows)


# -- single chain ------------------------------------------------------------


@dataclass(frozen=True)
class ChainSummary:
    sampler: str
    delta: float
    n_steps: int
    burn_in: int
    acceptance_rate: float
    n_failed: int
    ess: Optional[np.ndarray]
    mean: np.ndarray
    sd: np.ndarray
    mode_occupancy: Optional[np.ndarray]
    warnings: tuple


def mode_occupancy(samples: np.ndarray, mixture: GaussianMixture, radius: float = 2.0) -> np.ndarray:
    """Fraction of samples within Mahalanobis ``radius`` of each mixture mean."""
    if samples.shape[0] == 0:
        return np.zeros(len(mixture.means))
    out = []
    for mu in mixture.means:
        diff = samples - mu
        dist2 = np.einsum("ni,ij,nj->n", diff, mixture.precision, diff)
        out.append(np.mean(dist2 <= radius**2))
    return np.array(out)


def run_single_chain(config: ExperimentConfig, target: Optional[TargetDensity] = None):
    """Run one chain and summarize it after burn-in.

    Returns:
        ``(trace, summary)``.
    """
    target = target if target is not None else make_target(config)
    kind = config.sampler
    delta = config.delta if config.delta is not None else config.delta_for(kind)
    seed = spawn_seed(config.seed, STREAM_CHAIN, _KIND_INDEX[kind], 0)
    trace = run_chain(target, SamplerConfig(kind, delta), default_init(config), config.chain_length, seed)

    burn_in = config.resolved_burn_in
    kept = trace.after_burn_in(burn_in)
    warnings = []
    if kept.n_steps == 0:
        warnings.append("no samples left after burn-in; posterior summary is empty")
    ess = None
    if kept.n_steps >= 10:
        ess = ess_report(kept).per_coordinate_ess
    elif kept.n_steps:
        warnings.append("fewer than 10 post-burn-in samples; ESS not computed")
    post = posterior_summary(kept.samples)
    occupancy = mode_occupancy(kept.samples, target) if isinstance(target, GaussianMixture) else None
    summary = ChainSummary(kind.value, delta, trace.n_steps, burn_in, trace.acceptance_rate,
                           trace.n_failed, ess, post.mean, post.sd, occupancy, tuple(warnings))
    return trace, summary


# -- output ------------------------------------------------------------------


def fmt(x) -> str:
    """Shortest round-trip text for a float; ints and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


SWEEP_HEADER = ("sampler", "delta", "ess_mean", "ess_p25", "ess_p75", "accept_mean", "n_chains", "n_failed")


def write_sweep_csv(path: Path, result: SweepResult) -> None:
    write_csv(path, SWEEP_HEADER, (
        (r.sampler, r.delta, r.ess_mean, r.ess_p25, r.ess_p75, r.accept_mean, r.n_chains, r.n_failed)
        for r in result.rows
    ))


def write_cloud_csv(path: Path, result: CloudResult, names: Sequence[str]) -> None:
    header = ("sampler", "delta", "anchor_id", f"anchor_{names[0]}", f"anchor_{names[1]}",
              names[0], names[1], "alpha", "would_accept")
    write_csv(path, header, (
        (s, d, a, result.anchors[a][0], result.anchors[a][1], x, y, alpha, acc)
        for s, d, a, x, y, alpha, acc in result.rows
    ))


def write_trace_csv(path: Path, trace: ChainTrace, names: Sequence[str]) -> None:
    header = ("step", *names, "accepted", "alpha")
    alpha = np.exp(trace.log_alpha)
    write_csv(path, header, (
        (t + 1, *trace.samples[t], bool(trace.accepted[t]), alpha[t]) for t in range(trace.n_steps)
    ))


def format_summary(summary: ChainSummary, names: Sequence[str]) -> str:
    lines = [
        f"sampler = {summary.sampler}",
        f"delta = {fmt(summary.delta)}",
        f"n_steps = {summary.n_steps}",
        f"burn_in = {summary.burn_in}",
        f"acceptance_rate = {fmt(summary.acceptance_rate)}",
        f"moment_failures = {summary.n_failed}",
    ]
    for j, name in enumerate(names):
        lines.append(f"mean_{name} = {fmt(summary.mean[j])}")
        lines.append(f"sd_{name} = {fmt(summary.sd[j])}")
        if summary.ess is not None:
            lines.append(f"ess_{name} = {fmt(summary.ess[j])}")
    if summary.mode_occupancy is not None:
        for i, frac in enumerate(summary.mode_occupancy, start=1):
            lines.append(f"mode{i}_occupancy = {fmt(frac)}")
    for w in summary.warnings:
        lines.append(f"# warning: {w}")
    return "\n".join(lines) + "\n"
