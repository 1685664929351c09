"""Standalone SVG figures. Output is byte-stable for identical inputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from hmala.targets import TargetDensity  # noqa: E402

_STYLE = {
    "svg.hashsalt": "hmala",
    "svg.fonttype": "none",
    "font.size": 9,
}
_COLOURS = {"rw": "tab:blue", "mala": "tab:orange", "hmala": "tab:green"}
_LABELS = {"rw": "RW", "mala": "MALA", "hmala": "HMALA"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_sweep(result, path: Path) -> None:
    """Mean min-ESS with the interquartile band against log step size."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name in dict.fromkeys(r.sampler for r in result.rows):
            rows = [r for r in result.rows if r.sampler == name]
            delta = np.array([r.delta for r in rows])
            colour = _COLOURS.get(name)
            ax.fill_between(delta, [r.ess_p25 for r in rows], [r.ess_p75 for r in rows],
                            color=colour, alpha=0.25, linewidth=0)
            ax.plot(delta, [r.ess_mean for r in rows], "o-", ms=3, color=colour,
                    label=_LABELS.get(name, name))
        ax.set_xscale("log")
        ax.set_xlabel("step size δ")
        ax.set_ylabel("effective sample size (min over coordinates)")
        ax.set_title("ESS vs δ: mean and 25-75% band across chains")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def _grid_limits(points: np.ndarray, pad: float = 0.15):
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return lo - pad * span, hi + pad * span


def plot_cloud(result, target: TargetDensity, names: Sequence[str], path: Path,
               clip: tuple | None = None) -> None:
    """One scatter panel per sampler over log-density contours."""
    samplers = list(dict.fromkeys(r[0] for r in result.rows))
    pts = np.array([[r[3], r[4]] for r in result.rows])
    finite = np.all(np.isfinite(pts), axis=1)
    everything = np.vstack([pts[finite], result.anchors])
    # keep the view on the bulk of the proposals rather than extreme outliers
    lo = np.percentile(everything, 1, axis=0)
    hi = np.percentile(everything, 99, axis=0)
    lo = np.minimum(lo, result.anchors.min(axis=0))
    hi = np.maximum(hi, result.anchors.max(axis=0))
    lo, hi = _grid_limits(np.vstack([lo, hi]))
    if clip is not None:
        lo = np.maximum(lo, clip[0])
        hi = np.minimum(hi, clip[1])

    gx = np.linspace(lo[0], hi[0], 120)
    gy = np.linspace(lo[1], hi[1], 120)
    xx, yy = np.meshgrid(gx, gy)
    values = target.evaluate_batch(np.column_stack([xx.ravel(), yy.ravel()]), order=0).value
    zz = values.reshape(xx.shape)
    top = np.max(zz[np.isfinite(zz)]) if np.any(np.isfinite(zz)) else 0.0
    zz = np.where(np.isfinite(zz), zz, top - 1e3)
    levels = top - np.array([30, 20, 12, 8, 5, 3, 2, 1, 0.5])[::1]

    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(samplers), figsize=(4 * len(samplers), 4), squeeze=False)
        for ax, name in zip(axes[0], samplers):
            rows = [r for r in result.rows if r[0] == name]
            delta = rows[0][1]
            ax.contour(xx, yy, zz, levels=levels, colors="0.6", linewidths=0.6)
            xy = np.array([[r[3], r[4]] for r in rows])
            acc = np.array([r[6] for r in rows], dtype=bool)
            ax.scatter(xy[~acc, 0], xy[~acc, 1], s=5, c="0.3", marker="x", linewidths=0.5,
                       label="rejected")
            ax.scatter(xy[acc, 0], xy[acc, 1], s=6, color=_COLOURS.get(name, "k"), label="accepted")
            ax.plot(result.anchors[:, 0], result.anchors[:, 1], "r*", ms=9, label="anchor")
            ax.set_xlim(lo[0], hi[0])
            ax.set_ylim(lo[1], hi[1])
            ax.set_xlabel(names[0])
            ax.set_ylabel(names[1])
            ax.set_title(f"{_LABELS.get(name, name)}, δ = {delta:g}")
        axes[0][0].legend(loc="best", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_trace(trace, names: Sequence[str], path: Path, burn_in: int = 0) -> None:
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(len(names), 1, figsize=(7, 1.8 * len(names)), sharex=True)
        steps = np.arange(1, trace.n_steps + 1)
        for j, (ax, name) in enumerate(zip(np.atleast_1d(axes), names)):
            ax.plot(steps, trace.samples[:, j], lw=0.5)
            if burn_in:
                ax.axvline(burn_in, color="r", lw=0.8, ls="--")
            ax.set_ylabel(name)
        np.atleast_1d(axes)[-1].set_xlabel("step")
        fig.tight_layout()
        _save(fig, path)
