"""Command-line entry point: ``hmala <command> [options]``.

Every setting of :class:`~hmala.harness.config.ExperimentConfig` can be given
in a ``--config`` file (``key = value`` per line) or as a flag such as
``--chain-length 2000``; flags win. Exit status is 0 on success, 1 for
configuration or validation errors and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from hmala.errors import BadInit, ConfigError, HmalaError, OutOfSupport
from hmala.harness import experiments as ex
from hmala.harness import plots
from hmala.harness.config import SETTINGS, ExperimentConfig, build_config
from hmala.targets import negbin_simulate

log = logging.getLogger("hmala")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_HELP = {
    "target": "negbin, mixture or gaussian",
    "data": "counts file, one integer per line",
    "samplers": "comma-separated list from rw, mala, hmala",
    "sampler": "sampler for run-chain",
    "deltas": "explicit comma-separated step-size grid",
    "anchors": "semicolon-separated points, e.g. '4,4;0,0'",
    "init": "initial point, e.g. '1.5,0.4'",
    "burn_in": "defaults to 10%% of chain_length",
    "workers": "process count for ess-sweep (default: CPU count)",
}


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_simulate_data(config: ExperimentConfig) -> int:
    data = negbin_simulate(config.n_counts, config.true_r, config.true_p, config.seed)
    path = Path(config.data) if config.data else _out_dir(config) / "counts.txt"
    if config.data:
        path.parent.mkdir(parents=True, exist_ok=True)
    data.to_file(path)
    k = data.counts
    var = float(k.var(ddof=1)) if k.size > 1 else 0.0
    print(f"wrote {path}")
    print(f"n = {k.size}, mean = {k.mean():.4f}, variance = {var:.4f}")
    return EXIT_OK


def cmd_ess_sweep(config: ExperimentConfig) -> int:
    if config.target == "negbin" and config.data is None:
        log.info("no data file given; simulating %d counts from seed %d", config.n_counts, config.seed)
    result = ex.ess_sweep(config)
    out = _out_dir(config)
    ex.write_sweep_csv(out / "ess_sweep.csv", result)
    plots.plot_sweep(result, out / "ess_sweep.svg")
    print(f"{'sampler':>7} {'delta':>10} {'ess_mean':>9} {'ess_p25':>8} {'ess_p75':>8} {'accept':>7}")
    for r in result.rows:
        print(f"{r.sampler:>7} {r.delta:10.4g} {r.ess_mean:9.1f} {r.ess_p25:8.1f} "
              f"{r.ess_p75:8.1f} {r.accept_mean:7.3f}")
    kinds = list(dict.fromkeys(r.sampler for r in result.rows))
    peaks = ", ".join(f"{k} {result.peak(k).ess_mean:.1f} at delta={result.peak(k).delta:.4g}" for k in kinds)
    print(f"peak mean min-ESS: {peaks}")
    print(f"wrote {out / 'ess_sweep.csv'} and {out / 'ess_sweep.svg'}")
    return EXIT_OK


def cmd_proposal_cloud(config: ExperimentConfig) -> int:
    target = ex.make_target(config)
    result = ex.proposal_cloud(config, target)
    out = _out_dir(config)
    names = ex.coordinate_names(config)
    ex.write_cloud_csv(out / "proposal_cloud.csv", result, names)
    clip = ((1e-9, 1e-9), (np.inf, 1 - 1e-9)) if config.target == "negbin" else None
    plots.plot_cloud(result, target, names, out / "proposal_cloud.svg", clip=clip)
    for kind in dict.fromkeys(r[0] for r in result.rows):
        rows = [r for r in result.rows if r[0] == kind]
        rate = np.mean([r[6] for r in rows])
        print(f"{kind}: delta={rows[0][1]:g}, {len(rows)} proposals, would-accept rate {rate:.3f}")
    print(f"wrote {out / 'proposal_cloud.csv'} and {out / 'proposal_cloud.svg'}")
    return EXIT_OK


def cmd_run_chain(config: ExperimentConfig) -> int:
    trace, summary = ex.run_single_chain(config)
    out = _out_dir(config)
    names = ex.coordinate_names(config)
    ex.write_trace_csv(out / "trace.csv", trace, names)
    text = ex.format_summary(summary, names)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    plots.plot_trace(trace, names, out / "trace.svg", summary.burn_in)
    for w in summary.warnings:
        log.warning(w)
    sys.stdout.write(text)
    print(f"wrote {out / 'trace.csv'}, {out / 'summary.txt'} and {out / 'trace.svg'}")
    return EXIT_OK


COMMANDS = {
    "simulate-data": (cmd_simulate_data, "simulate negative binomial counts", {}),
    "ess-sweep": (cmd_ess_sweep, "ESS against step size for each sampler", {}),
    "proposal-cloud": (cmd_proposal_cloud, "draw proposals at anchor points", {}),
    "run-chain": (cmd_run_chain, "run one chain and summarize it", {}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmala", description="Run sampler experiments and write CSV and SVG output.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="flat key = value settings file")
        p.add_argument("-v", "--verbose", action="store_true")
        settings = p.add_argument_group("settings")
        for key in SETTINGS:
            settings.add_argument(f"--{key.replace('_', '-')}", dest=f"set_{key}", metavar="VALUE",
                                  help=_HELP.get(key))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    func, _, defaults = COMMANDS[args.command]
    overrides = {
        key: getattr(args, f"set_{key}") for key in SETTINGS if getattr(args, f"set_{key}") is not None
    }
    try:
        config = build_config(args.config, overrides, **defaults)
        return func(config)
    except (ConfigError, BadInit, OutOfSupport) as exc:
        print(f"hmala: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HmalaError, OSError) as exc:
        print(f"hmala: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
