"""Experiment configuration: flat ``key = value`` files plus CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Mapping, Optional

import numpy as np

from hmala.errors import ConfigError
from hmala.samplers import SamplerKind
from hmala import targets

TARGETS = ("negbin", "mixture", "gaussian")

#: Step sizes used for the proposal plots, per target and sampler.
DEFAULT_DELTAS = {
    "negbin": {SamplerKind.RW: 0.6, SamplerKind.MALA: 0.006, SamplerKind.HMALA: 0.5},
    "mixture": {SamplerKind.RW: 2.0, SamplerKind.MALA: 2.0, SamplerKind.HMALA: 6.0},
    "gaussian": {SamplerKind.RW: 1.0, SamplerKind.MALA: 1.0, SamplerKind.HMALA: 1.0},
}
DEFAULT_PROPOSALS = {"negbin": 200, "mixture": 300, "gaussian": 200}


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    return tuple(float(p) for p in parts)


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(chunk) for chunk in text.split(";") if chunk.strip())


def _samplers(text: str) -> tuple[SamplerKind, ...]:
    return tuple(SamplerKind.parse(p) for p in text.split(",") if p.strip())


def _optional(parse):
    def inner(text: str):
        if text.strip().lower() in ("", "none", "auto"):
            return None
        return parse(text)

    return inner


def _target(text: str) -> str:
    name = text.strip().lower()
    if name not in TARGETS:
        raise ValueError(f"unknown target {text!r}; expected one of {', '.join(TARGETS)}")
    return name


@dataclass
class ExperimentConfig:
    """Every setting the CLI understands.

    ``None`` means "use the target-dependent default"; see the ``resolved_*``
    helpers.
    """

    target: str = "negbin"
    data: Optional[str] = None
    n_counts: int = targets.NEGBIN_N_COUNTS
    true_r: float = targets.NEGBIN_TRUE_R
    true_p: float = targets.NEGBIN_TRUE_P
    mu1: tuple = targets.MIXTURE_MU1
    mu2: tuple = targets.MIXTURE_MU2
    cov: tuple = (3.0, 2.0, 2.0, 3.0)

    samplers: tuple = (SamplerKind.RW, SamplerKind.MALA, SamplerKind.HMALA)
    sampler: SamplerKind = SamplerKind.HMALA
    delta: Optional[float] = None
    delta_rw: Optional[float] = None
    delta_mala: Optional[float] = None
    delta_hmala: Optional[float] = None
    deltas: Optional[tuple] = None
    grid_points: int = 20
    grid_decades: float = 2.0

    n_chains: int = 100
    chain_length: int = 10_000
    burn_in: Optional[int] = None
    init: Optional[tuple] = None
    anchors: Optional[tuple] = None
    n_proposals: Optional[int] = None

    seed: int = 0
    out: str = "."
    workers: Optional[int] = None

    # -- resolution of target-dependent defaults ---------------------------

    def delta_for(self, kind: SamplerKind) -> float:
        explicit = getattr(self, f"delta_{kind.value}")
        if explicit is not None:
            return explicit
        return DEFAULT_DELTAS[self.target][kind]

    def delta_grid(self, kind: SamplerKind) -> np.ndarray:
        """Log-spaced grid spanning ``grid_decades`` centred on the default
        step size, unless ``deltas`` lists the values explicitly."""
        if self.deltas is not None:
            return np.array(sorted(self.deltas), dtype=float)
        centre = self.delta_for(kind)
        half = 0.5 * self.grid_decades
        return centre * np.logspace(-half, half, self.grid_points)

    @property
    def resolved_burn_in(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return self.chain_length // 10

    @property
    def resolved_n_proposals(self) -> int:
        if self.n_proposals is not None:
            return self.n_proposals
        return DEFAULT_PROPOSALS[self.target]

    @property
    def cov_matrix(self) -> np.ndarray:
        return np.array(self.cov, dtype=float).reshape(2, 2)

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.target in TARGETS, f"unknown target {self.target!r}")
        need(self.n_counts >= 1, "n_counts must be at least 1")
        need(self.true_r > 0 and 0 < self.true_p < 1, "need true_r > 0 and 0 < true_p < 1")
        need(len(self.mu1) == 2 and len(self.mu2) == 2, "mu1 and mu2 must have 2 entries")
        need(len(self.cov) == 4, "cov must list the 4 entries of a 2x2 matrix")
        cov = self.cov_matrix
        need(np.allclose(cov, cov.T), "cov must be symmetric")
        need(np.all(np.linalg.eigvalsh(cov) > 0), "cov must be positive definite")
        need(len(self.samplers) >= 1, "samplers must name at least one sampler")
        for name in ("delta", "delta_rw", "delta_mala", "delta_hmala"):
            value = getattr(self, name)
            need(value is None or (np.isfinite(value) and value > 0), f"{name} must be positive")
        if self.deltas is not None:
            need(len(self.deltas) >= 1, "deltas must be non-empty")
            need(all(d > 0 for d in self.deltas), "deltas must be positive")
        need(self.grid_points >= 1, "grid_points must be at least 1")
        need(self.grid_decades >= 0, "grid_decades must be non-negative")
        need(self.n_chains >= 1, "n_chains must be at least 1")
        need(self.chain_length >= 0, "chain_length must be non-negative")
        need(
            0 <= self.resolved_burn_in <= self.chain_length,
            "burn_in must satisfy 0 <= burn_in <= chain_length",
        )
        if self.n_proposals is not None:
            need(self.n_proposals >= 1, "n_proposals must be at least 1")
        if self.init is not None:
            need(len(self.init) == 2, "init must have 2 coordinates")
        if self.anchors is not None:
            need(len(self.anchors) >= 1, "anchors must list at least one point")
            need(all(len(a) == 2 for a in self.anchors), "each anchor needs 2 coordinates")
        need(self.workers is None or self.workers >= 1, "workers must be at least 1")
        return self


_PARSERS = {
    "target": _target,
    "data": _optional(str),
    "n_counts": int,
    "true_r": float,
    "true_p": float,
    "mu1": _floats,
    "mu2": _floats,
    "cov": _floats,
    "samplers": _samplers,
    "sampler": SamplerKind.parse,
    "delta": _optional(float),
    "delta_rw": _optional(float),
    "delta_mala": _optional(float),
    "delta_hmala": _optional(float),
    "deltas": _optional(_floats),
    "grid_points": int,
    "grid_decades": float,
    "n_chains": int,
    "chain_length": int,
    "burn_in": _optional(int),
    "init": _optional(_floats),
    "anchors": _optional(_points),
    "n_proposals": _optional(int),
    "seed": int,
    "out": str,
    "workers": _optional(int),
}

SETTINGS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))
assert set(SETTINGS) == set(_PARSERS)


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def parse_settings(raw: Mapping[str, str], source: str = "settings") -> dict[str, Any]:
    """Convert string settings to typed values, rejecting unknown keys."""
    parsed = {}
    for key, text in raw.items():
        name = normalize_key(key)
        if name not in _PARSERS:
            raise ConfigError(f"{source}: unknown setting {key!r}")
        try:
            parsed[name] = _PARSERS[name](text)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
    return parsed


def read_config_file(path: str | PathLike) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def build_config(
    config_path: Optional[str | PathLike] = None,
    overrides: Optional[Mapping[str, str]] = None,
    **defaults,
) -> ExperimentConfig:
    """Layer command defaults, then the config file, then CLI overrides."""
    values = dict(defaults)
    if config_path is not None:
        values.update(parse_settings(read_config_file(config_path), str(config_path)))
    if overrides:
        values.update(parse_settings(overrides, "command line"))
    return ExperimentConfig(**values).validate()
