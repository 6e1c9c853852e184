"""Typed experiment settings read from INI files, with every default embedded.

Each experiment has one section named after its CLI subcommand.  Keys are
the field names of the matching settings class; grids are comma-separated
numbers where ``inf`` is allowed.  Precedence is defaults < file < flags.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
import typing
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import SMIError


class ConfigError(SMIError, ValueError):
    """Invalid configuration value or unknown key (a usage error)."""


def parse_grid(text) -> Tuple[float, ...]:
    """``"0, 0.5, inf"`` -> (0.0, 0.5, inf).  Tuples and lists pass through."""
    if isinstance(text, (tuple, list)):
        vals = [float(v) for v in text]
    else:
        parts = [p.strip() for p in str(text).split(",")]
        if any(not p for p in parts):
            raise ConfigError(f"empty entry in grid {text!r}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"bad grid {text!r}: {exc}") from None
    if not vals:
        raise ConfigError("grid must be non-empty")
    if any(math.isnan(v) for v in vals):
        raise ConfigError("grid entries must not be nan")
    return tuple(vals)


def format_grid(vals) -> str:
    return ",".join("inf" if math.isinf(v) else repr(float(v)) for v in vals)


def _log10_grid(lo, hi, num, endpoints=True):
    g = [float(v) for v in 10.0 ** np.linspace(lo, hi, num)]
    return tuple([0.0] + g + [math.inf]) if endpoints else tuple(g)


@dataclass(frozen=True)
class _Settings:
    seed: int = 0
    replicates: int = 1
    workers: int = 1

    def validate(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for f in dataclasses.fields(self):
            if f.name.endswith("_grid") and len(getattr(self, f.name)) == 0:
                raise ConfigError(f"{f.name} must be non-empty")


@dataclass(frozen=True)
class BiasedDataSettings(_Settings):
    """Biased data study: Y ~ N(phi + theta, sigma_y^2), Z ~ N(phi, sigma_z^2)."""

    n: int = 50
    m: int = 25
    sigma_y: float = 1.0
    sigma_z: float = 2.0
    sigma_theta: float = 0.33
    phi_star: float = 0.0
    theta_star: float = 1.0
    replicates: int = 50
    n_samples: int = 4000
    delta_grid: Tuple[float, ...] = _log10_grid(-2, 2, 81)
    eta_grid: Tuple[float, ...] = tuple(round(0.05 * i, 10) for i in range(21))
    delta_star_range: Tuple[float, ...] = (0.5, 20.0)

    def validate(self):
        super().validate()
        if self.n < 1 or self.m < 1 or self.n_samples < 1:
            raise ConfigError("n, m and n_samples must be >= 1")
        if min(self.sigma_y, self.sigma_z, self.sigma_theta) <= 0:
            raise ConfigError("scales must be positive")
        if any(d < 0 for d in self.delta_grid) or any(not 0 <= e <= 1 for e in self.eta_grid):
            raise ConfigError("delta grid must be >= 0 and eta grid in [0, 1]")


@dataclass(frozen=True)
class RegressionSettings(_Settings):
    """Regression study: Y = phi + theta X^k + noise fitted with k = 1, Z ~ N(phi, sigma_z^2)."""

    n: int = 50
    m: int = 50
    sigma_y: float = 0.25
    sigma_z: float = 3.0
    phi_star: float = 0.0
    theta_star: float = 1.0
    x_low: float = 0.0
    x_high: float = 2.0
    replicates: int = 100
    n_samples: int = 1000
    k_grid: Tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
    delta_grid: Tuple[float, ...] = _log10_grid(-2, 2, 41)

    def validate(self):
        super().validate()
        if self.n < 2 or self.m < 2 or self.n_samples < 1:
            raise ConfigError("n and m must be >= 2, n_samples >= 1")
        if min(self.sigma_y, self.sigma_z) <= 0:
            raise ConfigError("scales must be positive")
        if not self.x_high > self.x_low:
            raise ConfigError("need x_high > x_low")
        if any(d < 0 for d in self.delta_grid):
            raise ConfigError("delta grid must be >= 0")


@dataclass(frozen=True)
class HpvSettings(_Settings):
    """HPV study: nested MCMC over delta and eta grids, WAIC utilities."""

    data: str = ""
    kernel: str = "discrete_uniform"
    delta_grid: Tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, math.inf)
    eta_grid: Tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(11))
    n_iter: int = 50000
    burn_in: float = 0.2
    thin: int = 10
    inner_steps: int = 50
    matched_eta: float = 0.1
    separation_threshold: float = 2.0

    def validate(self):
        super().validate()
        if self.n_iter < 10 or self.thin < 1 or self.inner_steps < 1:
            raise ConfigError("n_iter must be >= 10, thin and inner_steps >= 1")
        if not 0 <= self.burn_in < 1:
            raise ConfigError("burn_in must be in [0, 1)")
        if any(d < 0 for d in self.delta_grid) or any(not 0 <= e <= 1 for e in self.eta_grid):
            raise ConfigError("delta grid must be >= 0 and eta grid in [0, 1]")
        if self.kernel not in ("discrete_uniform", "scaled_tophat"):
            raise ConfigError("kernel must be discrete_uniform or scaled_tophat")


@dataclass(frozen=True)
class CoherenceSettings(_Settings):
    """Coherence suite over random discrete two-module models."""

    n_models: int = 50
    eta: float = 0.5
    delta: float = 1.5
    gamma: float = 0.5
    tolerance: float = 1e-10
    witness_tolerance: float = 1e-2
    inject_mismatch: bool = False

    def validate(self):
        super().validate()
        if self.n_models < 1:
            raise ConfigError("n_models must be >= 1")


EXPERIMENTS = {
    "biased-data": BiasedDataSettings,
    "regression": RegressionSettings,
    "hpv": HpvSettings,
    "coherence": CoherenceSettings,
}


def _convert(name, tp, raw):
    try:
        if tp is bool:
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tp is int:
            if isinstance(raw, str):
                return int(raw.strip(), 0)
            if float(raw) != int(raw):
                raise ValueError(f"not an integer: {raw!r}")
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return str(raw).strip()
        return parse_grid(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def make_settings(experiment: str, overrides: Optional[dict] = None, path=None):
    """Build validated settings: defaults, then the INI section, then ``overrides``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cls = EXPERIMENTS[experiment]
    types = _types(cls)
    values = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if cp.has_section(experiment):
            for key, raw in cp.items(experiment):
                if key not in types:
                    raise ConfigError(f"[{experiment}] unknown key {key!r}")
                values[key] = _convert(key, types[key], raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in types:
            raise ConfigError(f"unknown setting {key!r} for {experiment}")
        values[key] = _convert(key, types[key], raw)
    settings = cls(**values)
    settings.validate()
    return settings


def to_ini(settings) -> str:
    """INI text for one settings object (round-trips through :func:`make_settings`)."""
    name = next(k for k, v in EXPERIMENTS.items() if isinstance(settings, v) and type(settings) is v)
    cp = configparser.ConfigParser(interpolation=None)
    cp.add_section(name)
    for f in dataclasses.fields(settings):
        v = getattr(settings, f.name)
        if isinstance(v, tuple):
            text = format_grid(v)
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        cp.set(name, f.name, text)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def defaults_ini(experiment: Optional[str] = None) -> str:
    names = [experiment] if experiment else list(EXPERIMENTS)
    return "".join(to_ini(EXPERIMENTS[n]()) for n in names)


def as_dict(settings) -> dict:
    return {f.name: getattr(settings, f.name) for f in dataclasses.fields(settings)}


def task_rng(seed: int, *key) -> np.random.Generator:
    """Independent generator for one task, derived from (seed, key...)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


def map_tasks(fn, tasks, workers: int = 1):
    """Apply ``fn`` to each task; results come back in task order whatever the pool size."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))

