"""Rate experiments: configuration, execution, persistence.

An experiment simulates data on an ``n`` grid, computes posteriors with the
engine matching the prior, measures contraction radii around the truth and
fits the log-log slope of the per-``n`` median radius.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .model import simulate
from .operators import operator_from_spec
from .posterior import (
    conjugate_posterior,
    contraction_radii,
    mixture_posterior,
    series_posterior_mcmc,
)
from .priors import prior_from_spec
from .rates import HypothesisError, RateQuery, SlopeFit, fit_slope, theoretical_exponent
from .scales import scale_from_spec
from .svgplot import rate_plot_svg

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "ExperimentError",
    "truth_from_spec",
    "run_experiment",
    "emit_outputs",
    "task_seed",
    "thread_count",
]

RESULT_COLUMNS = ["n", "replicate", "seed", "radius_q50", "radius_q90", "rmse"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ExperimentError(RuntimeError):
    """A module error raised inside one ``(n, replicate)`` task."""

    def __init__(self, n, replicate, cause):
        super().__init__(f"n={n:g}, replicate={replicate}: {type(cause).__name__}: {cause}")
        self.n = n
        self.replicate = replicate
        self.cause = cause


def _n_grid(spec) -> list[float]:
    if isinstance(spec, dict):
        start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        grid = np.geomspace(start, stop, num) if num > 1 else np.array([start])
        return [float(v) for v in grid]
    return [float(v) for v in spec]


@dataclass
class ExperimentConfig:
    scale: dict
    operator: dict
    prior: dict
    truth: dict
    n_grid: list
    replicates: int = 1
    quantiles: tuple = (0.5, 0.9)
    seed: int = 0
    J_obs: Optional[int] = None
    radius_draws: int = 10_000
    tolerance: float = 0.05
    expected_exponent: Optional[float] = None
    mcmc: dict = field(default_factory=dict)
    output: Optional[str] = None
    name: str = "experiment"
    base_dir: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        try:
            self.n_grid = _n_grid(self.n_grid)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad n_grid: {exc}") from None
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be non-empty and strictly increasing")
        if any(v <= 0 for v in self.n_grid):
            raise ConfigError("n_grid values must be positive")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        self.replicates = int(self.replicates)
        self.quantiles = tuple(float(q) for q in self.quantiles)
        for q in (0.5, 0.9):
            if q not in self.quantiles:
                self.quantiles += (q,)
        if "beta" not in self.truth:
            raise ConfigError("truth spec must declare beta")

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"scale", "operator", "prior", "truth", "n_grid"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        data = dict(data)
        data.setdefault("base_dir", None if base_dir is None else str(base_dir))
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        out["quantiles"] = list(self.quantiles)
        return out

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def truth_from_spec(spec: dict, d: float = 1.0) -> np.ndarray:
    """True coefficients ``f0_i = scale * i^{-beta/d - 1/2 - offset}``, or explicit values.

    The default offset 0.05 makes ``||f0||_beta`` finite while staying close
    to the boundary of ``H_beta``.
    """
    kind = spec.get("kind", "power")
    if kind == "power":
        length = int(spec.get("length", 4096))
        beta = float(spec["beta"])
        offset = float(spec.get("offset", 0.05))
        i = np.arange(1, length + 1, dtype=float)
        return float(spec.get("scale", 1.0)) * i ** (-beta / d - 0.5 - offset)
    if kind == "coeffs":
        return np.asarray(spec["values"], dtype=float)
    raise ConfigError(f"unknown truth kind {kind!r}")


def task_seed(master: int, n_index: int, replicate: int) -> int:
    """64-bit seed for one task, keyed by ``(master, n index, replicate)``."""
    ss = np.random.SeedSequence([int(master), int(n_index), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def thread_count(requested: Optional[int] = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("SCALE_BAYES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SCALE_BAYES_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    medians: list  # (n, median radius_q50) per grid point
    fit: Optional[SlopeFit]
    exponent: float
    hypothesis_ok: bool
    passed: Optional[bool]
    provenance: dict

    @property
    def slope(self) -> Optional[float]:
        return None if self.fit is None else self.fit.slope

    def summary(self) -> dict:
        fit = self.fit
        return {
            "name": self.config.name,
            "slope": None if fit is None else fit.slope,
            "slope_stderr": None if fit is None else fit.stderr,
            "intercept": None if fit is None else fit.intercept,
            "r2": None if fit is None else fit.r2,
            "theoretical_exponent": self.exponent,
            "hypothesis_ok": self.hypothesis_ok,
            "tolerance": self.config.tolerance,
            "passed": self.passed,
            "medians": [{"n": n, "radius_q50": m} for n, m in self.medians],
            "provenance": self.provenance,
        }


class _Setup:
    def __init__(self, cfg: ExperimentConfig):
        try:
            self.scale = scale_from_spec(cfg.scale)
            self.op = operator_from_spec(cfg.operator, self.scale, base_dir=cfg.base_dir)
            self.prior = prior_from_spec(cfg.prior, self.scale)
            self.f0 = truth_from_spec(cfg.truth, self.scale.d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"incomplete spec: {exc}") from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        if self.prior.kind in ("gaussian", "mixture") and not self.op.is_diagonal:
            raise ConfigError(f"{self.prior.kind} prior needs a diagonal operator (conjugate engines)")
        level = self.prior.truncation
        self.J_obs = int(cfg.J_obs) if cfg.J_obs else max(4 * level, self.op.range_dim(self.f0.size))
        if self.J_obs < level:
            raise ConfigError(f"J_obs={self.J_obs} below prior truncation {level}")


def _run_task(cfg: ExperimentConfig, setup: _Setup, n_index: int, rep: int) -> dict:
    n = cfg.n_grid[n_index]
    seed = task_seed(cfg.seed, n_index, rep)
    try:
        obs = simulate(setup.op, setup.f0, n, setup.J_obs, seed)
        prior = setup.prior
        if prior.kind == "gaussian":
            post = conjugate_posterior(obs, setup.op, prior)
        elif prior.kind == "mixture":
            post = mixture_posterior(obs, setup.op, prior)
        else:
            m = cfg.mcmc
            post = series_posterior_mcmc(obs, setup.op, prior, n_iter=int(m.get("n_iter", 4000)),
                                         burn_in=m.get("burn_in"), chains=int(m.get("chains", 4)),
                                         seed=seed)
        radii = contraction_radii(post, setup.f0, cfg.quantiles, n_draws=cfg.radius_draws, seed=seed)
        size = max(post.dim, setup.f0.size)
        err = np.pad(post.mean, (0, size - post.dim)) - np.pad(setup.f0, (0, size - setup.f0.size))
    except Exception as exc:  # noqa: BLE001 - re-raised with task context
        raise ExperimentError(n, rep, exc) from exc
    return {"n": n, "replicate": rep, "seed": seed, "radius_q50": radii[0.5], "radius_q90": radii[0.9],
            "rmse": float(np.linalg.norm(err))}


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """Run every ``(n, replicate)`` task and fit the median-radius slope."""
    setup = _Setup(cfg)
    tasks = [(i, r) for i in range(len(cfg.n_grid)) for r in range(cfg.replicates)]
    workers = thread_count(threads)
    if workers == 1:
        rows = [_run_task(cfg, setup, i, r) for i, r in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: _run_task(cfg, setup, *t), tasks))
    rows.sort(key=lambda row: (row["n"], row["replicate"]))
    medians = []
    for n in cfg.n_grid:
        vals = [row["radius_q50"] for row in rows if row["n"] == n]
        medians.append((n, float(np.median(vals))))
    fit = fit_slope(medians) if len(medians) >= 3 else None

    query = RateQuery(setup.prior.kind, beta=float(cfg.truth["beta"]), gamma=setup.op.gamma,
                      d=setup.scale.d, alpha=getattr(setup.prior, "alpha", None))
    try:
        query.check_mixture()
        hypothesis_ok = True
    except HypothesisError:
        hypothesis_ok = False
    exponent = cfg.expected_exponent if cfg.expected_exponent is not None else \
        theoretical_exponent(query, strict=False)
    passed = None if fit is None else bool(abs(fit.slope + exponent) <= cfg.tolerance)
    provenance = {"config_hash": cfg.digest(), "master_seed": cfg.seed, "code_version": __version__,
                  "J_obs": setup.J_obs}
    return ExperimentResult(cfg, rows, medians, fit, float(exponent), hypothesis_ok, passed, provenance)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_outputs(res: ExperimentResult, directory) -> dict:
    """Write ``results.csv``, ``summary.json`` and ``rateplot.svg`` into ``directory``."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "results.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_COLUMNS)
            for row in res.rows:
                w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(res.summary(), indent=2, sort_keys=True) + "\n")
        svg_path = out / "rateplot.svg"
        svg_path.write_text(rate_plot_svg(res.medians, res.fit, res.exponent, title=res.config.name))
    except OSError as exc:
        raise OSError(f"cannot write experiment outputs to {out}: {exc}") from exc
    return {"results": csv_path, "summary": summary_path, "plot": svg_path}


def empty_result(cfg: ExperimentConfig) -> ExperimentResult:
    """Result with no rows, e.g. for a dry run."""
    return ExperimentResult(cfg, [], [], None, math.nan, True, None,
                            {"config_hash": cfg.digest(), "master_seed": cfg.seed, "code_version": __version__})
