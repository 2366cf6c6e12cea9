"""Prior families: random series, Gaussian, and scale mixtures of Gaussians.

All samplers take a caller-provided ``numpy.random.Generator``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, stats

from .operators import ForwardOperator
from .scales import SequenceScale, as_coeffs, power_scale

__all__ = [
    "SeriesPrior",
    "GaussianPrior",
    "MixturePrior",
    "InvGammaSqQ",
    "GridQ",
    "PriorDraw",
    "PriorMassPoint",
    "MixtureConditionReport",
    "sample",
    "log_prior_density",
    "prior_mass_curve",
    "check_mixture_condition",
    "check_kappa_bounds",
    "poisson_rate_constants",
    "prior_from_spec",
]


# ---------------------------------------------------------------------------
# hyperprior distributions for the scale tau


@dataclass(frozen=True)
class InvGammaSqQ:
    """Law of ``tau`` when ``1/tau^2 ~ Gamma(shape, rate)``."""

    shape: float = 1.0
    rate: float = 1.0
    is_discrete = False

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("Gamma shape and rate must be positive")

    @property
    def _precision(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self._precision.logpdf(t**-2.0) + math.log(2.0) - 3.0 * np.log(t)

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return self._precision.sf(t**-2.0)

    def median(self) -> float:
        return float(self._precision.median() ** -0.5)

    def sample(self, rng: np.random.Generator, size=None):
        prec = rng.gamma(self.shape, 1.0 / self.rate, size=size)
        return prec**-0.5

    @property
    def support_is_full(self) -> bool:
        return True


@dataclass(frozen=True)
class GridQ:
    """Discrete law on finitely many ``tau`` values (a point mass if one)."""

    taus: tuple
    probs: tuple = None
    is_discrete = True

    def __post_init__(self):
        taus = tuple(float(t) for t in np.atleast_1d(self.taus))
        probs = self.probs
        if probs is None:
            probs = (1.0 / len(taus),) * len(taus)
        probs = tuple(float(p) for p in np.atleast_1d(probs))
        if len(probs) != len(taus) or any(p < 0 for p in probs) or any(t < 0 for t in taus):
            raise ValueError("grid hyperprior needs matching nonnegative taus and probs")
        total = sum(probs)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "probs", tuple(p / total for p in probs))

    def masses(self) -> np.ndarray:
        return np.asarray(self.probs)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(np.asarray(self.probs)[None, :] * (np.asarray(self.taus)[None, :] <= t.reshape(-1, 1)),
                      axis=1).reshape(t.shape)

    def median(self) -> float:
        order = np.argsort(self.taus)
        cum = np.cumsum(np.asarray(self.probs)[order])
        return float(np.asarray(self.taus)[order][np.searchsorted(cum, 0.5)])

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(np.asarray(self.taus), size=size, p=np.asarray(self.probs))

    @property
    def support_is_full(self) -> bool:
        return False


def q_from_spec(spec: dict):
    kind = spec.get("kind", "inv_gamma_sq")
    if kind == "inv_gamma_sq":
        return InvGammaSqQ(float(spec.get("shape", 1.0)), float(spec.get("rate", 1.0)))
    if kind in ("grid", "point"):
        taus = spec.get("taus", spec.get("tau"))
        return GridQ(tuple(np.atleast_1d(taus)), spec.get("probs"))
    raise ValueError(f"unknown hyperprior kind {kind!r}")


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class PriorDraw:
    coeffs: np.ndarray
    M: Optional[int] = None
    tau: Optional[float] = None


def _unit_kappa(i):
    return np.ones_like(np.asarray(i, dtype=float))


@dataclass(frozen=True)
class SeriesPrior:
    """``f = sum_{i <= M} kappa_i Z_i phi_i`` with ``M ~ Poisson(mu)`` capped at ``M_max``.

    ``p`` is the density of the ``Z_i``: ``"gaussian"`` or ``"laplace"``
    (``exp(-|x|)/2``).
    """

    mu: float = 5.0
    p: str = "gaussian"
    kappa: Callable = field(default=_unit_kappa, compare=False)
    M_max: int = 200

    kind = "series"

    def __post_init__(self):
        if self.p not in ("gaussian", "laplace"):
            raise ValueError("series density must be 'gaussian' or 'laplace'")
        if self.mu <= 0:
            raise ValueError("Poisson mean must be positive")
        if self.M_max < 0:
            raise ValueError("M_max must be nonnegative")

    @property
    def truncation(self) -> int:
        return self.M_max

    @functools.cached_property
    def _M_cdf(self) -> np.ndarray:
        # inverse-cdf draws of M ~ Poisson(mu) conditioned on M <= M_max
        cdf = np.cumsum(np.exp(self.log_pM(np.arange(self.M_max + 1))))
        return np.minimum(cdf / cdf[-1], 1.0)

    def kappas(self, count: int) -> np.ndarray:
        return np.asarray(self.kappa(np.arange(1, count + 1, dtype=float)), dtype=float)

    def log_pM(self, M) -> float:
        return stats.poisson.logpmf(M, self.mu)

    def log_p(self, x):
        x = np.asarray(x, dtype=float)
        if self.p == "gaussian":
            return -0.5 * x**2 - 0.5 * math.log(2 * math.pi)
        return -np.abs(x) - math.log(2.0)

    def draw_Z(self, rng: np.random.Generator, size):
        if self.p == "gaussian":
            return rng.standard_normal(size)
        return rng.laplace(0.0, 1.0, size)

    def sample(self, rng: np.random.Generator) -> PriorDraw:
        M = int(np.searchsorted(self._M_cdf, rng.random(), side="right"))
        f = np.zeros(self.M_max)
        f[:M] = self.kappas(M) * self.draw_Z(rng, M)
        return PriorDraw(f, M=M)

    def sample_many(self, rng: np.random.Generator, n_draws: int) -> np.ndarray:
        return np.stack([self.sample(rng).coeffs for _ in range(n_draws)]) if n_draws else \
            np.zeros((0, self.M_max))


@dataclass(frozen=True)
class GaussianPrior:
    """Centered Gaussian with coefficient sds ``tau * b_i^{-alpha}``, ``i <= truncation``.

    ``tau = 0`` gives the point mass at ``mean`` (zero by default).
    """

    alpha: float
    tau: float = 1.0
    truncation: int = 1024
    scale: SequenceScale = field(default_factory=power_scale, compare=False)
    mean: Optional[np.ndarray] = field(default=None, compare=False)

    kind = "gaussian"

    def __post_init__(self):
        if self.alpha <= self.scale.d / 2:
            raise ValueError(f"alpha={self.alpha} must exceed d/2={self.scale.d / 2} for a trace-class covariance")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")

    def sd(self) -> np.ndarray:
        return self.tau * self.scale.b(self.truncation) ** (-self.alpha)

    def mean_vector(self) -> np.ndarray:
        m = np.zeros(self.truncation)
        if self.mean is not None:
            mv = as_coeffs(self.mean)[: self.truncation]
            m[: mv.size] = mv
        return m

    def sample(self, rng: np.random.Generator) -> PriorDraw:
        return PriorDraw(self.mean_vector() + self.sd() * rng.standard_normal(self.truncation), tau=self.tau)

    def sample_many(self, rng: np.random.Generator, n_draws: int) -> np.ndarray:
        z = rng.standard_normal((n_draws, self.truncation))
        z *= self.sd()
        if self.mean is not None:
            z += self.mean_vector()
        return z


@dataclass(frozen=True)
class MixturePrior:
    """Law of ``tau F`` with ``F`` the ``alpha``-Gaussian prior and ``tau ~ q``."""

    alpha: float
    q: Union[InvGammaSqQ, GridQ] = field(default_factory=InvGammaSqQ)
    truncation: int = 1024
    scale: SequenceScale = field(default_factory=power_scale, compare=False)

    kind = "mixture"

    def __post_init__(self):
        if self.alpha <= self.scale.d / 2:
            raise ValueError(f"alpha={self.alpha} must exceed d/2={self.scale.d / 2}")

    def base_sd(self) -> np.ndarray:
        return self.scale.b(self.truncation) ** (-self.alpha)

    def at(self, tau: float) -> GaussianPrior:
        return GaussianPrior(self.alpha, tau=float(tau), truncation=self.truncation, scale=self.scale)

    def sample(self, rng: np.random.Generator) -> PriorDraw:
        tau = float(self.q.sample(rng))
        return PriorDraw(tau * self.base_sd() * rng.standard_normal(self.truncation), tau=tau)

    def sample_many(self, rng: np.random.Generator, n_draws: int) -> np.ndarray:
        taus = np.asarray(self.q.sample(rng, size=n_draws), dtype=float)
        z = rng.standard_normal((n_draws, self.truncation))
        z *= self.base_sd()
        z *= taus[:, None]
        return z


def sample(prior, rng: np.random.Generator) -> PriorDraw:
    """One prior draw; series draws carry ``M``, mixture draws carry ``tau``."""
    return prior.sample(rng)


def prior_from_spec(spec: dict, scale: SequenceScale):
    """Build a prior from its JSON config form."""
    kind = spec.get("kind")
    trunc = int(spec.get("truncation", 1024))
    if kind == "series":
        kappa = spec.get("kappa", "unit")
        if kappa == "unit":
            kfn = _unit_kappa
        elif isinstance(kappa, dict) and kappa.get("kind") == "power":
            expo = float(kappa["exponent"])
            kfn = lambda i, e=expo: np.asarray(i, dtype=float) ** e  # noqa: E731
        else:
            raise ValueError(f"unsupported kappa spec {kappa!r}")
        return SeriesPrior(mu=float(spec.get("mu", 5.0)), p=spec.get("p", "gaussian"), kappa=kfn,
                           M_max=int(spec.get("M_max", 200)))
    if kind == "gaussian":
        return GaussianPrior(float(spec["alpha"]), tau=float(spec.get("tau", 1.0)), truncation=trunc, scale=scale)
    if kind == "mixture":
        return MixturePrior(float(spec["alpha"]), q=q_from_spec(spec.get("q", {})), truncation=trunc, scale=scale)
    raise ValueError(f"unknown prior kind {kind!r}")


# ---------------------------------------------------------------------------
# densities and condition checks


def log_prior_density(prior: SeriesPrior, f, M: int) -> float:
    """``log p_M(M) + sum_{i <= M} [log p(f_i / kappa_i) - log kappa_i]``."""
    f = as_coeffs(f)
    if M < 0 or M > prior.M_max:
        raise ValueError(f"M={M} outside 0..{prior.M_max}")
    if np.any(f[M:] != 0.0):
        raise ValueError(f"coefficient vector has support beyond M={M}")
    if f.size < M:
        f = np.pad(f, (0, M - f.size))
    kap = prior.kappas(M)
    return float(prior.log_pM(M) + np.sum(prior.log_p(f[:M] / kap) - np.log(kap)))


def check_kappa_bounds(prior: SeriesPrior, beta0: float, w: float, alpha_exp: float, d: float = 1.0,
                       i_max: int = 10_000, const: float = 10.0) -> dict:
    """Check ``i^{-beta0/d} (log i)^{-1/w} <= const kappa_i`` and
    ``kappa_i <= const i^{alpha_exp}`` for ``2 <= i <= i_max``."""
    i = np.arange(2, i_max + 1, dtype=float)
    kap = np.asarray(prior.kappa(i), dtype=float)
    lower = i ** (-beta0 / d) * np.log(i) ** (-1.0 / w)
    upper = i**alpha_exp
    lo_ratio = float(np.max(lower / kap))
    hi_ratio = float(np.max(kap / upper))
    return {"lower_ratio": lo_ratio, "upper_ratio": hi_ratio,
            "passed": bool(lo_ratio <= const and hi_ratio <= const)}


def poisson_rate_constants(mu: float, k_max: int = 50) -> tuple[float, float]:
    """Empirical ``(b1, b2)`` with ``e^{-b1 k} <= p_M(k) <= e^{-b2 k}`` on ``1..k_max``."""
    k = np.arange(1, k_max + 1)
    slope = -stats.poisson.logpmf(k, mu) / k
    return float(slope.max()), float(slope.min())


@dataclass(frozen=True)
class PriorMassPoint:
    epsilon: float
    neg_log_prob: float
    stderr: float
    hits: int
    reliable: bool


def prior_mass_curve(prior, op: ForwardOperator, f0, epsilons, n_draws: int, seed,
                     min_hits: int = 50, chunk: int = 4096) -> list[PriorMassPoint]:
    """Monte-Carlo ``-log Pi(||A f - A f0|| < eps)`` with delta-method standard errors.

    Points with fewer than ``min_hits`` hits are flagged unreliable; with
    zero hits the estimate is ``inf``.
    """
    rng = np.random.default_rng(seed)
    eps = np.asarray(epsilons, dtype=float)
    J = prior.truncation
    f0 = np.zeros(J) if f0 is None else as_coeffs(f0)
    af0 = op.apply(f0)
    if op.is_diagonal:
        sv, mat = op.singular_values(J), None
        width = J
    else:
        sv, mat = None, op.matrix(J)
        width = mat.shape[0]
    size = max(width, af0.size)
    af0 = np.pad(af0, (0, size - af0.size))
    # mass of A f0 outside the image window is a constant offset
    head, tail_sq = af0[:width], float(af0[width:] @ af0[width:])
    thresholds = eps**2 - tail_sq
    hits = np.zeros(eps.size, dtype=np.int64)
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        draws = prior.sample_many(rng, m)
        if sv is not None:
            draws *= sv
            img = draws
        else:
            img = draws @ mat.T
        img -= head
        dist_sq = np.einsum("ij,ij->i", img, img)
        hits += np.sum(dist_sq[:, None] < thresholds[None, :], axis=0)
        done += m
    out = []
    for e, h in zip(eps, hits):
        p = h / n_draws
        if h == 0:
            out.append(PriorMassPoint(float(e), math.inf, math.inf, 0, False))
            continue
        se = math.sqrt((1 - p) / (n_draws * p))
        out.append(PriorMassPoint(float(e), float(-math.log(p)), se, int(h), bool(h >= min_hits)))
    return out


@dataclass(frozen=True)
class MixtureConditionReport:
    small_t_ratio: float
    large_t_ratio: float
    support_full: bool
    exponent_large: float

    @property
    def passed(self) -> bool:
        return self.support_full and math.isfinite(self.small_t_ratio) and math.isfinite(self.large_t_ratio)


def _interval_mass(q, t: float) -> float:
    if q.is_discrete:
        taus = np.asarray(q.taus)
        return float(np.sum(q.masses()[(taus > t) & (taus < 2 * t)]))
    # work on log tau so the integrand stays well scaled across decades
    val, _ = integrate.quad(lambda u: float(q.pdf(math.exp(u))) * math.exp(u), math.log(t), math.log(2 * t),
                            epsabs=0.0, epsrel=1e-10, limit=200)
    if not math.isfinite(val):
        raise ValueError("hyperprior density is not integrable")
    return val


def check_mixture_condition(prior: MixturePrior, small_grid=None, large_grid=None) -> MixtureConditionReport:
    """Evaluate the tail condition on ``Q`` numerically.

    Reports ``max_t -log Q((t, 2t)) t^2`` over ``small_grid`` and
    ``max_t -log Q((t, 2t)) t^{-d/(alpha - d/2)}`` over ``large_grid``;
    ``inf`` marks an interval with no mass.
    """
    if small_grid is None:
        small_grid = np.linspace(0.05, 0.5, 10)
    if large_grid is None:
        large_grid = np.geomspace(2.0, 1e3, 12)
    d = prior.scale.d
    expo = d / (prior.alpha - d / 2)

    def worst(grid, power):
        ratios = []
        for t in grid:
            mass = _interval_mass(prior.q, float(t))
            ratios.append(math.inf if mass <= 0 else -math.log(mass) * float(t) ** power)
        return float(max(ratios))

    return MixtureConditionReport(
        small_t_ratio=worst(small_grid, 2.0),
        large_t_ratio=worst(large_grid, -expo),
        support_full=prior.q.support_is_full,
        exponent_large=expo,
    )
