"""Posterior engines and contraction radii.

Three engines:

* :func:`conjugate_posterior` -- Gaussian prior, diagonal operator, closed form.
* :func:`mixture_posterior` -- scale mixture of Gaussians, marginalized on a
  grid of ``tau`` values.
* :func:`series_posterior_mcmc` -- random series prior, trans-dimensional
  Metropolis over the truncation level ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, special

from .model import Observation, TruncationLossError
from .operators import ForwardOperator
from .priors import GaussianPrior, MixturePrior, SeriesPrior
from .scales import as_coeffs

__all__ = [
    "PosteriorResult",
    "GridTooNarrowError",
    "LowAcceptanceError",
    "conjugate_posterior",
    "mixture_posterior",
    "default_tau_grid",
    "series_posterior_mcmc",
    "posterior_draws",
    "contraction_radius",
    "contraction_radii",
    "split_rhat",
    "effective_sample_size",
]

RADIUS_DRAWS = 10_000


class GridTooNarrowError(ValueError):
    """Posterior weight piles up at an end of the tau grid."""


class LowAcceptanceError(RuntimeError):
    """Random-walk acceptance collapsed; the step size is misconfigured."""


@dataclass
class PosteriorResult:
    """Posterior summaries.

    ``kind`` is ``"exact"`` (Gaussian), ``"grid-mixture"`` or ``"samples"``.
    Gaussian kinds keep per-coordinate moments (and, for mixtures, the
    per-``tau`` components); the sampled kind keeps the draws.
    """

    kind: str
    mean: np.ndarray
    var: np.ndarray
    samples: Optional[np.ndarray] = None
    M_samples: Optional[np.ndarray] = None
    tau_grid: Optional[np.ndarray] = None
    tau_weights: Optional[np.ndarray] = None
    comp_means: Optional[np.ndarray] = None
    comp_vars: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.mean.size)


def _diag_setup(obs: Observation, op: ForwardOperator, J: int):
    if not op.is_diagonal:
        raise TypeError(f"{op.label} is not diagonal; use series_posterior_mcmc for general operators")
    if J > obs.J_obs:
        raise ValueError(f"prior truncation {J} exceeds J_obs={obs.J_obs}")
    return op.singular_values(J), np.asarray(obs.y[:J])


def _gaussian_update(a, y, n, sd, m0=None):
    with np.errstate(divide="ignore"):
        prec = n * a**2 + np.where(sd > 0, sd**-2.0, np.inf)
    var = np.where(np.isfinite(prec), 1.0 / prec, 0.0)
    shift = 0.0 if m0 is None else np.where(sd > 0, m0 / np.where(sd > 0, sd, 1.0) ** 2, 0.0)
    mean = var * (n * a * y + shift)
    if m0 is not None:
        mean = np.where(sd > 0, mean, m0)
    return mean, var


def conjugate_posterior(obs: Observation, op: ForwardOperator, prior: GaussianPrior) -> PosteriorResult:
    """Coordinatewise Gaussian posterior: ``v_i = (n a_i^2 + sd_i^{-2})^{-1}``,
    ``m_i = v_i n a_i y_i``.  Coordinates past the prior truncation are 0."""
    a, y = _diag_setup(obs, op, prior.truncation)
    m0 = prior.mean_vector() if prior.mean is not None else None
    mean, var = _gaussian_update(a, y, obs.n, prior.sd(), m0)
    return PosteriorResult("exact", mean, var, diagnostics={"engine": "conjugate"})


def default_tau_grid(prior: MixturePrior, size: int = 80, span: float = 100.0) -> np.ndarray:
    """``size`` log-spaced points over ``[med/span, med*span]``, ``med`` the hyperprior median."""
    med = prior.q.median()
    return np.geomspace(med / span, med * span, size)


def _log_marginal(a, y, n, sd_base, taus) -> np.ndarray:
    s2 = (a**2 * sd_base**2)[None, :] * (np.asarray(taus) ** 2)[:, None] + 1.0 / n
    return np.sum(-0.5 * np.log(2 * math.pi * s2) - y[None, :] ** 2 / (2 * s2), axis=1)


def mixture_posterior(obs: Observation, op: ForwardOperator, prior: MixturePrior, tau_grid=None,
                      endpoint_tol: float = 0.01) -> PosteriorResult:
    """Posterior under the scale mixture, marginalizing ``tau`` on a grid.

    Weights are ``q(tau) m(y | tau) width(tau)`` for a continuous hyperprior
    and ``Q{tau} m(y | tau)`` for a discrete one.  With a continuous
    hyperprior and more than one grid point, more than ``endpoint_tol``
    weight on either endpoint raises :class:`GridTooNarrowError`.
    """
    a, y = _diag_setup(obs, op, prior.truncation)
    q = prior.q
    if tau_grid is None:
        tau_grid = np.asarray(q.taus) if q.is_discrete else default_tau_grid(prior)
    taus = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    base = prior.base_sd()
    logw = _log_marginal(a, y, obs.n, base, taus)
    if q.is_discrete:
        lookup = dict(zip(q.taus, q.masses()))
        with np.errstate(divide="ignore"):
            logw = logw + np.log([lookup.get(float(t), 0.0) for t in taus])
    else:
        width = np.gradient(taus) if taus.size > 1 else np.ones(1)
        logw = logw + q.logpdf(taus) + np.log(width)
    w = np.exp(logw - special.logsumexp(logw))
    w /= w.sum()
    if not q.is_discrete and taus.size > 1 and max(w[0], w[-1]) > endpoint_tol:
        raise GridTooNarrowError(
            f"tau grid [{taus[0]:.3g}, {taus[-1]:.3g}] too narrow: endpoint weights {w[0]:.3g}, {w[-1]:.3g}"
        )
    cm = np.empty((taus.size, base.size))
    cv = np.empty_like(cm)
    for g, t in enumerate(taus):
        cm[g], cv[g] = _gaussian_update(a, y, obs.n, t * base)
    mean = w @ cm
    # total variance in centered form; exact for a single component
    var = w @ cv + w @ (cm - mean) ** 2
    return PosteriorResult("grid-mixture", mean, var, tau_grid=taus, tau_weights=w, comp_means=cm,
                           comp_vars=cv, diagnostics={"engine": "tau-grid",
                                                      "tau_posterior_mean": float(w @ taus)})


# ---------------------------------------------------------------------------
# trans-dimensional sampler for the random series prior


def _design(obs: Observation, op: ForwardOperator, M_max: int) -> np.ndarray:
    cols = np.asarray(op.matrix(M_max), dtype=float)
    rows = obs.J_obs
    if cols.shape[0] > rows:
        if np.any(cols[rows:] != 0.0):
            raise TruncationLossError(f"A phi_k for k <= {M_max} reaches beyond J_obs={rows}")
        cols = cols[:rows]
    elif cols.shape[0] < rows:
        cols = np.pad(cols, ((0, rows - cols.shape[0]), (0, 0)))
    return cols


class _GaussianSeriesModel:
    """Closed-form evidence and conditional posterior of ``f | M`` for Gaussian ``p``."""

    def __init__(self, cols, y, n, kappas):
        self.AtA = cols.T @ cols
        self.Aty = cols.T @ y
        self.n = n
        self.kappas = kappas
        self._cache: dict[int, tuple] = {}

    def get(self, M: int):
        if M not in self._cache:
            if M == 0:
                self._cache[0] = (0.0, None, np.zeros(0))
            else:
                kap = self.kappas[:M]
                prec = self.n * self.AtA[:M, :M] + np.diag(kap**-2.0)
                chol = linalg.cholesky(prec, lower=True)
                u = linalg.solve_triangular(chol, self.n * self.Aty[:M], lower=True)
                logev = -np.sum(np.log(kap)) - np.sum(np.log(np.diag(chol))) + 0.5 * u @ u
                mean = linalg.solve_triangular(chol.T, u, lower=False)
                self._cache[M] = (float(logev), chol, mean)
        return self._cache[M]

    def log_evidence(self, M: int) -> float:
        return self.get(M)[0]

    def draw(self, M: int, rng: np.random.Generator, count: int) -> np.ndarray:
        _, chol, mean = self.get(M)
        if M == 0:
            return np.zeros((count, 0))
        z = rng.standard_normal((M, count))
        return (mean[:, None] + linalg.solve_triangular(chol.T, z, lower=False)).T


def _gaussian_chain(model: _GaussianSeriesModel, prior: SeriesPrior, n_iter: int, burn_in: int,
                    rng: np.random.Generator):
    M = int(min(prior.M_max, round(prior.mu)))
    trace = np.empty(n_iter, dtype=np.int64)
    accepted = proposed = 0
    cur = model.log_evidence(M) + prior.log_pM(M)
    for it in range(n_iter):
        prop = M + (1 if rng.random() < 0.5 else -1)
        if 0 <= prop <= prior.M_max:
            proposed += 1
            new = model.log_evidence(prop) + prior.log_pM(prop)
            if math.log(rng.random()) < new - cur:
                M, cur = prop, new
                accepted += 1
        trace[it] = M
    kept = trace[burn_in:]
    # f | M is an exact conditional draw; batching by M leaves the joint law unchanged
    f = np.zeros((kept.size, prior.M_max))
    for m in np.unique(kept):
        idx = np.nonzero(kept == m)[0]
        f[idx, :m] = model.draw(int(m), rng, idx.size)
    return trace, f, {"birth_death_acceptance": accepted / max(proposed, 1)}


def _laplace_chain(cols, y, n, prior: SeriesPrior, n_iter: int, burn_in: int, rng: np.random.Generator,
                   step_factor: float):
    M_max = prior.M_max
    kap = prior.kappas(M_max)
    colsq = np.einsum("ij,ij->j", cols, cols)
    steps = step_factor / np.sqrt(n * colsq + kap**-2.0)
    M = int(min(M_max, round(prior.mu)))
    f = np.zeros(M_max)
    resid = np.array(y, dtype=float)
    trace = np.empty(n_iter, dtype=np.int64)
    out = np.zeros((n_iter - burn_in, M_max))
    rw_acc = rw_prop = bd_acc = bd_prop = 0
    rw_acc_post = rw_prop_post = 0
    for it in range(n_iter):
        for i in range(M):
            delta = steps[i] * rng.standard_normal()
            c = cols[:, i]
            dll = n * delta * (c @ resid) - 0.5 * n * delta**2 * colsq[i]
            dlp = prior.log_p((f[i] + delta) / kap[i]) - prior.log_p(f[i] / kap[i])
            rw_prop += 1
            ok = math.log(rng.random()) < dll + dlp
            if ok:
                f[i] += delta
                resid -= delta * c
                rw_acc += 1
            if it >= burn_in:
                rw_prop_post += 1
                rw_acc_post += ok
        up = rng.random() < 0.5
        prop = M + 1 if up else M - 1
        if 0 <= prop <= M_max:
            bd_prop += 1
            if up:
                val = kap[M] * prior.draw_Z(rng, None)
                c = cols[:, M]
                dll = n * val * (c @ resid) - 0.5 * n * val**2 * colsq[M]
            else:
                val = -f[M - 1]
                c = cols[:, M - 1]
                dll = n * val * (c @ resid) - 0.5 * n * val**2 * colsq[M - 1]
            if math.log(rng.random()) < dll + prior.log_pM(prop) - prior.log_pM(M):
                if up:
                    f[M] = val
                    resid -= val * c
                else:
                    f[M - 1] = 0.0
                    resid -= val * c
                M = prop
                bd_acc += 1
        trace[it] = M
        if it >= burn_in:
            out[it - burn_in] = f
    rate = rw_acc_post / rw_prop_post if rw_prop_post else 1.0
    if rw_prop_post >= 100 and rate < 0.01:
        raise LowAcceptanceError(f"coordinate random-walk acceptance {rate:.4f} < 1%")
    return trace, out, {"birth_death_acceptance": bd_acc / max(bd_prop, 1),
                        "coordinate_acceptance": rw_acc / max(rw_prop, 1)}


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction for a ``(chains, draws)`` array."""
    chains = np.asarray(chains, dtype=float)
    half = chains.shape[1] // 2
    if half < 2:
        return math.nan
    parts = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    within = parts.var(axis=1, ddof=1).mean()
    between = half * parts.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return float(math.sqrt(var_plus / within))


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of one chain from the initial positive sequence of autocorrelations."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or x.var() == 0:
        return float(n)
    xc = x - x.mean()
    spec = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(spec * np.conj(spec))[:n] / (xc @ xc)
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / tau)


def series_posterior_mcmc(obs: Observation, op: ForwardOperator, prior: SeriesPrior, n_iter: int = 4000,
                          burn_in: Optional[int] = None, chains: int = 4, seed=0,
                          step_factor: float = 2.4) -> PosteriorResult:
    """Trans-dimensional posterior sampler for the random series prior.

    ``M`` moves are birth/death proposals ``M -> M +- 1``.  For Gaussian
    ``p`` the coefficients are integrated out of the ``M`` move (closed-form
    evidence) and ``f | M, y`` is drawn exactly; for Laplace ``p`` births draw
    the new coefficient from its prior and coefficients move by
    componentwise random-walk Metropolis.
    """
    if prior.M_max > obs.J_obs:
        raise ValueError(f"M_max={prior.M_max} exceeds J_obs={obs.J_obs}")
    if burn_in is None:
        burn_in = n_iter // 5
    if not 0 <= burn_in < n_iter:
        raise ValueError("burn_in must lie in [0, n_iter)")
    if prior.M_max == 0:
        zero = np.zeros((chains * (n_iter - burn_in), 0))
        return PosteriorResult("samples", np.zeros(0), np.zeros(0), samples=zero,
                               M_samples=np.zeros(zero.shape[0], dtype=np.int64),
                               diagnostics={"engine": "mcmc", "chains": chains})
    cols = _design(obs, op, prior.M_max)
    y = np.asarray(obs.y, dtype=float)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]
    if prior.p == "gaussian":
        model = _GaussianSeriesModel(cols, y, obs.n, prior.kappas(prior.M_max))
        runs = [_gaussian_chain(model, prior, n_iter, burn_in, rng) for rng in streams]
    else:
        runs = [_laplace_chain(cols, y, obs.n, prior, n_iter, burn_in, rng, step_factor) for rng in streams]
    traces = np.stack([r[0] for r in runs])
    samples = np.concatenate([r[1] for r in runs])
    diag = {"engine": "mcmc", "chains": chains, "n_iter": n_iter, "burn_in": burn_in,
            "rhat_M": split_rhat(traces[:, burn_in:]),
            "ess_M": float(sum(effective_sample_size(t[burn_in:]) for t in traces))}
    for key in runs[0][2]:
        diag[key] = float(np.mean([r[2][key] for r in runs]))
    return PosteriorResult("samples", samples.mean(axis=0), samples.var(axis=0), samples=samples,
                           M_samples=traces[:, burn_in:].reshape(-1), diagnostics=diag)


# ---------------------------------------------------------------------------
# contraction radii


def posterior_draws(post: PosteriorResult, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` draws from a Gaussian or grid-mixture posterior."""
    if post.kind == "samples":
        raise ValueError("sampled posteriors already carry their draws")
    if post.kind == "grid-mixture":
        comp = rng.choice(post.tau_weights.size, size=count, p=post.tau_weights)
        return post.comp_means[comp] + np.sqrt(post.comp_vars[comp]) * rng.standard_normal((count, post.dim))
    return post.mean + np.sqrt(post.var) * rng.standard_normal((count, post.dim))


def _distances(post: PosteriorResult, f0, n_draws: int, seed, chunk: int = 2000) -> np.ndarray:
    f0 = as_coeffs(f0)
    size = max(f0.size, post.dim)
    f0p = np.pad(f0, (0, size - f0.size))
    head, tail = f0p[: post.dim], float(f0p[post.dim :] @ f0p[post.dim :])
    if post.kind == "samples":
        diff = post.samples - head
        return np.sqrt(np.einsum("ij,ij->i", diff, diff) + tail)
    rng = np.random.default_rng(seed)
    out = np.empty(n_draws)
    for start in range(0, n_draws, chunk):
        m = min(chunk, n_draws - start)
        diff = posterior_draws(post, rng, m) - head
        out[start : start + m] = np.sqrt(np.einsum("ij,ij->i", diff, diff) + tail)
    return out


def contraction_radii(post: PosteriorResult, f0, qs, n_draws: int = RADIUS_DRAWS, seed=0) -> dict:
    """Smallest ``eps`` with posterior mass ``>= q`` on ``{||f - f0||_0 <= eps}``,
    for every ``q`` in ``qs``, from one shared set of draws."""
    dist = _distances(post, f0, n_draws, seed)
    out = {}
    for q in qs:
        if not 0 < q < 1:
            raise ValueError("quantile level must be in (0, 1)")
        out[q] = float(np.quantile(dist, q, method="inverted_cdf"))
    return out


def contraction_radius(post: PosteriorResult, f0, q: float, n_draws: int = RADIUS_DRAWS, seed=0) -> float:
    return contraction_radii(post, f0, [q], n_draws=n_draws, seed=seed)[q]
