"""Theoretical contraction exponents and empirical log-log slope fits.

Rates are reported as exponents ``e`` with ``eps_n = n^{-e}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

__all__ = [
    "RateQuery",
    "HypothesisError",
    "SlopeFit",
    "theoretical_exponent",
    "auxiliary_sequences",
    "fit_slope",
    "linear_fit",
]


class HypothesisError(ValueError):
    """Parameters violate the hypotheses of the queried rate result."""


@dataclass(frozen=True)
class RateQuery:
    prior_kind: str
    beta: float
    gamma: float
    d: float = 1.0
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.prior_kind not in ("series", "gaussian", "mixture"):
            raise ValueError(f"unknown prior kind {self.prior_kind!r}")
        if min(self.beta, self.gamma, self.d) <= 0:
            raise ValueError("beta, gamma and d must be positive")
        if self.prior_kind == "gaussian" and self.alpha is None:
            raise ValueError("gaussian rate needs alpha")
        if self.alpha is not None and self.prior_kind != "series" and self.alpha <= self.d / 2:
            raise HypothesisError(f"alpha={self.alpha} must exceed d/2={self.d / 2} (trace-class prior)")

    @property
    def minimax(self) -> float:
        return self.beta / (2 * self.beta + 2 * self.gamma + self.d)

    def check_mixture(self) -> None:
        if self.prior_kind == "mixture" and self.alpha is not None and self.beta > self.alpha:
            raise HypothesisError(
                f"mixture-prior rate requires beta <= alpha (got beta={self.beta}, alpha={self.alpha})"
            )


def theoretical_exponent(q: RateQuery, strict: bool = True) -> float:
    """Contraction exponent for the queried prior.

    * series: ``beta / (2 beta + 2 gamma + d)`` (log factor excluded)
    * gaussian: ``((alpha - d/2) ^ beta) / (2 alpha + 2 gamma)``
    * mixture: ``beta / (2 beta + 2 gamma + d)``, stated for ``beta <= alpha``

    With ``strict=False`` the mixture hypothesis ``beta <= alpha`` is not
    enforced and the formula is evaluated regardless.
    """
    if q.prior_kind == "gaussian":
        return min(q.alpha - q.d / 2, q.beta) / (2 * q.alpha + 2 * q.gamma)
    if q.prior_kind == "mixture" and strict:
        q.check_mixture()
    return q.minimax


def auxiliary_sequences(q: RateQuery, strict: bool = True) -> dict:
    """Exponents of the auxiliary sequences used to configure experiments.

    ``epsilon_exponent``: direct-problem rate ``eps_n ~ n^{-(beta+gamma)/(2beta+2gamma+d)}``;
    ``j_exponent``: Galerkin level ``j_n ~ n^{d/(2beta+2gamma+d)}``;
    ``eta_exponent``: approximation rate ``eta_n = delta(j_n, beta)``;
    ``tau_exponent`` (when ``alpha`` is known): deterministic prior scaling
    ``tau_n = n^{(alpha - d/2 - beta)/(2beta+2gamma+d)}``;
    ``log_exponent`` (series prior): power of ``log n`` in the rate.
    """
    if strict:
        q.check_mixture()
    denom = 2 * q.beta + 2 * q.gamma + q.d
    out = {
        "rate_exponent": theoretical_exponent(q, strict=strict),
        "epsilon_exponent": (q.beta + q.gamma) / denom,
        "j_exponent": q.d / denom,
        "eta_exponent": q.beta / denom,
    }
    if q.alpha is not None:
        out["tau_exponent"] = (q.alpha - q.d / 2 - q.beta) / denom
    if q.prior_kind == "series":
        out["log_exponent"] = (q.beta + q.gamma) * (1 + 2 * q.gamma / q.d) / denom
    return out


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r2: float


def linear_fit(x, y) -> SlopeFit:
    """Ordinary least squares of ``y`` on ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a slope fit")
    if np.ptp(y) == 0:
        return SlopeFit(0.0, float(y[0]), 0.0, 1.0)
    res = stats.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2))


def fit_slope(points) -> SlopeFit:
    """Fit ``log(value) = intercept + slope * log(n)`` over ``(n, value)`` pairs."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (n, value) points")
    if np.any(pts <= 0):
        raise ValueError("slope fit needs positive n and values")
    return linear_fit(np.log(pts[:, 0]), np.log(pts[:, 1]))
