"""Sequence-space smoothness scales.

A scale is fixed by a nondecreasing generator sequence ``b_1 <= b_2 <= ...``
with ``b_1 >= 1``.  Coefficient vectors are plain 1-D float arrays holding
the first ``J`` coefficients with respect to the scale's orthonormal basis;
index ``i`` of the array is basis element ``i + 1``.  Norms are exact on the
truncation:

    ||f||_s = (sum_i b_i^{2s} f_i^2)^{1/2}

and negative orders are the dual norms through ``H_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SequenceScale",
    "power_scale",
    "volterra2d_scale",
    "volterra_pairs",
    "scale_from_spec",
    "as_coeffs",
    "norm",
    "dual_norm",
    "dual_maximizer",
    "project",
    "approx_number",
]


def as_coeffs(f) -> np.ndarray:
    """Return ``f`` as a finite 1-D float array (a coefficient vector)."""
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 1:
        arr = np.atleast_1d(arr)
        if arr.ndim != 1:
            raise ValueError(f"coefficient vector must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("coefficient vector has non-finite entries")
    return arr


@lru_cache(maxsize=32)
def _volterra_pairs_cached(count: int) -> tuple[np.ndarray, np.ndarray]:
    # grow the product bound until at least `count` pairs have k*l <= bound
    bound = max(4, count)
    while True:
        ks, ls = [], []
        for k in range(1, bound + 1):
            lmax = bound // k
            ks.extend([k] * lmax)
            ls.extend(range(1, lmax + 1))
        if len(ks) >= count:
            break
        bound *= 2
    k = np.asarray(ks, dtype=np.int64)
    l = np.asarray(ls, dtype=np.int64)
    order = np.lexsort((k, k * l))
    k, l = k[order][:count], l[order][:count]
    k.setflags(write=False)
    l.setflags(write=False)
    return k, l


def volterra_pairs(count: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``count`` index pairs ``(k, l)``, ``k, l >= 1``, sorted by ``k*l``.

    Ties are broken by smaller ``k``.  The order is prefix-stable, so
    truncating at any ``count`` gives the leading block of the infinite
    enumeration.
    """
    if count <= 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return _volterra_pairs_cached(int(count))


@dataclass(frozen=True)
class SequenceScale:
    """Smoothness scale generated by the sequence ``b``.

    Parameters
    ----------
    generator : callable
        Maps a 1-based integer index array to the generator values ``b_i``.
    d : float
        Effective dimension; the default generator is ``i^{1/d}``.
    name : str
        Label used in configs and reports.
    index_map : callable, optional
        Maps a count ``J`` to the multi-indices of the first ``J`` basis
        elements (used by two-dimensional scales).
    """

    generator: Callable[[np.ndarray], np.ndarray]
    d: float = 1.0
    name: str = "power"
    index_map: Optional[Callable[[int], tuple]] = field(default=None, compare=False)

    def b(self, count: int) -> np.ndarray:
        """Generator values ``b_1, ..., b_count``."""
        idx = np.arange(1, int(count) + 1, dtype=float)
        return np.asarray(self.generator(idx), dtype=float)

    def b_at(self, j: int) -> float:
        """Single generator value ``b_j`` (1-based)."""
        if j < 1:
            raise ValueError("scale index is 1-based")
        return float(self.b(j)[-1])

    def weights(self, count: int, s: float) -> np.ndarray:
        """``b_i^s`` for the first ``count`` indices."""
        return self.b(count) ** s


def power_scale(d: float = 1.0) -> SequenceScale:
    """Scale with ``b_i = i^{1/d}``, so that ``delta(j, s) = j^{-s/d}``."""
    if d <= 0:
        raise ValueError("effective dimension must be positive")
    return SequenceScale(lambda i: i ** (1.0 / d), d=float(d), name="power")


def _volterra_generator(i: np.ndarray) -> np.ndarray:
    count = int(i[-1]) if len(i) else 0
    k, l = volterra_pairs(count)
    vals = (k * l).astype(float) * math.pi**2
    return vals[np.asarray(i, dtype=np.int64) - 1]


def volterra2d_scale() -> SequenceScale:
    """Dirichlet scale on the unit square generated by the root of ``D_{xy}^2``.

    Basis elements ``2 sin(k pi x) sin(l pi y)`` are enumerated by
    :func:`volterra_pairs`; ``b`` of pair ``(k, l)`` is ``k l pi^2``.
    """
    return SequenceScale(_volterra_generator, d=1.0, name="volterra2d", index_map=volterra_pairs)


def scale_from_spec(spec: dict) -> SequenceScale:
    """Build a scale from its JSON config form."""
    kind = spec.get("kind", "power")
    if kind == "power":
        return power_scale(float(spec.get("d", 1.0)))
    if kind == "volterra2d":
        return volterra2d_scale()
    raise ValueError(f"unknown scale kind {kind!r}")


def norm(f, s: float, scale: SequenceScale) -> float:
    """``||f||_s``, exact on the truncation."""
    f = as_coeffs(f)
    if f.size == 0:
        return 0.0
    val = float(np.sqrt(np.sum((scale.weights(f.size, s) * f) ** 2)))
    if not math.isfinite(val):
        raise ValueError("norm overflowed")
    return val


def dual_norm(f, s: float, scale: SequenceScale) -> float:
    """``||f||_{-s}`` via the closed form ``(sum_i b_i^{-2s} f_i^2)^{1/2}``."""
    if s < 0:
        raise ValueError("dual order must be nonnegative")
    return norm(f, -s, scale)


def dual_maximizer(f, s: float, scale: SequenceScale) -> np.ndarray:
    """The ``g`` with ``||g||_s = 1`` attaining ``sup <f, g>_0 = ||f||_{-s}``.

    Returns the zero vector for ``f = 0``.
    """
    f = as_coeffs(f)
    g = scale.weights(f.size, -2.0 * s) * f
    nrm = norm(g, s, scale)
    return g / nrm if nrm > 0 else g


def project(f, j: int) -> np.ndarray:
    """Orthogonal projection onto ``V_j``: keep coordinates ``i < j``."""
    if j < 1:
        raise ValueError("projection level must be >= 1")
    f = as_coeffs(f).copy()
    f[j - 1 :] = 0.0
    return f


def approx_number(j: int, s: float, scale: SequenceScale) -> float:
    """Approximation number ``delta(j, s) = b_j^{-s}``."""
    if j < 1:
        raise ValueError("approximation index must be >= 1")
    if s < 0:
        raise ValueError("approximation order must be nonnegative")
    return scale.b_at(j) ** (-s)
