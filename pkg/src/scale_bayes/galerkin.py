"""Galerkin least-squares inversion on the canonical spaces ``V_j``.

``f^{(j)}`` is the element of ``V_j = span{phi_i : i < j}`` whose image
matches the projection of the data onto ``W_j = A V_j``.  It is computed
from the normal equations with a Cholesky factorization of the Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .operators import ForwardOperator, SingularGramError
from .scales import SequenceScale, as_coeffs

__all__ = [
    "GalerkinSystem",
    "galerkin_system",
    "galerkin_solve",
    "orthogonality_residual",
    "galerkin_error_curve",
    "operator_norm_Rj",
    "modified_galerkin_solve",
    "prior_galerkin_residual_curve",
    "MAX_GRAM_CONDITION",
]

MAX_GRAM_CONDITION = 1e12


@dataclass(frozen=True)
class GalerkinSystem:
    """Cached normal-equation system for ``(op, j)``."""

    op: ForwardOperator
    j: int
    columns: np.ndarray  # range coefficients of A phi_k, k < j
    gram: np.ndarray
    factor: tuple

    @property
    def dim(self) -> int:
        return self.j - 1

    def rhs(self, g) -> np.ndarray:
        """``r_k = <g, A phi_k>`` with ``g`` padded or cut to the image rows.

        Also accepts a 2-D array holding one data vector per column.
        """
        g = np.asarray(g, dtype=float)
        rows = self.columns.shape[0]
        if g.shape[0] < rows:
            pad = [(0, rows - g.shape[0])] + [(0, 0)] * (g.ndim - 1)
            g = np.pad(g, pad)
        return self.columns.T @ g[:rows]


def galerkin_system(op: ForwardOperator, j: int) -> GalerkinSystem:
    """Assemble and factor the Gram system for level ``j``.

    Raises :class:`SingularGramError` when the Gram matrix is singular or
    its condition number exceeds ``MAX_GRAM_CONDITION``.
    """
    if j < 2:
        raise ValueError("Galerkin level must be >= 2")
    cols = np.asarray(op.matrix(j - 1), dtype=float)
    gram = cols.T @ cols
    gram = 0.5 * (gram + gram.T)
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_GRAM_CONDITION:
        cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
        raise SingularGramError(
            f"{op.label}: Gram matrix at j={j} has condition number {cond:.3g}; "
            "operator is not injective on V_j at working precision"
        )
    factor = linalg.cho_factor(gram, lower=True)
    return GalerkinSystem(op=op, j=int(j), columns=cols, gram=gram, factor=factor)


def galerkin_solve(sys: GalerkinSystem, g) -> np.ndarray:
    """Galerkin solution in ``V_j`` (length ``j - 1``) for range data ``g``."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("data vector has non-finite entries")
    return linalg.cho_solve(sys.factor, sys.rhs(g))


def orthogonality_residual(sys: GalerkinSystem, g, c) -> float:
    """``max_k |<A f^{(j)} - g, A phi_k>|`` for the coefficients ``c``."""
    return float(np.max(np.abs(sys.gram @ c - sys.rhs(g)))) if sys.dim else 0.0


def _pad(v: np.ndarray, size: int) -> np.ndarray:
    return np.pad(v, (0, max(0, size - v.size)))


def galerkin_error_curve(op: ForwardOperator, scale: SequenceScale, f0, j_list) -> list[tuple[int, float]]:
    """``(j, ||f^{(j)} - f0||_0)`` for noiseless data ``A f0``."""
    f0 = as_coeffs(f0)
    g = op.apply(f0)
    out = []
    for j in j_list:
        sys = galerkin_system(op, int(j))
        fj = galerkin_solve(sys, g)
        size = max(f0.size, fj.size)
        out.append((int(j), float(np.linalg.norm(_pad(fj, size) - _pad(f0, size)))))
    return out


def operator_norm_Rj(sys: GalerkinSystem) -> float:
    """Exact ``||R_j||`` as the inverse smallest singular value of ``A|V_j``."""
    sv = linalg.svdvals(sys.columns)
    if sv.size == 0 or sv[-1] <= 0:
        raise SingularGramError(f"{sys.op.label}: A is not injective on V_{sys.j}")
    return float(1.0 / sv[-1])


def modified_galerkin_solve(opA: ForwardOperator, opA0: ForwardOperator, j: int, g) -> np.ndarray:
    """Galerkin inversion after projecting out the range of ``A - A0``.

    The range of ``A - A0`` is the operator's boundary block; it is removed
    by coordinate masking, after which the ``A0`` system is solved.
    """
    g = np.array(g, dtype=float)
    g[opA.boundary_mask(g.size)] = 0.0
    return galerkin_solve(galerkin_system(opA0, j), g)


def prior_galerkin_residual_curve(prior, op: ForwardOperator, scale: SequenceScale, j_list,
                                  n_draws: int, seed) -> list[tuple[int, float]]:
    """Monte-Carlo mean of ``||f^{(j)} - f||_0`` for draws ``f`` from a Gaussian prior."""
    rng = np.random.default_rng(seed)
    draws = prior.sample_many(rng, n_draws)  # (n_draws, J_pr)
    if not np.any(draws):
        return [(int(j), 0.0) for j in j_list]
    data = np.stack([op.apply(f) for f in draws], axis=1) if not op.is_diagonal else \
        (op.singular_values(draws.shape[1])[:, None] * draws.T)
    out = []
    for j in j_list:
        sys = galerkin_system(op, int(j))
        coef = linalg.cho_solve(sys.factor, sys.rhs(data))  # (j-1, n_draws)
        resid = draws.T.copy()
        resid[: coef.shape[0]] -= coef
        out.append((int(j), float(np.mean(np.linalg.norm(resid, axis=0)))))
    return out
