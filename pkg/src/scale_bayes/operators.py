"""Forward operators acting on coefficient vectors.

Every operator maps domain coefficients (w.r.t. the scale basis) to range
coefficients (w.r.t. an orthonormal basis of the data space).  Range
layouts are prefix-stable: the image of the first ``J`` domain elements
lives in the first ``range_dim(J)`` range coordinates, whatever ``J``.
"""

from __future__ import annotations

import csv
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from .scales import SequenceScale, as_coeffs, dual_norm, volterra_pairs

__all__ = [
    "ForwardOperator",
    "DiagonalOperator",
    "PoissonSineOperator",
    "Volterra2DOperator",
    "MatrixOperator",
    "SingularGramError",
    "diagonal_operator",
    "operator_from_spec",
    "load_matrix_csv",
    "gram_matrix",
    "smoothing_ratio",
    "volterra_range_pairs",
]


class SingularGramError(np.linalg.LinAlgError):
    """The operator is not (numerically) injective on the requested space."""


class ForwardOperator:
    """Base class.  Subclasses implement ``range_dim`` and ``matrix``."""

    kind = "abstract"
    gamma = 1.0
    is_diagonal = False

    def range_dim(self, dim: int) -> int:
        raise NotImplementedError

    def matrix(self, dim: int) -> np.ndarray:
        """Dense ``range_dim(dim) x dim`` matrix whose columns are ``A phi_k``."""
        raise NotImplementedError

    def apply(self, f) -> np.ndarray:
        f = as_coeffs(f)
        return self.matrix(f.size) @ f

    def boundary_mask(self, dim: int) -> np.ndarray:
        """Range coordinates spanned by ``A - A_0``; none for plain operators."""
        return np.zeros(dim, dtype=bool)

    @property
    def label(self) -> str:
        return self.kind


class DiagonalOperator(ForwardOperator):
    """``A phi_i = a_i w_i`` for a singular-value sequence ``a``.

    ``values`` is either a callable of the 1-based index array or a finite
    array (then the domain dimension is bounded by its length).
    """

    kind = "diagonal"
    is_diagonal = True

    def __init__(self, values, gamma: float = 1.0, label: str | None = None):
        self.gamma = float(gamma)
        if callable(values):
            self._fn = values
            self._arr = None
            self._memo = np.zeros(0)
        else:
            self._fn = None
            self._arr = np.asarray(values, dtype=float).copy()
            self._arr.setflags(write=False)
        self._label = label or "diagonal"

    @property
    def label(self) -> str:
        return self._label

    def singular_values(self, dim: int) -> np.ndarray:
        if self._arr is not None:
            if dim > self._arr.size:
                raise ValueError(f"operator defined on {self._arr.size} coordinates, got {dim}")
            return self._arr[:dim]
        memo = self._memo
        if dim > memo.size:
            # grow geometrically; the prefix never changes so readers may share it
            size = max(dim, 2 * memo.size, 64)
            memo = np.asarray(self._fn(np.arange(1, size + 1, dtype=float)), dtype=float)
            memo.setflags(write=False)
            self._memo = memo
        return memo[:dim]

    def range_dim(self, dim: int) -> int:
        return int(dim)

    def matrix(self, dim: int) -> np.ndarray:
        return np.diag(self.singular_values(dim))

    def apply(self, f) -> np.ndarray:
        f = as_coeffs(f)
        return self.singular_values(f.size) * f


def diagonal_operator(gamma: float, scale: SequenceScale) -> DiagonalOperator:
    """Diagonal operator with ``a_i = b_i^{-gamma}``: an exact isometry
    ``||A f|| = ||f||_{-gamma}``."""
    return DiagonalOperator(lambda i: scale.generator(i) ** (-gamma), gamma=gamma,
                            label=f"diagonal(gamma={gamma:g})")


class PoissonSineOperator(DiagonalOperator):
    """Solution operator of ``(Af)'' = f`` on ``(0, 1)`` with Dirichlet data.

    In the sine basis ``sqrt(2) sin(k pi x)``: ``A sin_k = -sin_k / (k pi)^2``.
    """

    kind = "poisson"

    def __init__(self):
        super().__init__(lambda k: -1.0 / (k * math.pi) ** 2, gamma=2.0, label="poisson")


@lru_cache(maxsize=32)
def _range_pairs_cached(bound: int) -> tuple[np.ndarray, np.ndarray]:
    ks, ls = [], []
    for k in range(0, bound + 1):
        lmax = bound if k == 0 else bound // k
        ks.extend([k] * (lmax + 1))
        ls.extend(range(0, lmax + 1))
    k = np.asarray(ks, dtype=np.int64)
    l = np.asarray(ls, dtype=np.int64)
    key = np.maximum(k, 1) * np.maximum(l, 1)
    order = np.lexsort((l, k, key))
    k, l = k[order], l[order]
    k.setflags(write=False)
    l.setflags(write=False)
    return k, l


def volterra_range_pairs(bound: int) -> tuple[np.ndarray, np.ndarray]:
    """Range basis labels ``(k, l)`` in ``{0, 1, ...}^2`` with
    ``max(k,1) max(l,1) <= bound``.

    ``(k, l)`` with ``k, l >= 1`` is ``2 cos(k pi x) cos(l pi y)``; ``(k, 0)``
    is ``sqrt(2) cos(k pi x)``; ``(0, l)`` is ``sqrt(2) cos(l pi y)``; ``(0, 0)``
    is the constant.  Sorted by the product key, then ``k``, then ``l``, so
    the order is prefix-stable in ``bound``.
    """
    return _range_pairs_cached(int(bound))


class Volterra2DOperator(ForwardOperator):
    """Two-dimensional Volterra operator on the unit square.

    ``variant="A"`` is ``Af(x,y) = int_0^x int_0^y f``; ``variant="A0"``
    subtracts the projection onto functions ``g1(x) + g2(y)``.  Domain basis
    ``2 sin(k pi x) sin(l pi y)`` in :func:`volterra_pairs` order, range basis
    as in :func:`volterra_range_pairs`.
    """

    kind = "volterra2d"
    gamma = 1.0

    def __init__(self, variant: str = "A0"):
        if variant not in ("A", "A0"):
            raise ValueError("Volterra variant must be 'A' or 'A0'")
        self.variant = variant

    @property
    def label(self) -> str:
        return f"volterra2d_{self.variant}"

    def _bound(self, dim: int) -> int:
        if dim == 0:
            return 0
        k, l = volterra_pairs(dim)
        return int((k * l).max())

    def range_dim(self, dim: int) -> int:
        if dim == 0:
            return 0
        return int(volterra_range_pairs(self._bound(dim))[0].size)

    def _range_index(self, dim: int) -> dict:
        rk, rl = volterra_range_pairs(self._bound(dim))
        return {(int(a), int(b)): i for i, (a, b) in enumerate(zip(rk, rl))}

    def matrix(self, dim: int) -> np.ndarray:
        rows = self.range_dim(dim)
        mat = np.zeros((rows, dim))
        if dim == 0:
            return mat
        k, l = volterra_pairs(dim)
        index = self._range_index(dim)
        for col, (kk, ll) in enumerate(zip(k.tolist(), l.tolist())):
            c = 1.0 / (kk * ll * math.pi**2)
            mat[index[(kk, ll)], col] = c
            if self.variant == "A":
                mat[index[(kk, 0)], col] = -math.sqrt(2.0) * c
                mat[index[(0, ll)], col] = -math.sqrt(2.0) * c
                mat[index[(0, 0)], col] = 2.0 * c
        return mat

    def boundary_mask(self, dim: int) -> np.ndarray:
        rk, rl = volterra_range_pairs(self._bound_for_range(dim))
        mask = (rk == 0) | (rl == 0)
        return mask[:dim]

    @staticmethod
    def _bound_for_range(dim: int) -> int:
        bound = 1
        while volterra_range_pairs(bound)[0].size < dim:
            bound *= 2
        return bound


class MatrixOperator(ForwardOperator):
    """Operator given by an explicit ``J_out x J_in`` matrix."""

    kind = "matrix"

    def __init__(self, matrix, gamma: float = 1.0, label: str = "matrix"):
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        self._mat = mat.copy()
        self._mat.setflags(write=False)
        self.gamma = float(gamma)
        self._label = label

    @property
    def label(self) -> str:
        return self._label

    @property
    def shape(self) -> tuple[int, int]:
        return self._mat.shape

    def range_dim(self, dim: int) -> int:
        return self._mat.shape[0]

    def matrix(self, dim: int) -> np.ndarray:
        if dim > self._mat.shape[1]:
            raise ValueError(f"operator has {self._mat.shape[1]} input coordinates, got {dim}")
        return self._mat[:, :dim]


def load_matrix_csv(path) -> np.ndarray:
    """Read a row-major matrix CSV whose first line is ``rows,cols``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        try:
            rows, cols = int(header[0]), int(header[1])
        except (ValueError, IndexError):
            raise ValueError(f"{path}: header must be 'rows,cols'") from None
        values = [float(x) for row in reader for x in row if x.strip()]
    if len(values) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {len(values)}")
    return np.asarray(values).reshape(rows, cols)


def operator_from_spec(spec: dict, scale: SequenceScale, base_dir=None) -> ForwardOperator:
    """Build an operator from its JSON config form."""
    kind = spec.get("kind")
    if kind == "diagonal":
        return diagonal_operator(float(spec.get("gamma", 1.0)), scale)
    if kind == "poisson":
        return PoissonSineOperator()
    if kind == "volterra2d":
        return Volterra2DOperator(spec.get("variant", "A0"))
    if kind == "matrix":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return MatrixOperator(load_matrix_csv(path), gamma=float(spec.get("gamma", 1.0)),
                              label=f"matrix({path.name})")
    raise ValueError(f"unknown operator kind {kind!r}")


def gram_matrix(op: ForwardOperator, j: int) -> np.ndarray:
    """Gram matrix ``<A phi_k, A phi_l>`` for ``k, l < j``.

    Raises :class:`SingularGramError` if the images are linearly dependent.
    """
    if j < 2:
        raise ValueError("Gram matrix needs j >= 2")
    cols = op.matrix(j - 1)
    gram = cols.T @ cols
    gram = 0.5 * (gram + gram.T)
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularGramError(f"{op.label}: Gram matrix at j={j} is not positive definite") from None
    return gram


def smoothing_ratio(op: ForwardOperator, scale: SequenceScale, probes) -> tuple[float, float]:
    """Extremes of ``||A f|| / ||f||_{-gamma}`` over the probe vectors."""
    ratios = []
    for f in probes:
        f = as_coeffs(f)
        denom = dual_norm(f, op.gamma, scale)
        if denom == 0.0:
            raise ValueError("zero probe vector")
        ratios.append(float(np.linalg.norm(op.apply(f))) / denom)
    if not ratios:
        raise ValueError("no probes given")
    return min(ratios), max(ratios)
