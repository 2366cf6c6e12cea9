import math

import numpy as np
import pytest
from scipy import integrate

from scale_bayes.operators import (
    DiagonalOperator,
    MatrixOperator,
    PoissonSineOperator,
    SingularGramError,
    Volterra2DOperator,
    diagonal_operator,
    gram_matrix,
    load_matrix_csv,
    operator_from_spec,
    smoothing_ratio,
    volterra_range_pairs,
)
from scale_bayes.scales import power_scale, volterra2d_scale, volterra_pairs

LINEAR = power_scale(1.0)
VOLT = volterra2d_scale()

# -- quadrature oracles for the continuous operators ------------------------

GRID = np.linspace(0.0, 1.0, 1201)


def _cumtrapz2(F):
    inner = integrate.cumulative_trapezoid(F, GRID, axis=1, initial=0.0)
    return integrate.cumulative_trapezoid(inner, GRID, axis=0, initial=0.0)


def _int2(F):
    return integrate.simpson(integrate.simpson(F, x=GRID, axis=1), x=GRID)


def volterra_image_on_grid(k, l, variant):
    X, Y = np.meshgrid(GRID, GRID, indexing="ij")
    f = 2 * np.sin(k * math.pi * X) * np.sin(l * math.pi * Y)
    Af = _cumtrapz2(f)
    if variant == "A0":
        mx = integrate.simpson(Af, x=GRID, axis=1)[:, None]
        my = integrate.simpson(Af, x=GRID, axis=0)[None, :]
        Af = Af - mx - my + _int2(Af)
    return X, Y, Af


def range_basis_on_grid(X, Y, k, l):
    if k and l:
        return 2 * np.cos(k * math.pi * X) * np.cos(l * math.pi * Y)
    if k:
        return math.sqrt(2) * np.cos(k * math.pi * X)
    if l:
        return math.sqrt(2) * np.cos(l * math.pi * Y)
    return np.ones_like(X)


def poisson_coefficient_by_quadrature(k):
    f = lambda t: math.sqrt(2) * math.sin(k * math.pi * t)  # noqa: E731
    c1 = integrate.quad(lambda t: (1 - t) * f(t), 0, 1, epsabs=1e-14)[0]

    def u(x):
        # u'' = f with u(0) = u(1) = 0
        return integrate.quad(lambda t: (x - t) * f(t), 0, x, epsabs=1e-14)[0] - x * c1

    return integrate.quad(lambda x: u(x) * f(x), 0, 1, epsabs=1e-13)[0]


# -- apply ------------------------------------------------------------------


def test_volterra_A0_on_first_element():
    out = Volterra2DOperator("A0").apply(np.array([1.0]))
    rk, rl = volterra_range_pairs(1)
    idx = list(zip(rk.tolist(), rl.tolist())).index((1, 1))
    expected = np.zeros(out.size)
    expected[idx] = math.pi**-2
    assert out[idx] == pytest.approx(0.101321, abs=1e-6)
    assert np.allclose(out, expected, atol=0, rtol=1e-15)


def test_diagonal_apply():
    op = DiagonalOperator(lambda i: 1.0 / i)
    e5 = np.zeros(5)
    e5[4] = 1.0
    assert np.allclose(op.apply(e5), 0.2 * e5, rtol=1e-15, atol=0)


def test_poisson_against_quadrature():
    op = PoissonSineOperator()
    out = op.apply(np.array([0.0, 1.0]))
    oracle = poisson_coefficient_by_quadrature(2)
    assert out[1] == pytest.approx(-1 / (4 * math.pi**2), rel=1e-14)
    assert out[1] == pytest.approx(oracle, abs=1e-9)
    assert out[0] == 0.0


@pytest.mark.parametrize("variant", ["A", "A0"])
@pytest.mark.parametrize("pos", [0, 1, 6])
def test_volterra_against_quadrature(variant, pos):
    op = Volterra2DOperator(variant)
    k, l = volterra_pairs(pos + 1)
    f = np.zeros(pos + 1)
    f[pos] = 1.0
    out = op.apply(f)
    X, Y, Af = volterra_image_on_grid(int(k[pos]), int(l[pos]), variant)
    rk, rl = volterra_range_pairs(int((k * l).max()))
    oracle = np.array([_int2(Af * range_basis_on_grid(X, Y, a, b)) for a, b in zip(rk, rl)])
    assert np.allclose(out, oracle, atol=2e-6)
    # Parseval: the image is fully captured by the enumerated range coordinates
    assert np.sum(out**2) == pytest.approx(_int2(Af**2), abs=2e-6)


def test_linearity():
    rng = np.random.default_rng(3)
    ops = [diagonal_operator(1.0, LINEAR), PoissonSineOperator(), Volterra2DOperator("A"),
           Volterra2DOperator("A0"), MatrixOperator(rng.standard_normal((9, 6)))]
    for op in ops:
        f, g = rng.standard_normal(6), rng.standard_normal(6)
        a, b = rng.standard_normal(2)
        assert np.allclose(op.apply(a * f + b * g), a * op.apply(f) + b * op.apply(g), atol=1e-12, rtol=0)


def test_volterra_difference_lives_in_boundary_block():
    rng = np.random.default_rng(5)
    A, A0 = Volterra2DOperator("A"), Volterra2DOperator("A0")
    for dim in (1, 5, 20, 47):
        f = rng.standard_normal(dim)
        diff = A.apply(f) - A0.apply(f)
        mask = A.boundary_mask(diff.size)
        assert np.all(diff[~mask] == 0.0)
        assert np.any(diff[mask] != 0.0)


def test_range_pairs_prefix_stable():
    k1, l1 = volterra_range_pairs(4)
    k2, l2 = volterra_range_pairs(40)
    assert np.array_equal(k2[: k1.size], k1) and np.array_equal(l2[: l1.size], l1)
    assert (k1[0], l1[0]) == (0, 0)


# -- Gram -------------------------------------------------------------------


def test_gram_diagonal():
    op = diagonal_operator(1.5, LINEAR)
    a = np.arange(1, 8, dtype=float) ** -1.5
    assert np.allclose(gram_matrix(op, 8), np.diag(a**2), rtol=1e-14, atol=0)


def test_gram_volterra_first_entry_by_quadrature():
    G = gram_matrix(Volterra2DOperator("A0"), 3)
    X, Y, Af = volterra_image_on_grid(1, 1, "A0")
    assert G[0, 0] == pytest.approx(math.pi**-4, rel=1e-14)
    assert G[0, 0] == pytest.approx(_int2(Af**2), abs=1e-7)
    assert G[0, 0] == pytest.approx(0.0102660, abs=1e-7)


def test_gram_dense_matches_double_loop():
    rng = np.random.default_rng(11)
    M = rng.standard_normal((12, 7))
    G = gram_matrix(MatrixOperator(M), 6)
    for k in range(5):
        for l in range(5):
            acc = 0.0
            for r in range(12):
                acc += M[r, k] * M[r, l]
            assert G[k, l] == pytest.approx(acc, rel=1e-12, abs=1e-12)
    assert np.allclose(G, G.T)
    assert np.all(np.linalg.eigvalsh(G) > 0)


def test_gram_equals_column_assembly():
    rng = np.random.default_rng(2)
    for op in (Volterra2DOperator("A"), PoissonSineOperator(), MatrixOperator(rng.standard_normal((10, 8)))):
        cols = []
        for k in range(6):
            e = np.zeros(k + 1)
            e[k] = 1.0
            cols.append(op.apply(e))
        size = max(c.size for c in cols)
        C = np.stack([np.pad(c, (0, size - c.size)) for c in cols], axis=1)
        assert np.allclose(gram_matrix(op, 7), C.T @ C, rtol=1e-13, atol=1e-15)


def test_gram_singular():
    M = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    with pytest.raises(SingularGramError):
        gram_matrix(MatrixOperator(M), 3)


# -- smoothing ratio --------------------------------------------------------


def test_smoothing_ratio_diagonal_isometry():
    rng = np.random.default_rng(0)
    probes = [rng.standard_normal(30) for _ in range(20)]
    lo, hi = smoothing_ratio(diagonal_operator(1.3, LINEAR), LINEAR, probes)
    assert lo == pytest.approx(1.0, rel=1e-12) and hi == pytest.approx(1.0, rel=1e-12)


def test_smoothing_ratio_poisson():
    rng = np.random.default_rng(1)
    probes = [rng.standard_normal(25) for _ in range(20)]
    lo, hi = smoothing_ratio(PoissonSineOperator(), LINEAR, probes)
    assert lo == pytest.approx(math.pi**-2, abs=1e-12)
    assert hi == pytest.approx(math.pi**-2, abs=1e-12)


def test_smoothing_ratio_volterra_A0():
    rng = np.random.default_rng(4)
    probes = [rng.standard_normal(int(rng.integers(1, 60))) for _ in range(100)]
    op = Volterra2DOperator("A0")
    lo, hi = smoothing_ratio(op, VOLT, probes)
    # independent evaluation of both norms
    ratios = []
    for f in probes:
        k, l = volterra_pairs(f.size)
        num = math.sqrt(sum(v**2 / (kk**2 * ll**2 * math.pi**4) for v, kk, ll in zip(f, k, l)))
        den = math.sqrt(sum(v**2 * (kk * ll * math.pi**2) ** -2 for v, kk, ll in zip(f, k, l)))
        ratios.append(num / den)
    assert 0.9 <= lo and hi <= 1.1
    assert lo == pytest.approx(min(ratios), rel=1e-12) and hi == pytest.approx(max(ratios), rel=1e-12)


def test_volterra_A_not_smoothing_but_bounded_below():
    rng = np.random.default_rng(6)
    probes = [rng.standard_normal(40) for _ in range(50)]
    lo, _ = smoothing_ratio(Volterra2DOperator("A"), VOLT, probes)
    assert lo >= 1.0 - 1e-12


def test_smoothing_ratio_rejects_zero_probe():
    with pytest.raises(ValueError):
        smoothing_ratio(diagonal_operator(1.0, LINEAR), LINEAR, [np.zeros(3)])


# -- config / IO ------------------------------------------------------------


def test_operator_from_spec(tmp_path):
    path = tmp_path / "op.csv"
    path.write_text("2,3\n1,0,0\n0,2,0\n")
    M = load_matrix_csv(path)
    assert M.shape == (2, 3) and M[1, 1] == 2.0
    op = operator_from_spec({"kind": "matrix", "path": "op.csv", "gamma": 0.5}, LINEAR, base_dir=tmp_path)
    assert op.gamma == 0.5 and np.array_equal(op.apply([1.0, 1.0, 1.0]), [1.0, 2.0])
    assert operator_from_spec({"kind": "diagonal", "gamma": 2.0}, LINEAR).gamma == 2.0
    assert operator_from_spec({"kind": "poisson"}, LINEAR).gamma == 2.0
    assert operator_from_spec({"kind": "volterra2d", "variant": "A"}, VOLT).variant == "A"
    with pytest.raises(ValueError):
        operator_from_spec({"kind": "radon"}, LINEAR)


def test_bad_matrix_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("2,2\n1,2,3\n")
    with pytest.raises(ValueError):
        load_matrix_csv(path)
