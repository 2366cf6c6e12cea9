import math

import numpy as np
import pytest
from scipy import integrate, stats

from scale_bayes.operators import diagonal_operator
from scale_bayes.priors import (
    GaussianPrior,
    GridQ,
    InvGammaSqQ,
    MixturePrior,
    SeriesPrior,
    check_kappa_bounds,
    check_mixture_condition,
    log_prior_density,
    poisson_rate_constants,
    prior_from_spec,
    prior_mass_curve,
    q_from_spec,
    sample,
)
from scale_bayes.scales import power_scale

LINEAR = power_scale(1.0)


# -- sampling ---------------------------------------------------------------


def test_series_zero_mass_and_support():
    prior = SeriesPrior(mu=2.0, M_max=30)
    rng = np.random.default_rng(0)
    N = 100_000
    zeros = 0
    for _ in range(N):
        d = sample(prior, rng)
        assert not np.any(d.coeffs[d.M:])
        zeros += d.M == 0
    p = math.exp(-2.0)
    assert abs(zeros / N - p) <= 3 * math.sqrt(p * (1 - p) / N)


def test_series_cap_respected():
    prior = SeriesPrior(mu=20.0, M_max=5)
    rng = np.random.default_rng(1)
    assert all(sample(prior, rng).M <= 5 for _ in range(500))


def test_series_laplace_draws():
    prior = SeriesPrior(mu=50.0, p="laplace", M_max=200)
    rng = np.random.default_rng(2)
    vals = np.concatenate([(lambda d: d.coeffs[: d.M])(sample(prior, rng)) for _ in range(400)])
    assert stats.kstest(vals, stats.laplace.cdf).pvalue > 0.01


def test_gaussian_coordinate_sd():
    prior = GaussianPrior(1.5, truncation=16)
    draws = prior.sample_many(np.random.default_rng(3), 100_000)
    assert draws[:, 3].std() == pytest.approx(0.125, rel=0.05)


def test_gaussian_coordinates_independent():
    N = 100_000
    draws = GaussianPrior(1.5, truncation=4).sample_many(np.random.default_rng(4), N)
    assert abs(np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]) <= 4 / math.sqrt(N)


def test_gaussian_requires_trace_class():
    with pytest.raises(ValueError):
        GaussianPrior(0.5)
    with pytest.raises(ValueError):
        GaussianPrior(0.9, scale=power_scale(2.0))
    GaussianPrior(1.01, scale=power_scale(2.0))


def test_gaussian_point_mass():
    prior = GaussianPrior(1.5, tau=0.0, truncation=5, mean=[1.0, 2.0])
    assert np.array_equal(sample(prior, np.random.default_rng(0)).coeffs, [1.0, 2.0, 0, 0, 0])


def test_mixture_records_tau():
    prior = MixturePrior(1.5, truncation=8)
    rng = np.random.default_rng(5)
    z = []
    for _ in range(2000):
        d = sample(prior, rng)
        assert d.tau > 0
        z.append(d.coeffs / (d.tau * np.arange(1, 9) ** -1.5))
    # given the recorded tau the coefficients are standard normal after rescaling
    assert stats.kstest(np.concatenate(z), "norm").pvalue > 0.01


def test_point_mass_mixture_matches_gaussian():
    tau_n = 1e4 ** (-1 / 7)
    mix = MixturePrior(1.5, q=GridQ((tau_n,)), truncation=4)
    gauss = GaussianPrior(1.5, tau=tau_n, truncation=4)
    a = mix.sample_many(np.random.default_rng(6), 20_000)[:, 0]
    b = gauss.sample_many(np.random.default_rng(7), 20_000)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_inverse_gamma_square_law():
    q = InvGammaSqQ(2.0, 3.0)
    taus = q.sample(np.random.default_rng(8), 50_000)
    assert stats.kstest(taus, q.cdf).pvalue > 0.01
    total, _ = integrate.quad(q.pdf, 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert q.cdf(q.median()) == pytest.approx(0.5, abs=1e-12)


def test_grid_q():
    q = GridQ((0.5, 1.0, 2.0), (1, 1, 2))
    assert np.allclose(q.masses(), [0.25, 0.25, 0.5])
    assert q.median() == 1.0
    with pytest.raises(ValueError):
        GridQ((1.0, 2.0), (1.0,))


# -- densities --------------------------------------------------------------


def test_log_prior_density_examples():
    mu = 3.0
    prior = SeriesPrior(mu=mu)
    assert log_prior_density(prior, np.zeros(0), 0) == pytest.approx(-mu, rel=1e-14)
    expected = -mu + math.log(mu) - math.log(1.0) - 0.5 * math.log(2 * math.pi)
    assert log_prior_density(prior, [0.0], 1) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        log_prior_density(prior, [0.0, 1.0], 1)


@pytest.mark.parametrize("p", ["gaussian", "laplace"])
def test_log_prior_density_normalizes(p):
    prior = SeriesPrior(mu=4.0, p=p, kappa=lambda i: 0.7 * np.ones_like(i))
    mass, _ = integrate.quad(lambda x: math.exp(log_prior_density(prior, [x], 1)), -np.inf, np.inf,
                             epsabs=1e-12)
    assert mass == pytest.approx(math.exp(prior.log_pM(1)), abs=1e-6)


def test_poisson_rate_constants():
    b1, b2 = poisson_rate_constants(5.0)
    assert b1 >= b2 > 0
    for k in range(1, 51):
        pk = stats.poisson.pmf(k, 5.0)
        assert math.exp(-b1 * k) <= pk * (1 + 1e-12)
        assert pk <= math.exp(-b2 * k) * (1 + 1e-12)


def test_kappa_bounds():
    assert check_kappa_bounds(SeriesPrior(), beta0=1.0, w=1.0, alpha_exp=0.0)["passed"]
    fast = SeriesPrior(kappa=lambda i: np.asarray(i, dtype=float) ** -3.0)
    assert not check_kappa_bounds(fast, beta0=1.0, w=1.0, alpha_exp=0.0)["passed"]


def test_prior_from_spec():
    p = prior_from_spec({"kind": "series", "mu": 5, "p": "gaussian", "kappa": "unit"}, LINEAR)
    assert isinstance(p, SeriesPrior) and p.mu == 5
    p = prior_from_spec({"kind": "series", "kappa": {"kind": "power", "exponent": -1}}, LINEAR)
    assert np.allclose(p.kappas(3), [1, 0.5, 1 / 3])
    assert prior_from_spec({"kind": "gaussian", "alpha": 1.5}, LINEAR).alpha == 1.5
    m = prior_from_spec({"kind": "mixture", "alpha": 1.5, "q": {"kind": "inv_gamma_sq", "shape": 1, "rate": 1}},
                        LINEAR)
    assert m.q == InvGammaSqQ(1.0, 1.0)
    assert q_from_spec({"kind": "point", "tau": 0.3}).taus == (0.3,)
    with pytest.raises(ValueError):
        prior_from_spec({"kind": "dirichlet"}, LINEAR)


# -- prior mass -------------------------------------------------------------


def test_prior_mass_everything_inside_huge_ball():
    op = diagonal_operator(1.0, LINEAR)
    pts = prior_mass_curve(GaussianPrior(1.5, truncation=64), op, None, [1e9], 2000, 0)
    assert pts[0].neg_log_prob == 0.0 and pts[0].reliable


def test_prior_mass_point_mass_at_truth():
    op = diagonal_operator(1.0, LINEAR)
    f0 = np.arange(1, 33, dtype=float) ** -2.0
    prior = GaussianPrior(1.5, tau=0.0, truncation=32, mean=f0)
    for p in prior_mass_curve(prior, op, f0, [1e-6, 0.1, 1.0], 500, 0):
        assert p.neg_log_prob == 0.0


def test_prior_mass_unreliable_when_no_hits():
    op = diagonal_operator(1.0, LINEAR)
    pts = prior_mass_curve(GaussianPrior(1.5, truncation=64), op, None, [1e-4], 1000, 0)
    assert not pts[0].reliable and math.isinf(pts[0].neg_log_prob)


def test_prior_mass_against_chi_square_oracle():
    J, N = 256, 200_000
    op = diagonal_operator(1.0, LINEAR)
    prior = GaussianPrior(1.5, truncation=J)
    eps = [0.15, 0.3, 0.6]
    pts = prior_mass_curve(prior, op, None, eps, N, 1)
    # independent estimator: ||A f||^2 = sum_i a_i^2 sd_i^2 chi2_i
    w = (np.arange(1, J + 1, dtype=float) ** -2.5) ** 2
    rng = np.random.default_rng(99)
    sq = np.concatenate([rng.chisquare(1, (20_000, J)) @ w for _ in range(N // 20_000)])
    for p, e in zip(pts, eps):
        q = np.mean(sq < e**2)
        se_oracle = math.sqrt((1 - q) / (N * q))
        assert abs(p.neg_log_prob + math.log(q)) <= 3 * math.hypot(p.stderr, se_oracle)


def test_prior_mass_decentered_and_dense_paths_agree():
    from scale_bayes.operators import MatrixOperator

    J = 40
    op = diagonal_operator(1.0, LINEAR)
    dense = MatrixOperator(np.diag(np.arange(1, 81, dtype=float) ** -1.0))
    prior = GaussianPrior(1.5, truncation=J)
    f0 = 0.3 * np.arange(1, 81, dtype=float) ** -1.5  # longer than the prior truncation
    a = prior_mass_curve(prior, op, f0, [0.2, 0.5], 20_000, 3)
    b = prior_mass_curve(prior, dense, f0, [0.2, 0.5], 20_000, 3)
    assert [p.hits for p in a] == [p.hits for p in b]


def test_series_prior_mass():
    op = diagonal_operator(1.0, LINEAR)
    pts = prior_mass_curve(SeriesPrior(mu=3.0, M_max=30), op, None, [0.5, 2.0], 5000, 0)
    assert pts[0].neg_log_prob > pts[1].neg_log_prob > 0


# -- hyperprior tail condition ----------------------------------------------


def _gamma11_interval(t):
    # tau in (t, 2t)  <=>  1/tau^2 in (1/(4t^2), 1/t^2)
    return math.exp(-1 / (4 * t * t)) - math.exp(-1 / (t * t))


def test_mixture_condition_small_t():
    prior = MixturePrior(1.5)
    rep = check_mixture_condition(prior)
    grid = np.linspace(0.05, 0.5, 10)
    oracle = max(-math.log(_gamma11_interval(t)) * t * t for t in grid)
    assert rep.small_t_ratio == pytest.approx(oracle, rel=1e-6)
    assert rep.small_t_ratio <= 50
    assert rep.passed


def test_mixture_condition_degenerate_fails():
    rep = check_mixture_condition(MixturePrior(1.5, q=GridQ((1.0,))))
    assert not rep.passed


def test_mixture_condition_large_t_with_alpha_equal_d():
    prior = MixturePrior(1.0)
    rep = check_mixture_condition(prior)
    assert rep.exponent_large == pytest.approx(2.0)
    grid = np.geomspace(2.0, 1e3, 12)
    oracle = max(-math.log(_gamma11_interval(t)) * t**-2.0 for t in grid)
    assert rep.large_t_ratio == pytest.approx(oracle, rel=1e-6)
    assert rep.large_t_ratio < 1.0
