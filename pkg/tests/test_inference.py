import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats
from scipy.special import ndtri

from mlt import distributions as D
from mlt import inference as inf
from mlt.data import Dataset
from mlt.models import ModelSpec, fit_spec


@pytest.fixture(scope="module")
def normal_fit():
    y = np.random.default_rng(11).normal(2.0, 1.5, 400)
    return fit_spec(ModelSpec("normal-linear"), Dataset.from_exact(y)), y


@pytest.fixture(scope="module")
def bern_fit():
    rng = np.random.default_rng(12)
    x = rng.normal(size=300)
    y = rng.gamma(3.0, size=300) * np.exp(0.3 * x)
    spec = ModelSpec("proportional-odds", order=6, shift=["x"], support=(0.0, 25.0))
    return fit_spec(spec, Dataset.from_exact(y, {"x": x}))


@pytest.fixture(scope="module")
def discrete_fit():
    rng = np.random.default_rng(13)
    x = rng.normal(size=300)
    k = np.digitize(x + rng.logistic(size=300), [-1.0, 0.5, 2.0]) + 1
    return fit_spec(ModelSpec("discrete-po", shift=["x"]), Dataset.from_levels(k, list("abcd"), {"x": x}))


# -- Wald -------------------------------------------------------------------------------------


def test_z_value():
    assert inf.z_value(0.95) == pytest.approx(1.959964, abs=1e-6)
    with pytest.raises(ValueError):
        inf.z_value(1.0)


def test_wald_se_matches_classical_gaussian(normal_fit):
    res, y = normal_fit
    a, b = res.theta
    # delta method for mu = -a / b against the textbook sigma / sqrt(n)
    g = np.array([-1 / b, a / b**2])
    se_mu = np.sqrt(g @ inf.covariance(res) @ g)
    assert se_mu == pytest.approx(np.std(y) / np.sqrt(len(y)), rel=0.02)
    tab = inf.wald(res, [[0.0, 1.0]])
    assert tab.se[0] == pytest.approx(b / np.sqrt(2 * len(y)), rel=0.02)
    assert tab.upper[0] - tab.estimate[0] == pytest.approx(1.959964 * tab.se[0], rel=1e-6)
    with pytest.raises(ValueError):
        inf.wald(res, np.ones((1, 3)))


# -- bands ----------------------------------------------------------------------------------------


def test_single_point_band_is_pointwise():
    assert inf.max_t_quantile(np.eye(1)) == inf.z_value(0.95)
    assert inf.max_t_quantile(np.ones((5, 5))) == inf.z_value(0.95)


@pytest.mark.parametrize("k", [2, 3])
def test_independent_grid_matches_closed_form(k):
    want = ndtri(0.5 + 0.95 ** (1 / k) / 2)  # P(max|T| <= q) = (2 Phi(q) - 1)^k
    got = inf.max_t_quantile(np.eye(k), n_draws=2**16)
    assert got == pytest.approx(want, rel=5e-3)


@settings(max_examples=15)
@given(st.integers(0, 2**31))
def test_multiplier_at_least_pointwise(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 3))
    S = A @ A.T + 1e-3 * np.eye(4)
    R = S / np.sqrt(np.outer(np.diag(S), np.diag(S)))
    assert inf.max_t_quantile(R, n_draws=2**12, seed=seed) >= inf.z_value(0.95)


def test_band_seed_reproducibility(bern_fit):
    grid = np.linspace(0.5, 15, 20)
    b1 = inf.confidence_band(bern_fit, grid, x={"x": 0.0}, seed=1)
    b1b = inf.confidence_band(bern_fit, grid, x={"x": 0.0}, seed=1)
    b2 = inf.confidence_band(bern_fit, grid, x={"x": 0.0}, seed=2)
    assert b1.multiplier == b1b.multiplier
    assert b1.multiplier == pytest.approx(b2.multiplier, rel=5e-3)
    assert np.all(b1.lower < b1.estimate) and np.all(b1.estimate < b1.upper)
    assert b1.multiplier >= b1.pointwise_z
    assert np.allclose(b1.estimate, inf.predict(bern_fit, grid, {"x": 0.0}, "trafo")[0])


# -- prediction ---------------------------------------------------------------------------------------


def test_distribution_at_lower_support_is_first_coefficient(bern_fit):
    F = inf.predict(bern_fit, [0.0], {"x": 0.0})[0, 0]
    assert F == pytest.approx(D.LOGISTIC.cdf(bern_fit.theta[0]), abs=1e-14)


def test_quantile_round_trip(bern_fit):
    p = np.linspace(0.05, 0.95, 19)
    x = {"x": np.array([-1.0, 0.0, 1.5])}
    q = inf.predict(bern_fit, x=x, what="quantile", p=p)
    assert q.shape == (3, 19)
    assert np.all(np.diff(q, axis=1) > 0)
    for i, xi in enumerate(x["x"]):
        F = inf.predict(bern_fit, q[i], {"x": xi})[0]
        assert np.max(np.abs(F - p)) <= 1e-8


def test_quantile_needs_p(bern_fit):
    with pytest.raises(ValueError):
        inf.predict(bern_fit, what="quantile")
    with pytest.raises(ValueError):
        inf.predict(bern_fit, [1.0], what="nonsense")


def test_prediction_types_are_consistent(bern_fit):
    y = np.linspace(0.2, 20, 60)
    P = {w: inf.predict(bern_fit, y, {"x": 0.4}, w)[0] for w in inf.WHATS if w != "quantile"}
    assert np.allclose(P["survivor"], 1 - P["distribution"])
    assert np.allclose(P["cumhazard"], -np.log(P["survivor"]))
    assert np.allclose(P["odds"], P["distribution"] / P["survivor"])
    assert np.allclose(P["hazard"], P["density"] / P["survivor"])
    assert np.all(P["density"] > 0) and np.all(P["hazard"] > 0)
    # density is the derivative of the distribution function (central differences)
    eps = 1e-6
    fd = (inf.predict(bern_fit, y + eps, {"x": 0.4})[0] - inf.predict(bern_fit, y - eps, {"x": 0.4})[0]) / (2 * eps)
    assert np.allclose(P["density"], fd, rtol=1e-5, atol=1e-9)


def test_density_zero_outside_support_and_integrates(bern_fit):
    f = inf.predict(bern_fit, [-1.0, 30.0], {"x": 0.0}, "density")[0]
    assert np.all(f == 0)
    F0, F1 = inf.predict(bern_fit, [0.0, 25.0], {"x": 0.0})[0]
    mass, _ = integrate.quad(lambda t: inf.predict(bern_fit, [t], {"x": 0.0}, "density")[0, 0], 0, 25, limit=200)
    assert mass == pytest.approx(F1 - F0, abs=1e-7)


def test_discrete_predictions(discrete_fit):
    pm = inf.predict(discrete_fit, [1, 2, 3, 4], {"x": 0.2}, "density")[0]
    F = inf.predict(discrete_fit, [1, 2, 3, 4], {"x": 0.2})[0]
    assert pm.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.cumsum(pm), F)
    hz = inf.predict(discrete_fit, [1, 2, 3, 4], {"x": 0.2}, "hazard")[0]
    assert np.allclose(hz, pm / np.concatenate([[1.0], 1 - F[:-1]]))
    assert hz[-1] == pytest.approx(1.0)


# -- sampling --------------------------------------------------------------------------------------


def test_sample_ks_against_fitted_cdf(normal_fit):
    res, _ = normal_fit
    ys = inf.sample(res.model, res.theta, n=2000, seed=3)
    a, b = res.theta
    assert stats.kstest(ys, stats.norm(-a / b, 1 / b).cdf).pvalue > 0.01
    assert np.mean(ys) == pytest.approx(-a / b, abs=4 / b / np.sqrt(2000))


def test_sample_ks_bernstein(bern_fit):
    ys = inf.sample(bern_fit.model, bern_fit.theta, {"x": 0.5}, n=1500, seed=4)
    cdf = lambda t: inf.predict(bern_fit, np.asarray(t), {"x": 0.5})[0]
    assert stats.kstest(ys, cdf).pvalue > 0.01


def test_sample_chisq_discrete(discrete_fit):
    ys = inf.sample(discrete_fit.model, discrete_fit.theta, {"x": 0.0}, n=4000, seed=5)
    pm = inf.predict(discrete_fit, [1, 2, 3, 4], {"x": 0.0}, "density")[0]
    obs = np.bincount(ys.astype(int), minlength=5)[1:]
    assert stats.chisquare(obs, 4000 * pm).pvalue > 0.01


def test_sample_deterministic_and_per_row(bern_fit):
    m, th = bern_fit.model, bern_fit.theta
    x0 = {"x": 0.0}
    assert np.array_equal(inf.sample(m, th, x0, n=50, seed=9), inf.sample(m, th, x0, n=50, seed=9))
    assert not np.array_equal(inf.sample(m, th, x0, n=50, seed=9), inf.sample(m, th, x0, n=50, seed=10))
    with pytest.raises(KeyError):
        inf.sample(m, th, n=5)
    rows = inf.sample(m, th, {"x": np.linspace(-2, 2, 7)}, seed=1)
    assert rows.shape == (7,)
    with pytest.raises(ValueError):
        inf.sample(m, th, x0)


# -- MAD --------------------------------------------------------------------------------------------


def test_mad_properties(bern_fit):
    y = np.linspace(0.5, 15, 30)
    xg = {"x": np.array([-1.0, 0.0, 1.0])}
    fcdf = lambda yy, r: inf.predict(bern_fit, yy, r)[0]
    assert inf.mad_metric(fcdf, bern_fit, y, xg).max == pytest.approx(0.0, abs=1e-15)
    g = lambda yy, r: stats.gamma(3.0).cdf(yy)
    m1 = inf.mad_metric(g, bern_fit, y, xg)
    m2 = inf.mad_metric(fcdf, g, y, xg)
    assert np.allclose(m1.per_x, m2.per_x)
    assert 0 <= m1.min <= m1.median <= m1.max <= 1
    with pytest.raises(ValueError):
        inf.mad_metric(g, bern_fit, [], xg)
