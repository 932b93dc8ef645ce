import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from mlt import distributions as D

mp.mp.dps = 40

KINDS = ("normal", "logistic", "mev", "exp")


def mp_cdf(kind, z):
    z = mp.mpf(z)
    if kind == "normal":
        return mp.ncdf(z)
    if kind == "logistic":
        return 1 / (1 + mp.exp(-z))
    if kind == "mev":
        return -mp.expm1(-mp.exp(z))
    return -mp.expm1(-z)


def mp_sf(kind, z):
    z = mp.mpf(z)
    if kind == "normal":
        return mp.ncdf(-z)
    if kind == "logistic":
        return 1 / (1 + mp.exp(z))
    if kind == "mev":
        return mp.exp(-mp.exp(z))
    return mp.exp(-z)


def mp_logpdf(kind, z):
    z = mp.mpf(z)
    if kind == "normal":
        return -z**2 / 2 - mp.log(2 * mp.pi) / 2
    if kind == "logistic":
        return -z - 2 * mp.log1p(mp.exp(-z))
    if kind == "mev":
        return z - mp.exp(z)
    return -z


def test_closed_form_values():
    assert D.NORMAL.cdf(0.0) == 0.5
    assert D.LOGISTIC.cdf(0.0) == 0.5
    assert D.MEV.cdf(0.0) == pytest.approx(1 - math.exp(-1), abs=1e-16)
    assert D.NORMAL.quantile(0.5) == 0.0
    assert D.MEV.quantile(0.5) == pytest.approx(math.log(math.log(2)), abs=1e-15)
    assert D.NORMAL.log_density_ratio(0.0) == 0.0
    assert D.LOGISTIC.log_density_ratio(0.0) == 0.0
    assert D.NORMAL.curvature_ratio(0.0) == -1.0


def test_infinite_arguments():
    for kind in ("normal", "logistic", "mev"):
        d = D.get(kind)
        assert d.cdf(-np.inf) == 0.0 and d.cdf(np.inf) == 1.0
        assert d.logcdf(-np.inf) == -np.inf and d.logsf(np.inf) == -np.inf
    assert D.EXP.cdf(np.inf) == 1.0


def test_normal_tail_policy():
    assert D.NORMAL.cdf(-38.5) == 0.0
    assert D.NORMAL.cdf(38.5) == 1.0
    # log-space forms stay finite where the raw probability underflows
    assert np.isfinite(D.NORMAL.logcdf(-40.0))
    assert D.NORMAL.logcdf(-40.0) == pytest.approx(float(mp.log(mp.ncdf(-40))), rel=1e-12)


def test_exp_domain():
    with pytest.raises(D.DomainError):
        D.EXP.cdf(-0.1)
    assert D.EXP.cdf(0.0) == 0.0


@pytest.mark.parametrize("kind", ("normal", "logistic", "mev"))
def test_cdf_against_high_precision(kind):
    z = np.linspace(-12, 3.5, 301)
    got = D.get(kind).cdf(z)
    want = np.array([float(mp_cdf(kind, v)) for v in z])
    assert np.allclose(got, want, rtol=1e-13, atol=1e-300)


def test_logistic_cdf_to_1e14():
    z = np.linspace(-30, 30, 601)
    want = np.array([float(1 / (1 + mp.exp(-mp.mpf(v)))) for v in z])
    assert np.max(np.abs(D.LOGISTIC.cdf(z) - want)) <= 1e-14


@pytest.mark.parametrize("kind", KINDS)
def test_logpdf_against_high_precision(kind):
    z = np.linspace(0.01, 3, 50) if kind == "exp" else np.linspace(-8, 2.5, 50)
    got = D.get(kind).logpdf(z)
    want = np.array([float(mp_logpdf(kind, v)) for v in z])
    assert np.allclose(got, want, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_density_integrates_to_one(kind):
    d = D.get(kind)
    lo = 0.0 if kind == "exp" else -np.inf
    val, _ = quad(lambda t: float(d.pdf(t)), lo, np.inf, epsabs=1e-12, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("kind", KINDS)
def test_ratios_match_finite_differences(kind):
    d = D.get(kind)
    z = np.linspace(0.2, 2.5, 25) if kind == "exp" else np.linspace(-4, 2, 25)
    h = 1e-5
    dlog = (d.logpdf(z + h) - d.logpdf(z - h)) / (2 * h)
    assert np.allclose(d.log_density_ratio(z), dlog, rtol=1e-7, atol=1e-7)
    # f''/f from the high-precision density
    f2 = np.array([float(mp.diff(lambda t: mp.exp(mp_logpdf(kind, t)), v, 2) / mp.exp(mp_logpdf(kind, v)))
                   for v in z])
    assert np.allclose(d.curvature_ratio(z), f2, rtol=1e-5, atol=1e-5)


def test_normal_fisher_weight_is_constant():
    z = np.linspace(-20, 20, 401)
    w = D.NORMAL.curvature_ratio(z) - D.NORMAL.log_density_ratio(z) ** 2
    assert np.allclose(w, -1.0, atol=1e-9)


def test_closed_form_ratios():
    z = np.linspace(-5, 3, 17)
    assert np.allclose(D.NORMAL.log_density_ratio(z), -z)
    assert np.allclose(D.LOGISTIC.log_density_ratio(z), 1 - 2 * D.LOGISTIC.cdf(z))
    assert np.allclose(D.MEV.log_density_ratio(z), 1 - np.exp(z))
    assert np.all(D.EXP.log_density_ratio(np.abs(z)) == -1)
    assert np.allclose(D.NORMAL.curvature_ratio(z), z**2 - 1)


@pytest.mark.parametrize("kind", KINDS)
def test_quantile_round_trip_random(kind, rng):
    p = rng.uniform(1e-6, 1 - 1e-6, 1000)
    d = D.get(kind)
    assert np.max(np.abs(d.cdf(d.quantile(p)) - p)) <= 1e-10


@given(st.sampled_from(KINDS), st.floats(1e-12, 1 - 1e-12))
def test_quantile_round_trip_property(kind, p):
    d = D.get(kind)
    assert abs(float(d.cdf(d.quantile(p))) - p) <= 1e-10


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_quantile_domain(p):
    with pytest.raises(D.DomainError):
        D.NORMAL.quantile(p)


@given(st.sampled_from(("normal", "logistic", "mev")), st.floats(-30, 30), st.floats(-30, 30))
def test_cdf_monotone(kind, a, b):
    d = D.get(kind)
    lo, hi = min(a, b), max(a, b)
    assert d.cdf(lo) <= d.cdf(hi)
    assert d.logcdf(lo) <= d.logcdf(hi)


@given(st.sampled_from(("normal", "logistic", "mev")), st.floats(-35, 35), st.floats(1e-6, 20))
def test_log_interval_prob_matches_direct(kind, lo, width):
    d = D.get(kind)
    hi = lo + width
    got = float(D.log_interval_prob(d, np.array([lo]), np.array([hi]))[0])
    # whichever representation avoids cancellation in the oracle itself
    if lo > 0:
        want = float(mp.log(mp_sf(kind, lo) - mp_sf(kind, hi)))
    else:
        want = float(mp.log(mp_cdf(kind, hi) - mp_cdf(kind, lo)))
    assert got == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_log_interval_prob_sentinels():
    d = D.NORMAL
    lo = np.array([-np.inf, 1.0, -np.inf, 2.0])
    hi = np.array([0.0, np.inf, np.inf, 1.0])
    out = D.log_interval_prob(d, lo, hi)
    assert out[0] == pytest.approx(math.log(0.5))
    assert out[1] == pytest.approx(float(d.logsf(1.0)))
    assert out[2] == 0.0
    assert out[3] == -np.inf
    # exponential: lower sentinel means h = 0
    assert D.log_interval_prob(D.EXP, np.array([-np.inf]), np.array([1.0]))[0] == pytest.approx(math.log(1 - math.exp(-1)))


def test_aliases():
    assert D.get("probit") is D.NORMAL or D.get("probit").kind == "normal"
    assert D.get("cloglog").kind == "mev"
    with pytest.raises(ValueError):
        D.get("cauchy")


def test_sampling_deterministic():
    a = D.MEV.sample(np.random.default_rng(5), 100)
    b = D.MEV.sample(np.random.default_rng(5), 100)
    assert np.array_equal(a, b)
