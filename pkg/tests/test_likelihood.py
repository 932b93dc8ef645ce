import itertools
import math
import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _cases import BASES, CENSORING, ERRORS, SUP, derivative_errors, make_model, oracle_loglik, random_case
from mlt import basis as B
from mlt import distributions as D
from mlt.data import Dataset, ResponseStatus
from mlt.likelihood import (Likelihood, LikelihoodError, TransformationModel, fisher_obs, loglik_obs,
                            score_obs, total)

MATRIX = list(itertools.product(BASES, ERRORS, CENSORING, (False, True)))


def ids(case):
    b, e, c, t = case
    return f"{b}-{e}-{c}" + ("-trunc" if t else "")


@pytest.mark.parametrize("case", MATRIX, ids=ids)
def test_loglik_against_high_precision_oracle(case):
    rng = np.random.default_rng(zlib.crc32(ids(case).encode()))
    model, theta, data = random_case(rng, *case)
    got = Likelihood(model, data).loglik(theta)
    assert got == pytest.approx(oracle_loglik(model, theta, data), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("case", MATRIX, ids=ids)
def test_score_and_fisher_against_finite_differences(case):
    rng = np.random.default_rng(zlib.crc32(ids(case).encode()) + 1)
    es, eF = derivative_errors(*random_case(rng, *case))
    assert es <= 1e-6
    assert eF <= 1e-5


@given(st.integers(0, 2**32 - 1))
def test_derivatives_property(seed):
    es, eF = derivative_errors(*random_case(np.random.default_rng(seed)))
    assert es <= 1e-6 and eF <= 1e-5


def discrete_model(K, error="logistic"):
    a = B.Discrete(K)
    return TransformationModel(D.get(error), a, B.ConstraintSystem(a.constraint_matrix()), "discrete", K)


def test_discrete_closed_form_is_multinomial():
    rng = np.random.default_rng(3)
    k = rng.integers(1, 4, 20)
    k[:3] = [1, 2, 3]
    data = Dataset.from_levels(k, ["a", "b", "c"])
    pi = np.bincount(k, minlength=4)[1:] / 20
    for err in ("normal", "logistic", "mev"):
        model = discrete_model(3, err)
        theta = D.get(err).quantile(np.cumsum(pi)[:-1])
        lik = Likelihood(model, data)
        assert lik.loglik(theta) == pytest.approx(np.sum(np.log(pi[k - 1])), rel=1e-12)
        assert np.max(np.abs(lik.score(theta))) <= 1e-8


def test_full_support_truncation_is_no_truncation():
    rng = np.random.default_rng(5)
    # discrete: (-inf, K] truncation is the whole sample space
    model = discrete_model(4)
    k = rng.integers(1, 5, 30).astype(float)
    plain = Dataset.from_levels(k.astype(int), ["1", "2", "3", "4"])
    trunc = Dataset.from_bounds(np.where(k == 1, -np.inf, k - 1), np.where(k == 4, np.inf, k), None,
                                np.full(30, 0.0), np.full(30, 4.0))
    theta = np.array([-1.0, 0.2, 1.1])
    assert Likelihood(model, trunc).loglik(theta) == pytest.approx(Likelihood(model, plain).loglik(theta), abs=1e-12)
    # continuous: bounds far beyond the mass
    model, theta = make_model("linear", "normal", rng)
    y = rng.uniform(2, 4, 10)
    a = Likelihood(model, Dataset.from_exact(y, {"x": y * 0})).loglik(theta)
    b = Likelihood(model, Dataset.from_exact(y, {"x": y * 0}, np.full(10, -1e6), np.full(10, 1e6))).loglik(theta)
    assert abs(a - b) <= 1e-12


def test_censoring_consistency():
    model, theta = make_model("bernstein", "logistic", np.random.default_rng(2))
    x = {"x": [0.3]}
    left = Dataset.from_statuses([ResponseStatus.left(3.0)], x)
    left_iv = Dataset.from_bounds([-np.inf], [3.0], x)
    right = Dataset.from_statuses([ResponseStatus.right(2.0)], x)
    right_iv = Dataset.from_bounds([2.0], [np.inf], x)
    L = lambda d: Likelihood(model, d).loglik(theta)
    assert L(left) == L(left_iv)
    assert L(right) == L(right_iv)


def test_factor_equals_interval_representation():
    rng = np.random.default_rng(8)
    k = rng.integers(1, 5, 40)
    fac = Dataset.from_levels(k, ["a", "b", "c", "d"])
    iv = Dataset.from_bounds(np.where(k == 1, -np.inf, k - 1.0), np.where(k == 4, np.inf, k * 1.0))
    model = discrete_model(4, "mev")
    theta = np.array([-0.5, 0.4, 1.5])
    a, b = Likelihood(model, fac), Likelihood(model, iv)
    assert a.loglik(theta) == b.loglik(theta)
    assert np.array_equal(a.score(theta), b.score(theta))


@pytest.mark.parametrize("error", ("normal", "logistic", "mev"))
def test_interval_approaches_density(error):
    model, theta = make_model("bernstein", error, np.random.default_rng(11))
    y, x = 3.1, {"x": [0.4]}
    exact = Likelihood(model, Dataset.from_exact([y], x)).loglik(theta)
    errs = []
    for eps in 0.1 * 0.5 ** np.arange(8):
        iv = Likelihood(model, Dataset.from_bounds([y], [y + eps], x)).loglik(theta)
        errs.append(abs(iv - math.log(eps) - exact))
    errs = np.array(errs)
    assert errs[-1] < 1e-3
    ratios = errs[:-1] / errs[1:]
    # first order: halving eps halves the error
    assert np.all((ratios > 1.7) & (ratios < 2.3))


def test_cox_right_censored_score():
    rng = np.random.default_rng(4)
    model, theta = make_model("bernstein", "mev", rng)
    for _ in range(10):
        y, xv = rng.uniform(1.5, 4.5), rng.uniform(0, 1)
        c = model.basis.evaluate(np.array([y]), {"x": np.array([xv])})[0]
        s = score_obs(model, theta, ResponseStatus.right(y), {"x": xv})
        assert np.allclose(s, -np.exp(c @ theta) * c, rtol=1e-12)


def test_normal_exact_weight():
    rng = np.random.default_rng(6)
    model, theta = make_model("bernstein", "normal", rng)
    y, xv = 2.7, {"x": 0.2}
    c = model.basis.evaluate(np.array([y]), {"x": np.array([0.2])})[0]
    d = model.basis.deriv(np.array([y]), {"x": np.array([0.2])})[0]
    F = fisher_obs(model, theta, ResponseStatus.exact(y), xv)
    assert np.allclose(F, np.outer(c, c) + np.outer(d, d) / (d @ theta) ** 2, rtol=1e-12)
    assert np.max(np.abs(F - F.T)) <= 1e-10


def test_single_observation_api():
    model, theta = make_model("linear", "normal", np.random.default_rng(1))
    st_ = ResponseStatus.interval(2.0, 3.0, truncation=(1.0, 4.0))
    d = Dataset.from_statuses([st_], {"x": [0.5]})
    assert loglik_obs(model, theta, st_, {"x": 0.5}) == pytest.approx(Likelihood(model, d).loglik(theta))


def test_infeasible_parameter():
    model, _ = make_model("bernstein", "normal", np.random.default_rng(1))
    data = Dataset.from_exact([2.0, 3.0], {"x": [0.0, 0.0]})
    theta = np.zeros(model.dim)
    theta[: model.dim - 1] = np.linspace(1, -1, model.dim - 1)  # decreasing h
    lik = Likelihood(model, data)
    assert lik.loglik(theta) == -np.inf
    with pytest.raises(LikelihoodError):
        lik.score(theta)
    assert lik.all(theta)[0] == -np.inf


def test_concavity_along_lines():
    rng = np.random.default_rng(9)
    for error in ("normal", "logistic", "mev"):
        model, theta = make_model("bernstein", error, rng)
        data = Dataset.from_bounds(rng.uniform(1.5, 4.5, 30), np.full(30, np.inf), {"x": rng.uniform(0, 1, 30)})
        lo = np.array(data.lower)
        up = np.where(np.arange(30) < 15, lo, np.inf)
        data = Dataset.from_bounds(lo, up, {"x": np.array(data.x["x"])})
        lik = Likelihood(model, data)
        # segment between two feasible points of the same model
        theta2 = theta + np.concatenate([np.cumsum(rng.uniform(0, 0.3, model.dim - 1)), [rng.normal()]])
        t = np.linspace(0, 1, 41)
        vals = np.array([lik.loglik((1 - s) * theta + s * theta2) for s in t])
        assert np.all(np.isfinite(vals))
        assert np.max(np.diff(vals, 2)) <= 1e-8


def test_total_reducers():
    rng = np.random.default_rng(12)
    model, theta, data = random_case(rng, "bernstein", "logistic", "interval", True)
    big = Dataset.from_bounds(np.tile(data.lower, 300), np.tile(data.upper, 300),
                              {"x": np.tile(data.x["x"], 300)}, np.tile(data.tlower, 300), np.tile(data.tupper, 300))
    serial = [total(model, theta, big, r, n_jobs=1) for r in ("loglik", "score", "fisher")]
    par = [total(model, theta, big, r, n_jobs=4) for r in ("loglik", "score", "fisher")]
    assert abs(serial[0] - par[0]) <= 1e-12 * abs(serial[0])
    assert np.allclose(serial[1], par[1], rtol=1e-12, atol=1e-12)
    assert np.allclose(serial[2], par[2], rtol=1e-12, atol=1e-12)
    # additivity
    two = data.subset([0, 1])
    one_a, one_b = data.subset([0]), data.subset([1])
    assert total(model, theta, two) == pytest.approx(total(model, theta, one_a) + total(model, theta, one_b), rel=1e-14)


def test_total_empty_and_failing_row():
    model, theta = make_model("bernstein", "normal", np.random.default_rng(1))
    empty = Dataset.from_exact(np.zeros(0), {"x": np.zeros(0)})
    assert total(model, theta, empty) == 0.0
    assert np.array_equal(total(model, theta, empty, "score"), np.zeros(model.dim))
    assert np.array_equal(total(model, theta, empty, "fisher"), np.zeros((model.dim, model.dim)))
    # a decreasing discrete transformation gives level 2 negative probability
    dm = discrete_model(3)
    d = Dataset.from_levels([1, 1, 2, 3], ["a", "b", "c"])
    with pytest.raises(LikelihoodError) as e:
        total(dm, np.array([1.0, 0.0]), d, "score", n_jobs=2)
    assert e.value.row == 2
