"""Random (model, theta, data) instances shared by the likelihood checks."""

import numpy as np
import mpmath as mp

from mlt import basis as B
from mlt import distributions as D
from mlt.basis import ConstraintSystem
from mlt.data import Dataset
from mlt.likelihood import Likelihood, TransformationModel

SUP = B.Support(1.0, 5.0)
CENSORING = ("exact", "left", "right", "interval")
BASES = ("bernstein", "discrete", "linear")
ERRORS = ("normal", "logistic", "mev", "exp")

mp.mp.dps = 50


def mp_cdf(kind, z):
    if z == -np.inf:
        return mp.mpf(0)
    if z == np.inf:
        return mp.mpf(1)
    z = mp.mpf(z)
    return {
        "normal": lambda: mp.ncdf(z),
        "logistic": lambda: 1 / (1 + mp.exp(-z)),
        "mev": lambda: 1 - mp.exp(-mp.exp(z)),
        "exp": lambda: 1 - mp.exp(-z) if z > 0 else mp.mpf(0),
    }[kind]()


def mp_logpdf(kind, z):
    z = mp.mpf(z)
    return {
        "normal": lambda: -z**2 / 2 - mp.log(2 * mp.pi) / 2,
        "logistic": lambda: -z - 2 * mp.log(1 + mp.exp(-z)),
        "mev": lambda: z - mp.exp(z),
        "exp": lambda: -z,
    }[kind]()


def make_model(basis_kind, error, rng, K=5):
    if basis_kind == "bernstein":
        a = B.Bernstein(int(rng.integers(1, 7)), SUP)
        resp = "continuous"
    elif basis_kind == "discrete":
        a = B.Discrete(K)
        resp = "discrete"
    else:
        a = B.Linear()
        resp = "continuous"
    basis = B.Concat((a, B.Covariates(["x"])))
    model = TransformationModel(D.get(error), basis, ConstraintSystem(basis.constraint_matrix()), resp,
                                K if resp == "discrete" else None)
    # increasing response block; h stays positive for the exponential error
    if basis_kind == "linear":
        th = np.array([rng.uniform(0.2, 1.0), rng.uniform(0.3, 1.2)])
        if error != "exp":
            th[0] -= 2.0
    else:
        steps = rng.uniform(0.2, 1.0, a.dim - 1) if a.dim > 1 else np.zeros(0)
        start = rng.uniform(0.1, 0.5) if error == "exp" else rng.uniform(-2.0, -0.5)
        th = start + np.concatenate([[0.0], np.cumsum(steps)])
    beta = rng.uniform(0.05, 0.3) if error == "exp" else rng.normal(scale=0.5)
    return model, np.append(th, beta)


def make_data(basis_kind, cens, truncated, rng, n=3, K=5):
    x = rng.uniform(0.0, 1.0, n)
    if basis_kind == "discrete":
        k = rng.integers(2, K, n).astype(float)  # interior levels leave room on both sides
        lo, hi = k.copy(), k.copy()
        if cens == "left":
            lo, hi = np.full(n, -np.inf), k
        elif cens == "right":
            lo, hi = k - 1, np.full(n, np.inf)
        elif cens == "interval":
            lo, hi = k - 1, k + 1
        tl = np.full(n, 0.5 if truncated else -np.inf)
        tu = np.full(n, float(K) if truncated else np.inf)
        if truncated:
            tl = np.where(np.isfinite(lo) & (lo >= 1), np.minimum(lo, 1.0), -np.inf)
            tu = np.full(n, float(K - 1)) if cens != "right" else np.full(n, np.inf)
            tu = np.where(hi > K - 1, np.inf, tu)
        return Dataset.from_bounds(lo, hi, {"x": x}, tl, tu)
    y = rng.uniform(1.8, 4.2, n)
    w = rng.uniform(0.1, 0.7, n)
    if cens == "exact":
        lo, hi = y, y.copy()
    elif cens == "left":
        lo, hi = np.full(n, -np.inf), y
    elif cens == "right":
        lo, hi = y, np.full(n, np.inf)
    else:
        lo, hi = y - w, y + w
    if truncated:
        tl = np.where(np.isfinite(lo), np.maximum(np.minimum(lo, y) - 0.5, 1.0), 1.2)
        tu = np.where(np.isfinite(hi), np.minimum(np.maximum(hi, y) + 0.5, 5.0), 4.9)
        tl = np.where(cens == "left", 1.2, tl)
        tu = np.where(cens == "right", 4.9, tu)
    else:
        tl = tu = None
    return Dataset.from_bounds(lo, hi, {"x": x}, tl, tu)


def random_case(rng, basis_kind=None, error=None, cens=None, truncated=None):
    basis_kind = basis_kind or BASES[rng.integers(3)]
    error = error or ERRORS[rng.integers(4)]
    cens = cens or CENSORING[rng.integers(4)]
    truncated = bool(rng.integers(2)) if truncated is None else truncated
    model, theta = make_model(basis_kind, error, rng)
    data = make_data(basis_kind, cens, truncated, rng)
    return model, theta, data


def oracle_loglik(model, theta, data):
    """Direct evaluation in 50-digit arithmetic, in probability space."""
    kind = model.error.kind
    basis = model.basis
    total = mp.mpf(0)
    for i in range(len(data)):
        xi = {"x": data.x["x"][i : i + 1]}

        def h(v):
            if model.response == "discrete":
                if v == -np.inf or v < 1:
                    return -np.inf
                if v == np.inf or v >= model.levels:
                    return np.inf
            elif not np.isfinite(v):
                return v
            return float(basis.evaluate(np.array([v]), xi)[0] @ theta)

        def cdf(v):
            return mp_cdf(kind, h(v))

        lo, hi = data.lower[i], data.upper[i]
        if data.exact[i] and model.response == "continuous":
            dh = float(basis.deriv(np.array([lo]), xi)[0] @ theta)
            total += mp_logpdf(kind, h(lo)) + mp.log(dh)
        else:
            if data.exact[i]:
                k = lo
                lo, hi = k - 1, k
            total += mp.log(cdf(hi) - cdf(lo))
        tl, tu = data.tlower[i], data.tupper[i]
        if np.isfinite(tl) or np.isfinite(tu):
            total -= mp.log(cdf(tu) - cdf(tl))
    return float(total)


def fd_gradient(f, theta, rel=1e-6):
    g = np.empty(len(theta))
    for j in range(len(theta)):
        e = np.zeros(len(theta))
        e[j] = rel * max(1.0, abs(theta[j]))
        g[j] = (f(theta + e) - f(theta - e)) / (2 * e[j])
    return g


def fd_jacobian(f, theta, rel=1e-6):
    cols = []
    for j in range(len(theta)):
        e = np.zeros(len(theta))
        e[j] = rel * max(1.0, abs(theta[j]))
        cols.append((f(theta + e) - f(theta - e)) / (2 * e[j]))
    return np.column_stack(cols)


def derivative_errors(model, theta, data):
    """(relative score error, relative Fisher error) against finite differences."""
    lik = Likelihood(model, data)
    s = lik.score(theta)
    s_fd = fd_gradient(lik.loglik, theta)
    F = lik.fisher(theta)
    F_fd = -fd_jacobian(lik.score, theta)
    es = np.max(np.abs(s - s_fd)) / max(1.0, np.max(np.abs(s)))
    eF = np.max(np.abs(F - F_fd)) / max(1.0, np.max(np.abs(F)))
    return es, eF
