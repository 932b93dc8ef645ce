"""Asymptotic inference, prediction functionals and PIT sampling for fitted models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .likelihood import TransformationModel

WHATS = ("trafo", "distribution", "survivor", "density", "quantile", "hazard", "cumhazard", "odds")

QUANTILE_TOL = 1e-10
QUANTILE_MAX_ITER = 200
BAND_DRAWS = 2**17  # at least 1e5 quasi-random draws


def covariance(fit) -> np.ndarray:
    """Estimated covariance of theta-hat: inverse of the summed observed Fisher information."""
    if fit.vcov is None:
        raise np.linalg.LinAlgError("covariance unavailable: Fisher information is singular or not finite")
    return fit.vcov


def z_value(level: float = 0.95) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    return float(ndtri(0.5 + level / 2.0))


@dataclass(frozen=True)
class WaldTable:
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def wald(fit, L=None, level: float = 0.95) -> WaldTable:
    """Wald intervals for the linear combinations in the rows of ``L`` (identity if None)."""
    V = covariance(fit)
    P = len(fit.theta)
    L = np.eye(P) if L is None else np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != P:
        raise ValueError(f"contrast matrix needs {P} columns, got {L.shape[1]}")
    est = L @ fit.theta
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", L, V, L), 0.0, None))
    z = z_value(level)
    return WaldTable(est, se, est - z * se, est + z * se, level)


# -- simultaneous bands ---------------------------------------------------------------------


@dataclass(frozen=True)
class Band:
    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    multiplier: float
    pointwise_z: float
    level: float


def max_t_quantile(R: np.ndarray, level: float = 0.95, n_draws: int = BAND_DRAWS, seed: int = 0) -> float:
    """Quantile of max_k |T_k| for T ~ N(0, R), from scrambled Sobol draws.

    One-dimensional correlation structures (including a single grid point)
    are handled exactly, the result is never below the pointwise quantile.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    z = z_value(level)
    w, U = np.linalg.eigh(0.5 * (R + R.T))
    keep = w > 1e-10 * max(float(w.max()), 1e-300)
    r = int(keep.sum())
    if r <= 1:
        return z
    root = U[:, keep] * np.sqrt(w[keep])
    m = int(2 ** np.ceil(np.log2(max(n_draws, 2))))
    sob = qmc.Sobol(d=r, scramble=True, seed=np.random.default_rng(seed))
    u = sob.random_base2(int(np.log2(m)))
    u = np.clip(u, 0.5 / m, 1.0 - 0.5 / m)
    stat = np.empty(m)
    chunk = max(1, 2**22 // max(R.shape[0], 1))
    for s in range(0, m, chunk):
        T = ndtri(u[s : s + chunk]) @ root.T
        stat[s : s + chunk] = np.max(np.abs(T), axis=1)
    return max(z, float(np.quantile(stat, level)))


def confidence_band(
    fit,
    grid,
    contrast: Callable[[np.ndarray], np.ndarray] | None = None,
    level: float = 0.95,
    x: Mapping[str, float] | None = None,
    n_draws: int = BAND_DRAWS,
    seed: int = 0,
) -> Band:
    """Simultaneous band for L(y) theta over ``grid`` via the max-t multiplier.

    ``contrast`` maps the grid to the matrix of contrast rows; by default
    this is the model design c(y, x) at the fixed covariate values ``x``,
    giving a band for the transformation function.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("band grid is empty")
    V = covariance(fit)
    if contrast is None:
        L = design(fit.model, grid, _broadcast_x(x, len(grid)))
    else:
        L = np.atleast_2d(np.asarray(contrast(grid), dtype=float))
    est = L @ fit.theta
    cov = L @ V @ L.T
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if np.any(se <= 0):
        raise ValueError("contrast with zero standard error; the band is undefined there")
    R = cov / np.outer(se, se)
    q = max_t_quantile(R, level, n_draws, seed)
    return Band(grid, est, se, est - q * se, est + q * se, q, z_value(level), level)


# -- prediction --------------------------------------------------------------------------------


def _broadcast_x(x, n: int) -> dict[str, np.ndarray]:
    if x is None:
        return {}
    return {k: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for k, v in x.items()}


def design(model: TransformationModel, y, x: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Rows c(y_i, x_i) for response values given on the model's own scale."""
    y = np.asarray(y, dtype=float)
    return model.basis.evaluate(y, _broadcast_x(x, len(y)), clamp=True)


def _trafo(model: TransformationModel, theta, y, x) -> np.ndarray:
    """h(y | x) with the discrete and count sentinels mapped to +-inf."""
    y = np.asarray(y, dtype=float)
    out = np.empty(len(y))
    xs = _broadcast_x(x, len(y))
    if model.response == "discrete":
        hi, lo = y >= model.levels, y < 1
    elif model.response == "count":
        hi, lo = np.zeros(len(y), bool), y < 0
    else:
        hi = lo = np.zeros(len(y), bool)
    mid = ~(hi | lo)
    out[hi], out[lo] = np.inf, -np.inf
    if np.any(mid):
        # prediction beyond a bounded support holds h at its boundary value
        out[mid] = model.basis.evaluate(y[mid], {k: v[mid] for k, v in xs.items()}, clamp=True) @ theta
    return out


def _rows(x, n_default=1):
    """Split covariate mapping into per-row dicts; scalar dict means one row."""
    if not x:
        return [dict() for _ in range(n_default)]
    arrs = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in x.items()}
    n = max(len(v) for v in arrs.values())
    arrs = {k: np.broadcast_to(v, (n,)) for k, v in arrs.items()}
    return [{k: float(v[i]) for k, v in arrs.items()} for i in range(n)]


def _values(model, theta, y, xrow, what):
    dist = model.error
    h = _trafo(model, theta, y, xrow)
    if what == "trafo":
        return h
    if what == "distribution":
        return dist.cdf(h)
    if what == "survivor":
        return dist.sf(h)
    if what == "cumhazard":
        return -dist.logsf(h)
    if what == "odds":
        return np.exp(dist.logcdf(h) - dist.logsf(h))
    if what in ("density", "hazard"):
        if model.response == "continuous":
            y = np.asarray(y, dtype=float)
            xs = _broadcast_x(xrow, len(y))
            dh = model.basis.deriv(y, xs, clamp=True) @ theta
            lo, hi, bounded = _bracket(model)
            if bounded:
                # h is flat where it is clamped
                dh = np.where((y < lo) | (y > hi), 0.0, dh)
            logf = dist.logpdf(h) + np.log(dh)
        else:
            # probability mass of {y}
            from .distributions import log_interval_prob

            y = np.asarray(y, dtype=float)
            hprev = _trafo(model, theta, y - 1.0, xrow)
            logf = log_interval_prob(dist, hprev, h)
        if what == "density":
            return np.exp(logf)
        if model.response == "continuous":
            return np.exp(logf - dist.logsf(h))
        # discrete hazard: P(Y = y | Y >= y)
        hprev = _trafo(model, theta, np.asarray(y, float) - 1.0, xrow)
        return np.exp(logf - dist.logsf(hprev))
    raise ValueError(f"unknown prediction type {what!r}; choose from {WHATS}")


def predict(fit, y=None, x=None, what: str = "distribution", p=None) -> np.ndarray:
    """Plug-in predictions, shape (number of covariate rows, grid length).

    ``x`` maps covariate names to values (scalars or equal-length arrays,
    one prediction row each).  For ``what="quantile"`` the grid is ``p``.
    Discrete responses use level indices 1..K as ``y``.
    """
    model, theta = fit.model, np.asarray(fit.theta, dtype=float)
    rows = _rows(x)
    if what == "quantile":
        if p is None:
            raise ValueError("quantile prediction needs probabilities p")
        out, boundary = zip(*(quantile(model, theta, p, r) for r in rows))
        nb = int(np.sum(boundary))
        if nb:
            warnings.warn(f"{nb} quantile(s) outside the support were set to the boundary",
                          RuntimeWarning, stacklevel=2)
        return np.vstack(out)
    if what not in WHATS:
        raise ValueError(f"unknown prediction type {what!r}; choose from {WHATS}")
    if y is None:
        y = default_grid(model)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    with np.errstate(divide="ignore", over="ignore"):
        return np.vstack([_values(model, theta, y, r, what) for r in rows])


def default_grid(model: TransformationModel, n: int = 50) -> np.ndarray:
    if model.response == "discrete":
        return np.arange(1.0, model.levels + 1)
    if model.response == "count":
        return np.arange(0.0, model.support.upper + 1)
    if model.support is None:
        raise ValueError("model has no stored support; pass an explicit grid")
    return np.linspace(model.support.lower, model.support.upper, n)


# -- inversion --------------------------------------------------------------------------------


def _bracket(model: TransformationModel):
    """(lower, upper, bounded) search interval on the response scale."""
    from .basis import response_parts, Bernstein, Linear

    parts = response_parts(model.basis)
    bern = [q for q in parts if isinstance(q, Bernstein)]
    if bern:
        return bern[0].support.lower, bern[0].support.upper, True
    if any(isinstance(q, Linear) and q.log for q in parts):
        return 0.0, np.inf, False
    return -np.inf, np.inf, False


def invert(model: TransformationModel, theta, z, x=None) -> tuple[np.ndarray, np.ndarray]:
    """y = inf{y : h(y | x) >= z} for each target z; also returns a boundary flag.

    Continuous responses use bisection to a relative width of 1e-10 of the
    support (200 iterations at most); discrete and count responses search
    the level index.  Targets beyond the support map to its boundary.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if model.response == "discrete":
        levels = np.arange(1.0, model.levels + 1)
        hk = _trafo(model, theta, levels, x)
        idx = np.searchsorted(hk, z, side="left")
        return levels[np.minimum(idx, model.levels - 1)], np.zeros(len(z), bool)
    if model.response == "count":
        ks = np.arange(0.0, model.support.upper + 1)
        hk = _trafo(model, theta, ks, x)
        idx = np.searchsorted(hk, z, side="left")
        over = idx >= len(ks)
        return ks[np.minimum(idx, len(ks) - 1)], over

    lo, hi, bounded = _bracket(model)

    def h(y):
        return _trafo(model, theta, y, x)

    n = len(z)
    if bounded:
        a, b = np.full(n, lo), np.full(n, hi)
        ha, hb = h(np.array([lo]))[0], h(np.array([hi]))[0]
        below, above = z <= ha, z > hb
    else:
        # grow a bracket around a finite starting point
        a = np.full(n, 1.0 if lo == 0.0 else -1.0)
        b = np.full(n, 2.0 if lo == 0.0 else 1.0)
        for _ in range(2000):
            need = h(a) >= z
            if not need.any():
                break
            a[need] = a[need] / 2.0 if lo == 0.0 else a[need] - 2.0 * (b[need] - a[need])
        for _ in range(2000):
            need = h(b) < z
            if not need.any():
                break
            b[need] = b[need] + 2.0 * (b[need] - a[need])
        below = above = np.zeros(n, bool)
    tol = QUANTILE_TOL * (np.abs(b - a) if not bounded else (hi - lo))
    for _ in range(QUANTILE_MAX_ITER):
        if np.all(b - a <= tol):
            break
        m = 0.5 * (a + b)
        up = h(m) >= z
        b = np.where(up, m, b)
        a = np.where(up, a, m)
    y = b.copy()
    y[below] = lo
    y[above] = hi
    return y, below | above


def quantile(model: TransformationModel, theta, p, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Conditional quantiles at probabilities p, with a boundary flag per value."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("quantile probabilities must lie in (0, 1)")
    return invert(model, np.asarray(theta, float), model.error.quantile(p), x)


def sample(model: TransformationModel, theta, x=None, n: int | None = None, seed: int = 0) -> np.ndarray:
    """Draws from F_Y(. | x) by the probability integral transform.

    With ``x`` holding arrays, one draw per covariate row is returned;
    otherwise ``n`` draws at the single covariate setting.  Draws that fall
    beyond a bounded support are placed at its boundary.
    """
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta, dtype=float)
    rows = _rows(x)
    if len(rows) > 1:
        if n not in (None, len(rows)):
            raise ValueError("n must match the number of covariate rows")
        z = model.error.sample(rng, len(rows))
        return np.array([invert(model, theta, z[i : i + 1], r)[0][0] for i, r in enumerate(rows)])
    if n is None:
        raise ValueError("number of draws n is required")
    z = model.error.sample(rng, n)
    return invert(model, theta, z, rows[0])[0]


# -- evaluation ------------------------------------------------------------------------------


@dataclass(frozen=True)
class MADSummary:
    per_x: np.ndarray
    min: float
    median: float
    max: float


def mad_metric(true_cdf, fitted, y_grid, x_grid) -> MADSummary:
    """Mean absolute deviation between true and fitted CDFs over y, summarised over x.

    ``true_cdf`` and a callable ``fitted`` take (y array, covariate dict) and
    return CDF values; ``fitted`` may also be a fit result.
    """
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    rows = _rows(x_grid)
    if y.size == 0 or not rows:
        raise ValueError("grids must be non-empty")
    if callable(fitted):
        fcdf = fitted
    else:
        def fcdf(yy, r):
            return predict(fitted, yy, r, "distribution")[0]
    mad = np.array([np.mean(np.abs(np.asarray(true_cdf(y, r)) - np.asarray(fcdf(y, r)))) for r in rows])
    return MADSummary(mad, float(mad.min()), float(np.median(mad)), float(mad.max()))
