"""Built-in simulation studies and data generators.

``simmod`` is the heteroscedastic varying-coefficient normal model
Y = x2 / (x1 + 1/2) + eps / (x1 + 1/2), x1 ~ U[0, 1], x2 ~ U[-2, 2].
``cox_order_m`` refits one right-censored proportional-hazards sample with
increasing Bernstein order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import inference as inf
from .data import Dataset
from .models import ModelSpec, build, fit
from .optimizer import OptimizationError

SIMMOD_THETA = np.array([0.0, 0.0, -1.0, 0.5, 1.0, 0.0])
SIMMOD_BOUNDS = {"x1": (0.0, 1.0), "x2": (-2.0, 2.0)}
COX_ORDERS = tuple(range(1, 31)) + (35, 40, 45, 50)


def rep_seed(seed: int, rep: int) -> np.random.Generator:
    """Independent per-replicate stream, deterministic in (seed, rep)."""
    return np.random.default_rng([seed, rep])


# -- simmod ------------------------------------------------------------------------------


def simmod_spec() -> ModelSpec:
    """(Phi, (1, y) (x) (1, x1, x2)) with the covariate box declared."""
    return ModelSpec(
        "ctm",
        terms=[{
            "response": {"kind": "linear"},
            "covariate": {"kind": "covariates", "columns": ["x1", "x2"], "intercept": True,
                          "bounds": [list(SIMMOD_BOUNDS["x1"]), list(SIMMOD_BOUNDS["x2"])]},
        }],
        support=(-10.0, 10.0),
    )


def simmod_data(n: int, rng: np.random.Generator) -> Dataset:
    x1 = rng.uniform(0.0, 1.0, n)
    x2 = rng.uniform(-2.0, 2.0, n)
    y = (x2 + rng.standard_normal(n)) / (x1 + 0.5)
    return Dataset.from_exact(y, {"x1": x1, "x2": x2})


def simmod_cdf(y, x) -> np.ndarray:
    s = x["x1"] + 0.5
    return ndtr(s * np.asarray(y) - x["x2"])


def simmod_grids(n_y: int = 50, n_x: int = 10):
    y = np.linspace(-4.0, 4.0, n_y)
    g1, g2 = np.meshgrid(np.linspace(0, 1, n_x), np.linspace(-2, 2, n_x))
    return y, {"x1": g1.ravel(), "x2": g2.ravel()}


@dataclass(frozen=True)
class SimmodRep:
    n: int
    rep: int
    converged: bool
    theta: np.ndarray
    mad_min: float
    mad_median: float
    mad_max: float
    error: str = ""


def simmod_rep(n: int, rep: int, seed: int = 0) -> SimmodRep:
    rng = rep_seed(seed, rep)
    data = simmod_data(n, rng)
    spec = simmod_spec()
    try:
        res = fit(build(spec, data), data, spec=spec)
    except (OptimizationError, ArithmeticError, ValueError) as e:
        nan = np.full(6, np.nan)
        return SimmodRep(n, rep, False, nan, np.nan, np.nan, np.nan, str(e))
    y, xg = simmod_grids()
    m = inf.mad_metric(simmod_cdf, res, y, xg)
    return SimmodRep(n, rep, res.converged, res.theta, m.min, m.median, m.max)


def simmod_study(ns=(200, 800, 3200), reps: int = 10, seed: int = 0) -> list[SimmodRep]:
    return [simmod_rep(n, r, seed + 1000 * i) for i, n in enumerate(ns) for r in range(reps)]


# -- proportional hazards ---------------------------------------------------------------------


@dataclass(frozen=True)
class PHTruth:
    """Weibull baseline: log cumulative hazard k log(y / scale) + x' gamma."""

    shape: float = 1.3
    scale: float = 5.0
    gamma: tuple[float, ...] = (-0.4, 0.3)
    columns: tuple[str, ...] = ("horTh", "age")

    def log_cumhazard(self, y, x) -> np.ndarray:
        lin = sum(g * np.asarray(x[c], float) for g, c in zip(self.gamma, self.columns))
        return self.shape * np.log(np.asarray(y, float) / self.scale) + lin


def gbsg_like(n: int = 686, treated: int = 246, seed: int = 0, truth: PHTruth = PHTruth(),
              follow_up: tuple[float, float] = (2.0, 7.3), censor_rate: float = 0.1) -> Dataset:
    """Right-censored proportional-hazards sample mimicking the GBSG-2 layout.

    Exactly ``treated`` rows have horTh = 1; age is standardised.  Entry is
    staggered, so administrative censoring is uniform on ``follow_up``
    (years), with exponential drop-out on top; the defaults censor close to
    60% of the rows.
    """
    rng = np.random.default_rng(seed)
    hor = np.zeros(n)
    hor[rng.choice(n, treated, replace=False)] = 1.0
    age = rng.standard_normal(n)
    x = {"horTh": hor, "age": age}
    # PIT: log Lambda(T | x) = log E with E ~ Exp(1)
    logE = np.log(rng.exponential(size=n))
    lin = truth.log_cumhazard(np.full(n, truth.scale), x)
    t = truth.scale * np.exp((logE - lin) / truth.shape)
    c = np.minimum(rng.exponential(1.0 / censor_rate, n), rng.uniform(*follow_up, n))
    obs = np.minimum(t, c)
    upper = np.where(t <= c, obs, np.inf)
    return Dataset.from_bounds(obs, upper, x)


@dataclass(frozen=True)
class CoxOrderRow:
    order: int
    converged: bool
    loglik: float
    beta: np.ndarray
    grid: np.ndarray
    log_cumhazard: np.ndarray


def cox_order_m(data: Dataset | None = None, orders=COX_ORDERS, seed: int = 0, n_grid: int = 50,
                shift=("horTh", "age")) -> list[CoxOrderRow]:
    """Fit the Cox model for each Bernstein order on one dataset.

    Reports shift coefficients and the baseline log-cumulative hazard
    (covariates at zero) on a common grid.
    """
    data = gbsg_like(seed=seed) if data is None else data
    y = data.midpoints()
    grid = np.linspace(np.quantile(y, 0.05), np.quantile(y, 0.95), n_grid)
    out = []
    for M in orders:
        spec = ModelSpec("cox", order=int(M), shift=list(shift))
        res = fit(build(spec, data), data, spec=spec)
        k = len(shift)
        lch = inf.predict(res, grid, {c: 0.0 for c in shift}, "trafo")[0]
        out.append(CoxOrderRow(int(M), res.converged, res.loglik, res.theta[-k:].copy(), grid, lch))
    return out
