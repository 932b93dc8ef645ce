"""Model constructors for the common transformation-model families, and fitting.

Shift terms enter as c(y, x) = (a(y)', x')' with coefficient -beta, so
h(y | x) = a(y)' theta_1 - x' beta.  Response-varying terms use the
Kronecker product a(y) (x) (1, x').
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from . import basis as B
from . import distributions as D
from .data import Dataset
from .likelihood import Likelihood, TransformationModel
from .optimizer import OptimizationError, OptimizerConfig, OptimResult, maximize

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

# family -> (default error, response kind)
FAMILIES: dict[str, tuple[str | None, str]] = {
    "unconditional": ("normal", "continuous"),
    "linear-transformation": ("normal", "continuous"),
    "normal-linear": ("normal", "continuous"),
    "tobit": ("normal", "continuous"),
    "lognormal-aft": ("normal", "continuous"),
    "loglogistic-aft": ("logistic", "continuous"),
    "weibull-aft": ("mev", "continuous"),
    "exponential-aft": ("mev", "continuous"),
    "cox": ("mev", "continuous"),
    "proportional-odds": ("logistic", "continuous"),
    "additive-hazards": ("exp", "continuous"),
    "distribution-regression": ("normal", "continuous"),
    "time-varying-cox": ("mev", "continuous"),
    "two-sample": ("normal", "continuous"),
    "discrete": ("logistic", "discrete"),
    "discrete-po": ("logistic", "discrete"),
    "discrete-ph": ("mev", "discrete"),
    "binary": ("logistic", "discrete"),
    "non-proportional-odds": ("logistic", "discrete"),
    "non-proportional-hazards": ("mev", "discrete"),
    "multinomial": ("logistic", "discrete"),
    "count": ("logistic", "count"),
    "hurdle": ("logistic", "count"),
    "ctm": ("normal", "continuous"),
}

# families whose error distribution is part of the definition
_FIXED_ERROR = {
    "lognormal-aft": "normal", "loglogistic-aft": "logistic", "weibull-aft": "mev",
    "exponential-aft": "mev", "cox": "mev", "proportional-odds": "logistic",
    "additive-hazards": "exp", "time-varying-cox": "mev", "discrete-po": "logistic",
    "discrete-ph": "mev", "non-proportional-odds": "logistic", "non-proportional-hazards": "mev",
    "normal-linear": "normal", "tobit": "normal",
}


@dataclass
class ModelSpec:
    """Declarative model description, the in-memory form of a model JSON file.

    ``shift`` lists covariates entering as a linear shift, ``varying`` those
    whose effect changes with the response (Kronecker term).  ``terms`` is
    only used by the generic ``ctm`` family: a list of
    ``{"response": <basis dict>, "covariate": <basis dict>}`` entries.
    """

    family: str
    error: str | None = None
    order: int = 6
    response: str = "y"
    shift: Sequence[str] = ()
    varying: Sequence[str] = ()
    support: tuple[float, float] | None = None
    levels: Sequence[str] | None = None
    count_cap: int | None = None
    covariate_bounds: Mapping[str, tuple[float, float]] | None = None
    terms: Sequence[Mapping[str, Any]] | None = None
    optimizer: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; known: {sorted(FAMILIES)}")
        self.shift = tuple(self.shift)
        self.varying = tuple(self.varying)
        fixed = _FIXED_ERROR.get(self.family)
        if self.error is not None and fixed is not None and D.get(self.error).kind != fixed:
            raise ValueError(f"family {self.family!r} requires the {fixed!r} error distribution")
        if self.error is not None:
            D.get(self.error)
        if self.order < 0:
            raise ValueError("Bernstein order must be non-negative")
        if self.family in ("two-sample",) and len(self.varying) != 1:
            raise ValueError("two-sample model needs exactly one group indicator in 'varying'")

    @property
    def error_dist(self) -> D.ErrorDistribution:
        return D.get(self.error or FAMILIES[self.family][0])

    @property
    def response_kind(self) -> str:
        return FAMILIES[self.family][1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shift"] = list(self.shift)
        d["varying"] = list(self.varying)
        if d["levels"] is not None:
            d["levels"] = list(d["levels"])
        if d["covariate_bounds"] is not None:
            d["covariate_bounds"] = {k: list(v) for k, v in d["covariate_bounds"].items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        d = dict(d)
        if d.get("support") is not None:
            d["support"] = tuple(d["support"])
        if d.get("covariate_bounds") is not None:
            d["covariate_bounds"] = {k: tuple(v) for k, v in d["covariate_bounds"].items()}
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        return cls(**d)


def load_spec(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return ModelSpec.from_dict(json.load(fh))


# -- building -------------------------------------------------------------------------


def _data_support(data: Dataset) -> B.Support:
    vals = np.concatenate([data.lower, data.upper, data.tlower, data.tupper])
    return B.Support.from_data(vals)


def _bounds_for(cols, spec: ModelSpec, data: Dataset | None):
    if spec.covariate_bounds is not None and all(c in spec.covariate_bounds for c in cols):
        return tuple(tuple(spec.covariate_bounds[c]) for c in cols)
    if data is not None and all(c in data.x for c in cols):
        return tuple((float(data.x[c].min()), float(data.x[c].max())) for c in cols)
    return None


def build(spec: ModelSpec, data: Dataset | None = None) -> TransformationModel:
    """Assemble (F_Z, c, constraints) for ``spec``.

    Missing pieces (Bernstein support, number of levels, count cap,
    covariate ranges for Kronecker constraints) are taken from ``data``.
    """
    fam = spec.family
    err = spec.error_dist
    kind = spec.response_kind
    M = spec.order
    shift = B.Covariates(spec.shift) if spec.shift else None
    levels = None
    support = None

    def with_shift(a: B.Basis) -> B.Basis:
        return B.Concat((a, shift)) if shift is not None else a

    def varying_basis() -> B.Covariates:
        cols = spec.varying
        return B.Covariates(cols, intercept=True, bounds=_bounds_for(cols, spec, data))

    def bern_support() -> B.Support:
        if spec.support is not None:
            return B.Support(*spec.support)
        if data is None:
            raise ValueError(f"family {fam!r} needs a support or data to derive one")
        return _data_support(data)

    extra_rows = None
    fixed: dict[int, float] = {}

    if kind == "discrete":
        if spec.levels is not None:
            levels = len(spec.levels)
        elif data is not None and data.levels is not None:
            levels = data.levels.K
        elif fam == "binary":
            levels = 2
        else:
            raise ValueError("discrete families need the response levels")
        if fam == "binary" and levels != 2:
            raise ValueError("binary family needs exactly two levels")
        a = B.Discrete(levels)
        if fam in ("non-proportional-odds", "non-proportional-hazards", "multinomial"):
            if not spec.varying:
                raise ValueError(f"{fam} needs at least one column in 'varying'")
            basis = with_shift(B.Kronecker(a, varying_basis()))
        else:
            basis = with_shift(a)
    elif kind == "count":
        cap = spec.count_cap
        if cap is None:
            if data is None:
                raise ValueError("count families need count_cap or data")
            cap = int(np.max(np.floor(data.lower[np.isfinite(data.lower)])))
        if cap < 1:
            raise ValueError("count cap must be at least 1")
        support = B.Support(0.0, float(cap))
        a = B.Bernstein(M, support, floor=True)
        basis = with_shift(a)
        if fam == "hurdle":
            zero = B.Kronecker(B.ZeroIndicator(), B.Covariates(spec.shift, intercept=True))
            basis = B.Concat((a, shift, zero)) if shift is not None else B.Concat((a, zero))
    elif fam in ("normal-linear", "tobit"):
        basis = with_shift(B.Linear())
    elif fam in ("lognormal-aft", "loglogistic-aft", "weibull-aft", "exponential-aft"):
        basis = with_shift(B.Linear(log=True))
        if fam == "exponential-aft":
            fixed[1] = 1.0
    elif fam in ("unconditional", "linear-transformation", "cox", "proportional-odds", "additive-hazards"):
        support = bern_support()
        a = B.Bernstein(M, support)
        if fam == "unconditional" and shift is not None:
            raise ValueError("unconditional family takes no covariates")
        basis = with_shift(a)
        if fam == "additive-hazards":
            # h(lower support | x) > 0 at x = 0 and at every corner of the covariate box
            corners = [np.zeros(len(spec.shift))]
            bounds = _bounds_for(spec.shift, spec, data) if spec.shift else None
            if bounds is not None:
                corners += [np.array(c, dtype=float) for c in itertools.product(*bounds)]
            extra_rows = np.zeros((len(corners), basis.dim))
            extra_rows[:, 0] = 1.0
            extra_rows[:, a.dim:] = np.array(corners)
    elif fam in ("distribution-regression", "time-varying-cox", "two-sample"):
        support = bern_support()
        if not spec.varying:
            raise ValueError(f"{fam} needs at least one column in 'varying'")
        basis = with_shift(B.Kronecker(B.Bernstein(M, support), varying_basis()))
    elif fam == "ctm":
        if not spec.terms:
            raise ValueError("ctm family needs a list of terms")
        parts = []
        for t in spec.terms:
            a = B.from_dict(t["response"])
            b = B.from_dict(t.get("covariate", {"kind": "intercept"}))
            parts.append(B.Kronecker(a, b))
        basis = with_shift(B.Concat(tuple(parts)) if len(parts) > 1 else parts[0])
        bs = [p for p in B.response_parts(basis) if isinstance(p, B.Bernstein)]
        support = bs[0].support if bs else None
    else:  # pragma: no cover - guarded by FAMILIES
        raise ValueError(fam)

    A = basis.constraint_matrix()
    if extra_rows is not None:
        A = np.vstack([A, extra_rows])
    if support is None and kind == "continuous" and data is not None:
        support = _data_support(data)
    elif support is None and spec.support is not None:
        support = B.Support(*spec.support)
    return TransformationModel(err, basis, B.ConstraintSystem(A), kind, levels, fixed, fam, support)


# -- starting values --------------------------------------------------------------------


def _response_values(model: TransformationModel, data: Dataset) -> np.ndarray:
    y = data.midpoints()
    if model.response == "discrete":
        y = np.where(data.exact, data.lower, np.where(np.isfinite(data.upper), data.upper, model.levels))
    return y[np.isfinite(y)]


def _init_response(a: B.Basis, model: TransformationModel, y: np.ndarray) -> np.ndarray:
    dist = model.error
    if isinstance(a, B.Bernstein):
        u = a.support.rescale(np.floor(y) if a.floor else y)
        q25, q75 = np.quantile(u, [0.25, 0.75])
        if q75 <= q25:
            q25, q75 = float(np.min(u)), float(np.max(u))
        if q75 <= q25:
            raise OptimizationError("degenerate data: a single unique response value")
        z25, z75 = dist.quantile([0.25, 0.75])
        slope = (z75 - z25) / (q75 - q25)
        theta = z25 + slope * (np.arange(a.dim) / max(a.order, 1) - q25)
        if a.order == 0:
            theta = np.array([dist.median])
        if dist.kind == "exp" and theta[0] < 0.05:
            theta = theta + (0.05 - theta[0])
        return theta
    if isinstance(a, B.Linear):
        t = np.log(y[y > 0]) if a.log else y
        sd = float(np.std(t))
        if not sd > 0:
            raise OptimizationError("degenerate data: a single unique response value")
        slope, icpt = 1.0 / sd, -float(np.mean(t)) / sd
        if dist.kind == "exp":
            icpt = max(icpt, -float(np.min(t)) / sd + 0.05)
        return np.array([icpt, slope]) if a.intercept else np.array([slope])
    if isinstance(a, B.Discrete):
        K = a.levels
        k = np.clip(np.round(y).astype(int), 1, K)
        counts = np.bincount(k, minlength=K + 1)[1:].astype(float) + 0.5
        ecdf = np.cumsum(counts) / counts.sum()
        return dist.quantile(ecdf[:-1])
    return np.zeros(a.dim)


def _init_basis(basis: B.Basis, model, y) -> np.ndarray:
    if not basis.is_response:
        return np.zeros(basis.dim)
    if isinstance(basis, B.Concat):
        return np.concatenate([_init_basis(p, model, y) for p in basis.parts])
    if isinstance(basis, B.Kronecker):
        if basis.left.is_response:
            a, w = _init_basis(basis.left, model, y), basis.right.unit_weights()
            if w is None:
                w = np.eye(basis.right.dim)[0]
            return np.kron(a, w)
        a, w = _init_basis(basis.right, model, y), basis.left.unit_weights()
        if w is None:
            w = np.eye(basis.left.dim)[0]
        return np.kron(w, a)
    return _init_response(basis, model, y)


def _rhs(model: TransformationModel) -> tuple[np.ndarray, np.ndarray]:
    """Constraints on the free coordinates, A_free z >= b."""
    A = model.constraints.A
    free = model.free
    fixed_part = A[:, ~free] @ np.array([model.fixed[k] for k in np.flatnonzero(~free)]) if (~free).any() else 0.0
    # twice the margin leaves headroom for roundoff on active constraints
    b = 2.0 * model.constraints.eps - fixed_part
    Af = A[:, free]
    keep = np.any(Af != 0, axis=1)
    if np.any(~keep & (np.broadcast_to(b, (A.shape[0],)) > 0)):
        raise ValueError("fixed parameters violate the constraints")
    return Af[keep], np.broadcast_to(b, (A.shape[0],))[keep].copy()


def feasible_init(model: TransformationModel, data: Dataset) -> np.ndarray:
    """Strictly feasible starting value with a finite log-likelihood.

    The response block is the linear map matching F_Z^-1 of the empirical
    quartiles (Bernstein), the moments of the response (linear bases) or
    F_Z^-1 of the smoothed empirical distribution (discrete); shift
    coefficients start at zero.
    """
    y = _response_values(model, data)
    if len(np.unique(y)) < 2:
        raise OptimizationError("degenerate data: a single unique response value")
    theta = _init_basis(model.basis, model, y)
    for k, v in model.fixed.items():
        theta[k] = v
    A, b = _rhs(model)
    free = model.free
    z = theta[free]
    if A.shape[0] and np.any(A @ z < b + 1e-6):
        z = _repair(A, b + 1e-4, z)
    theta[free] = z
    lik = Likelihood(model, data)
    if not np.isfinite(lik.loglik(theta)):
        raise OptimizationError("could not find a starting value with finite log-likelihood")
    return theta


def _repair(A, b, z):
    """Smallest L1 change to z that satisfies A z >= b."""
    n = len(z)
    r = b - A @ z
    res = linprog(np.ones(2 * n), A_ub=-np.hstack([A, -A]), b_ub=-r, bounds=[(0, None)] * (2 * n), method="highs")
    if not res.success:
        raise OptimizationError("constraint system is infeasible")
    return z + res.x[:n] - res.x[n:]


# -- fitting -----------------------------------------------------------------------------------


@dataclass(eq=False)
class FitResult:
    model: TransformationModel
    theta: np.ndarray
    loglik: float
    fisher: np.ndarray
    vcov: np.ndarray | None
    converged: bool
    n: int
    active: np.ndarray
    optim: OptimResult | None = None
    rank: int | None = None
    spec: ModelSpec | None = None

    @property
    def names(self) -> list[str]:
        return self.model.names()

    @property
    def covariance_available(self) -> bool:
        return self.vcov is not None

    def se(self) -> np.ndarray:
        if self.vcov is None:
            raise np.linalg.LinAlgError("covariance unavailable (singular Fisher information)")
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def coef(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.theta)))

    def summary(self) -> str:
        lines = [
            f"family: {self.model.family}   error: {self.model.error.kind}   N = {self.n}",
            f"log-likelihood: {self.loglik:.6f}   parameters: {self.model.dim}   "
            f"converged: {self.converged}   active constraints: {len(self.active)}",
            f"{'parameter':<28}{'estimate':>14}{'std.error':>14}",
        ]
        se = self.se() if self.vcov is not None else np.full(self.model.dim, np.nan)
        for name, est, s in zip(self.names, self.theta, se):
            lines.append(f"{name:<28}{est:>14.6f}{s:>14.6f}")
        return "\n".join(lines)

    # -- artifact JSON --------------------------------------------------------

    def to_dict(self) -> dict:
        m = self.model
        return {
            "format": "mlt-fit",
            "version": FORMAT_VERSION,
            "family": m.family,
            "error": m.error.kind,
            "response": m.response,
            "levels": m.levels,
            "fixed": {str(k): v for k, v in m.fixed.items()},
            "support": None if m.support is None else [m.support.lower, m.support.upper],
            "basis": m.basis.to_dict(),
            "constraints": {"A": m.constraints.A.tolist(), "eps": m.constraints.eps},
            "names": self.names,
            "theta": self.theta.tolist(),
            "loglik": self.loglik,
            "fisher": self.fisher.tolist(),
            "covariance": None if self.vcov is None else self.vcov.tolist(),
            "rank": self.rank,
            "converged": self.converged,
            "n": self.n,
            "active_constraints": self.active.tolist(),
            "kkt_residual": None if self.optim is None else self.optim.kkt_residual,
            "spec": None if self.spec is None else self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitResult":
        if d.get("format") != "mlt-fit":
            raise ValueError("not a fit artifact")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported fit artifact version {d.get('version')}")
        A = np.asarray(d["constraints"]["A"], dtype=float).reshape(-1, len(d["theta"]))
        model = TransformationModel(
            D.get(d["error"]),
            B.from_dict(d["basis"]),
            B.ConstraintSystem(A, float(d["constraints"]["eps"])),
            d["response"],
            d["levels"],
            {int(k): float(v) for k, v in d["fixed"].items()},
            d["family"],
            None if d["support"] is None else B.Support(*d["support"]),
        )
        return cls(
            model=model,
            theta=np.asarray(d["theta"], dtype=float),
            loglik=float(d["loglik"]),
            fisher=np.asarray(d["fisher"], dtype=float),
            vcov=None if d["covariance"] is None else np.asarray(d["covariance"], dtype=float),
            converged=bool(d["converged"]),
            n=int(d["n"]),
            active=np.asarray(d["active_constraints"], dtype=int),
            rank=d.get("rank"),
            spec=None if d.get("spec") is None else ModelSpec.from_dict(d["spec"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FitResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class _Cached:
    """Memoises the last likelihood evaluation; line searches reuse it."""

    def __init__(self, lik: Likelihood, model: TransformationModel):
        self.lik = lik
        self.model = model
        self.free = model.free
        self._key = None
        self._val = None

    def _full(self, z):
        return self.model.expand(z) if self.model.fixed else z

    def _eval(self, z):
        key = z.tobytes()
        if key != self._key:
            self._val = self.lik.all(self._full(z))
            self._key = key
        return self._val

    def fun(self, z):
        if self._key == z.tobytes():
            return self._val[0]
        return self.lik.loglik(self._full(z))

    def grad(self, z):
        return self._eval(z)[1][self.free]

    def hess(self, z):
        F = self._eval(z)[2]
        return -F[np.ix_(self.free, self.free)]


def covariance_from_fisher(F: np.ndarray, free: np.ndarray | None = None, cond_max: float = 1e12):
    """Inverse of the summed Fisher information on the free block.

    Returns ``(vcov, rank)``; falls back to the pseudo-inverse when the
    condition number exceeds ``cond_max`` and returns ``(None, rank)`` if
    the matrix is not finite.
    """
    P = F.shape[0]
    free = np.ones(P, bool) if free is None else free
    Ff = F[np.ix_(free, free)]
    if not np.all(np.isfinite(Ff)):
        return None, None
    out = np.zeros((P, P))
    c = np.linalg.cond(Ff) if Ff.size else 1.0
    if c > cond_max:
        V = np.linalg.pinv(Ff, rcond=1.0 / cond_max, hermitian=True)
        rank = int(np.linalg.matrix_rank(Ff, tol=np.max(np.abs(Ff)) / cond_max))
    else:
        V = np.linalg.inv(Ff)
        rank = int(Ff.shape[0])
    out[np.ix_(free, free)] = 0.5 * (V + V.T)
    return out, rank


def fit(
    model: TransformationModel,
    data: Dataset,
    config: OptimizerConfig | None = None,
    init: np.ndarray | None = None,
    spec: ModelSpec | None = None,
) -> FitResult:
    """Maximum likelihood fit of ``model`` to ``data`` with Fisher-based covariance."""
    if len(data) == 0:
        raise ValueError("cannot fit a model to an empty dataset")
    if np.all(np.isposinf(data.upper) & ~data.exact):
        warnings.warn("all observations are right-censored; the log-likelihood need not be concave",
                      RuntimeWarning, stacklevel=2)
    lik = Likelihood(model, data)
    theta0 = feasible_init(model, data) if init is None else np.asarray(init, dtype=float)
    A, b = _rhs(model)
    c = _Cached(lik, model)
    res = maximize(c.fun, c.grad, A, b, theta0[model.free], config, hess=c.hess)
    theta = model.expand(res.x) if model.fixed else res.x.copy()
    ll, _, F = lik.all(theta)
    if not np.isfinite(ll):
        raise OptimizationError("fitted log-likelihood is not finite")
    vcov, rank = covariance_from_fisher(F, model.free)
    if rank is not None and rank < int(model.free.sum()):
        warnings.warn(f"Fisher information is rank deficient (rank {rank}); using pseudo-inverse",
                      RuntimeWarning, stacklevel=2)
    margin = model.constraints.margin(theta)
    active = np.flatnonzero(margin <= 10 * model.constraints.eps) if margin.size else np.zeros(0, int)
    if not res.converged:
        log.warning("optimizer did not converge: %s (KKT residual %.3g)", res.message, res.kkt_residual)
    return FitResult(model, theta, float(ll), F, vcov, res.converged, len(data), active, res, rank, spec)


def fit_spec(spec: ModelSpec, data: Dataset, config: OptimizerConfig | None = None) -> FitResult:
    cfg = config or OptimizerConfig(**dict(spec.optimizer))
    return fit(build(spec, data), data, cfg, spec=spec)
