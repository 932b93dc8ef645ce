"""Exact log-likelihood, score and observed Fisher information.

Contributions per observation:

* exact y:            log f_Z(h(y)) + log h'(y)
* censored (l, u]:    log(F_Z(h(u)) - F_Z(h(l)))  with F_Z(h(-inf)) = 0, F_Z(h(+inf)) = 1
* truncation (tl, tr]: subtract log(F_Z(h(tr)) - F_Z(h(tl)))

where h(y) = c(y, x)' theta.  Interval probabilities are evaluated on the log
scale so that transformation values far in the tails stay finite.

:class:`Likelihood` binds a model to a dataset and caches all design
matrices; the module-level ``*_obs`` and :func:`total` functions are thin
conveniences over it.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .basis import Basis, ConstraintSystem, Discrete, Support, response_parts
from .data import Dataset, ResponseStatus
from .distributions import ErrorDistribution, log_interval_prob

RESPONSE_KINDS = ("continuous", "discrete", "count")


class LikelihoodError(ArithmeticError):
    """Score or Fisher requested where the log-likelihood is not finite."""

    def __init__(self, msg: str, row: int | None = None):
        self.row = row
        super().__init__(msg if row is None else f"row {row}: {msg}")


@dataclass(frozen=True, eq=False)
class TransformationModel:
    """The triple (F_Z, c, constraints) plus bookkeeping for the response type.

    ``fixed`` maps parameter positions to values held constant during
    fitting (e.g. the unit log-coefficient of the exponential AFT model).
    ``support`` is the response range used for prediction and sampling.
    """

    error: ErrorDistribution
    basis: Basis
    constraints: ConstraintSystem
    response: str = "continuous"
    levels: int | None = None
    fixed: Mapping[int, float] = field(default_factory=dict)
    family: str = "custom"
    support: Support | None = None

    def __post_init__(self):
        if self.response not in RESPONSE_KINDS:
            raise ValueError(f"response kind must be one of {RESPONSE_KINDS}")
        A = self.constraints.A
        if A.ndim != 2 or A.shape[1] != self.basis.dim:
            raise ValueError(
                f"constraint matrix has {A.shape[-1]} columns, basis dimension is {self.basis.dim}"
            )
        parts = response_parts(self.basis)
        if self.response == "continuous" and any(isinstance(p, Discrete) for p in parts):
            raise ValueError("a continuous response needs a differentiable response basis")
        if self.response == "discrete" and self.levels is None:
            raise ValueError("a discrete response needs the number of levels")
        for k in self.fixed:
            if not 0 <= k < self.basis.dim:
                raise ValueError(f"fixed parameter index {k} out of range")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.dim, bool)
        mask[list(self.fixed)] = False
        return mask

    def names(self) -> list[str]:
        return self.basis.names()

    def expand(self, theta_free) -> np.ndarray:
        """Full parameter vector from the free coordinates."""
        full = np.zeros(self.dim)
        for k, v in self.fixed.items():
            full[k] = v
        full[self.free] = theta_free
        return full


def _interval_bounds(model: TransformationModel, data: Dataset):
    """Per-row (lower, upper, exact) in the coordinates the basis expects."""
    lo = data.lower.astype(float).copy()
    hi = data.upper.astype(float).copy()
    exact = data.exact.copy()
    if model.response == "discrete":
        K = model.levels
        if data.levels is not None and data.levels.K != K:
            raise ValueError(f"data has {data.levels.K} levels, model expects {K}")
        k = lo[exact]
        if np.any((k < 1) | (k > K) | (k != np.round(k))):
            raise ValueError("discrete response must hold level indices 1..K")
        lo[exact] = np.where(k == 1, -np.inf, k - 1)
        hi[exact] = np.where(k == K, np.inf, k)
        # the upper level is the +inf sentinel also for censored rows
        hi[hi >= K] = np.inf
        lo[lo < 1] = -np.inf
        exact = np.zeros_like(exact)
    elif model.response == "count":
        y = np.floor(lo[exact])
        if np.any(y < 0):
            raise ValueError("count response must be non-negative")
        lo[exact] = np.where(y == 0, -np.inf, y - 1)
        hi[exact] = y
        exact = np.zeros_like(exact)
    return lo, hi, exact


def _subset_x(x: Mapping[str, np.ndarray], idx) -> dict[str, np.ndarray]:
    return {k: v[idx] for k, v in x.items()}


class _Bounds:
    """Design matrix for one set of (possibly infinite) evaluation points."""

    def __init__(self, basis: Basis, y: np.ndarray, x: Mapping[str, np.ndarray]):
        self.n = len(y)
        self.neg = np.isneginf(y)
        self.pos = np.isposinf(y)
        fin = ~(self.neg | self.pos)
        self.fin = fin
        self.C = np.zeros((self.n, basis.dim))
        if np.any(fin):
            self.C[fin] = basis.evaluate(y[fin], _subset_x(x, fin))

    def h(self, theta):
        out = self.C @ theta
        out[self.neg] = -np.inf
        out[self.pos] = np.inf
        return out


class Likelihood:
    """Log-likelihood, score and Fisher information of ``model`` on ``data``."""

    def __init__(self, model: TransformationModel, data: Dataset):
        self.model = model
        self.data = data
        self.n = len(data)
        basis = model.basis
        lo, hi, exact = _interval_bounds(model, data)
        self.exact_idx = np.flatnonzero(exact)
        self.cens_idx = np.flatnonzero(~exact)
        trunc = np.isfinite(data.tlower) | np.isfinite(data.tupper)
        self.trunc_idx = np.flatnonzero(trunc)
        x = data.x

        xe = _subset_x(x, self.exact_idx)
        ye = lo[self.exact_idx]
        self.C_exact = basis.evaluate(ye, xe) if len(ye) else np.zeros((0, basis.dim))
        self.D_exact = basis.deriv(ye, xe) if len(ye) else np.zeros((0, basis.dim))

        xc = _subset_x(x, self.cens_idx)
        self.cens_lo = _Bounds(basis, lo[self.cens_idx], xc)
        self.cens_hi = _Bounds(basis, hi[self.cens_idx], xc)

        xt = _subset_x(x, self.trunc_idx)
        tl, tu = data.tlower[self.trunc_idx], data.tupper[self.trunc_idx]
        if model.response == "discrete":
            tl = np.where(tl < 1, -np.inf, tl)
            tu = np.where(tu >= model.levels, np.inf, tu)
        self.trunc_lo = _Bounds(basis, tl, xt)
        self.trunc_hi = _Bounds(basis, tu, xt)

    # -- pieces ----------------------------------------------------------------

    def _exact_terms(self, theta, order):
        dist = self.model.error
        h = self.C_exact @ theta
        hp = self.D_exact @ theta
        n = len(h)
        ll = np.full(n, -np.inf)
        ok = hp > 0
        if dist.kind == "exp":
            ok &= h >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ll[ok] = dist.logpdf(h[ok]) + np.log(hp[ok])
        if order == 0:
            return ll, None, None
        r = dist.log_density_ratio(h)
        S = self.C_exact * r[:, None] + self.D_exact / hp[:, None]
        if order == 1:
            return ll, S, None
        w = dist.curvature_ratio(h) - r * r
        F = -(self.C_exact.T * w) @ self.C_exact + (self.D_exact.T / hp**2) @ self.D_exact
        return ll, S, F

    def _interval_terms(self, lo: _Bounds, hi: _Bounds, theta, order):
        dist = self.model.error
        hl = lo.h(theta)
        hu = hi.h(theta)
        n = len(hl)
        ll = np.full(n, -np.inf)
        ok = hu > hl
        if dist.kind == "exp":
            ok &= (hl >= 0) | lo.neg
            ok &= hu >= 0
        if np.any(ok):
            ll[ok] = log_interval_prob(dist, hl[ok], hu[ok])
        ok &= np.isfinite(ll)
        if order == 0:
            return ll, None, None
        wl = np.zeros(n)
        wu = np.zeros(n)
        fl, fu = lo.fin & ok, hi.fin & ok
        wl[fl] = np.exp(dist.logpdf(hl[fl]) - ll[fl])
        wu[fu] = np.exp(dist.logpdf(hu[fu]) - ll[fu])
        S = hi.C * wu[:, None] - lo.C * wl[:, None]
        if order == 1:
            return ll, S, None
        gl = np.zeros(n)
        gu = np.zeros(n)
        gl[fl] = dist.log_density_ratio(hl[fl]) * wl[fl]
        gu[fu] = dist.log_density_ratio(hu[fu]) * wu[fu]
        F = -((hi.C.T * gu) @ hi.C - (lo.C.T * gl) @ lo.C) + S.T @ S
        return ll, S, F

    def evaluate(self, theta, order: int = 2):
        """Per-row log-likelihood plus (if ``order`` >= 1) per-row scores and the Fisher sum.

        Returns ``(ll_rows, score_rows, fisher)``; entries beyond ``order``
        are None.  Rows with an infeasible parameter have ll = -inf.
        """
        theta = np.asarray(theta, dtype=float)
        P = self.model.dim
        ll = np.zeros(self.n)
        S = np.zeros((self.n, P)) if order >= 1 else None
        F = np.zeros((P, P)) if order >= 2 else None

        if len(self.exact_idx):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                l, s, f = self._exact_terms(theta, order)
            ll[self.exact_idx] = l
            if s is not None:
                S[self.exact_idx] = s
            if f is not None:
                F += f
        if len(self.cens_idx):
            l, s, f = self._interval_terms(self.cens_lo, self.cens_hi, theta, order)
            ll[self.cens_idx] = l
            if s is not None:
                S[self.cens_idx] = s
            if f is not None:
                F += f
        if len(self.trunc_idx):
            l, s, f = self._interval_terms(self.trunc_lo, self.trunc_hi, theta, order)
            ll[self.trunc_idx] -= l
            if s is not None:
                S[self.trunc_idx] -= s
            if f is not None:
                F -= f
        if order >= 1 and not np.all(np.isfinite(ll)):
            bad = int(np.flatnonzero(~np.isfinite(ll))[0])
            raise LikelihoodError("log-likelihood is not finite", bad)
        return ll, S, F

    # -- reducers --------------------------------------------------------------

    def contributions(self, theta) -> np.ndarray:
        return self.evaluate(theta, 0)[0]

    def loglik(self, theta) -> float:
        ll = self.contributions(theta)
        if not np.all(np.isfinite(ll)):
            return -math.inf
        return math.fsum(ll)

    def score(self, theta) -> np.ndarray:
        _, S, _ = self.evaluate(theta, 1)
        return S.sum(axis=0)

    def fisher(self, theta) -> np.ndarray:
        F = self.evaluate(theta, 2)[2]
        return 0.5 * (F + F.T)

    def all(self, theta):
        """(loglik, score, fisher) in one pass; loglik is -inf if infeasible."""
        try:
            ll, S, F = self.evaluate(theta, 2)
        except LikelihoodError:
            return -math.inf, None, None
        return math.fsum(ll), S.sum(axis=0), 0.5 * (F + F.T)


# -- single observation conveniences ------------------------------------------------


def _single(model, status: ResponseStatus, x):
    x = {} if x is None else {k: [float(v)] for k, v in dict(x).items()}
    return Likelihood(model, Dataset.from_statuses([status], x))


def loglik_obs(model: TransformationModel, theta, status: ResponseStatus, x=None) -> float:
    return _single(model, status, x).loglik(theta)


def score_obs(model: TransformationModel, theta, status: ResponseStatus, x=None) -> np.ndarray:
    return _single(model, status, x).score(theta)


def fisher_obs(model: TransformationModel, theta, status: ResponseStatus, x=None) -> np.ndarray:
    return _single(model, status, x).fisher(theta)


# -- totals ------------------------------------------------------------------------------


def _threads(n_jobs: int | None) -> int:
    cap = int(os.environ.get("MLT_THREADS", "0") or 0)
    n = n_jobs or 1
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def _fsum_stack(parts: list[np.ndarray]) -> np.ndarray:
    """Elementwise compensated sum of equally shaped arrays, in list order."""
    stack = np.stack(parts)
    flat = stack.reshape(len(parts), -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(stack.shape[1:])


def total(model: TransformationModel, theta, data: Dataset, reducer: str = "loglik", n_jobs: int | None = None):
    """Sum of per-observation log-likelihood, score or Fisher contributions.

    Rows are split into ``n_jobs`` contiguous chunks evaluated on a thread
    pool (capped by the ``MLT_THREADS`` environment variable); loglik and
    score are reduced with compensated summation over the per-row values,
    so the result does not depend on the chunking.
    """
    if reducer not in ("loglik", "score", "fisher"):
        raise ValueError(f"unknown reducer {reducer!r}")
    theta = np.asarray(theta, dtype=float)
    P = model.dim
    n = len(data)
    if n == 0:
        return {"loglik": 0.0, "score": np.zeros(P), "fisher": np.zeros((P, P))}[reducer]
    jobs = min(_threads(n_jobs), n)
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    chunks = [np.arange(bounds[i], bounds[i + 1]) for i in range(jobs)]
    order = {"loglik": 0, "score": 1, "fisher": 2}[reducer]

    def work(idx):
        lik = Likelihood(model, data.subset(idx))
        ll = lik.contributions(theta) if order == 0 else None
        if ll is not None:
            if not np.all(np.isfinite(ll)):
                bad = int(np.flatnonzero(~np.isfinite(ll))[0])
                raise LikelihoodError("log-likelihood is not finite", int(idx[bad]))
            return ll
        try:
            return lik.evaluate(theta, order)
        except LikelihoodError as e:
            raise LikelihoodError("log-likelihood is not finite", int(idx[e.row])) from None

    if jobs == 1:
        results = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(work, chunks))

    if reducer == "loglik":
        return math.fsum(np.concatenate(results))
    if reducer == "score":
        S = np.concatenate([r[1] for r in results])
        return np.array([math.fsum(S[:, j]) for j in range(P)])
    F = _fsum_stack([r[2] for r in results])
    return 0.5 * (F + F.T)
