"""Maximisation of a concave objective under linear inequality constraints.

``maximize`` runs an augmented Lagrangian (PHR) outer loop over the
constraint multipliers with a damped Newton inner solver (analytic Hessian)
or BFGS when no Hessian is supplied.  Infeasible trial points, where the
objective evaluates to -inf, are rejected by the inner line search.  The
outer loop stops close to the optimum; a final active-set Newton phase then
returns a point that satisfies A x >= b exactly and refines the KKT
conditions to tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    max_outer: int = 100
    max_inner: int = 500
    gtol: float = 1e-8
    penalty_growth: float = 10.0
    penalty_init: float = 1.0
    # set to use BFGS even when a Hessian is available
    quasi_newton: bool = False

    def __post_init__(self):
        for name in ("max_outer", "max_inner", "gtol", "penalty_growth", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class KKTReport:
    stationarity: float
    complementarity: float
    feasibility: float  # min(A x - b); >= 0 means feasible
    multipliers: np.ndarray

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.complementarity, max(0.0, -self.feasibility))


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    active: np.ndarray
    kkt: KKTReport
    message: str = ""
    history: list = field(default_factory=list)

    @property
    def kkt_residual(self) -> float:
        return self.kkt.residual


# -- helpers -------------------------------------------------------------------------


# roundoff allowance on A x >= b; callers keep a margin above their true bound
_FEAS_TOL = 1e-12


def _null_space(A: np.ndarray, n: int) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def _solve_pd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H p = g for symmetric H, shifting the spectrum if H is not positive definite."""
    H = 0.5 * (H + H.T)
    shift = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))) if H.size else 1.0)
    for _ in range(60):
        try:
            L = np.linalg.cholesky(H + shift * np.eye(len(H)))
            return np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            shift = max(2.0 * shift, 1e-10 * scale)
    return g / scale


def kkt_check(x, gradient, A, b, active_tol: float = 1e-7) -> KKTReport:
    """KKT residuals for maximising f subject to A x >= b.

    ``gradient`` is the gradient of f at x.  Multipliers are estimated by
    non-negative least squares on the constraints that are active within
    ``active_tol``.
    """
    from scipy.optimize import nnls

    x = np.asarray(x, float)
    g = np.asarray(gradient, float)
    A = np.atleast_2d(np.asarray(A, float)).reshape(-1, len(x))
    b = np.asarray(b, float).reshape(-1)
    slack = A @ x - b if A.shape[0] else np.zeros(0)
    lam = np.zeros(A.shape[0])
    act = np.flatnonzero(slack <= active_tol * (1.0 + np.abs(b)))
    if act.size:
        # maximisation: grad f + A_act' lam = 0 with lam >= 0
        lam_act, _ = nnls(A[act].T, -g)
        lam[act] = lam_act
    stat = g + A.T @ lam if A.shape[0] else g
    return KKTReport(
        stationarity=float(np.max(np.abs(stat))) if stat.size else 0.0,
        complementarity=float(np.max(np.abs(lam * slack))) if lam.size else 0.0,
        feasibility=float(np.min(slack)) if slack.size else math.inf,
        multipliers=lam,
    )


# -- inner solver ---------------------------------------------------------------------------


def _armijo(phi, x, fx, gx, p, max_halvings=60):
    """Backtracking on a minimisation objective; +inf values count as rejection."""
    slope = float(gx @ p)
    if slope >= 0:
        p = -gx
        slope = -float(gx @ gx)
    t = 1.0
    for _ in range(max_halvings):
        xn = x + t * p
        fn = phi(xn)
        if np.isfinite(fn) and fn <= fx + 1e-4 * t * slope:
            return xn, fn, t
        t *= 0.5
    return x, fx, 0.0


def _minimize(phi, grad, hess, x, tol, max_iter, use_bfgs):
    """Unconstrained minimisation of phi from x (phi(x) finite)."""
    fx = phi(x)
    gx = grad(x)
    Hinv = None
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(gx)) <= tol:
            break
        if use_bfgs or hess is None:
            if Hinv is None:
                Hinv = np.eye(len(x)) / max(1.0, float(np.linalg.norm(gx)))
            p = -Hinv @ gx
        else:
            p = -_solve_pd(hess(x), gx)
        xn, fn, t = _armijo(phi, x, fx, gx, p)
        if t == 0.0:
            break
        gn = grad(xn)
        if use_bfgs or hess is None:
            s, yv = xn - x, gn - gx
            sy = float(s @ yv)
            if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
                rho = 1.0 / sy
                I = np.eye(len(x))
                Hinv = (I - rho * np.outer(s, yv)) @ Hinv @ (I - rho * np.outer(yv, s)) + rho * np.outer(s, s)
        small_step = abs(fx - fn) <= 1e-15 * max(1.0, abs(fx))
        x, fx, gx = xn, fn, gn
        if small_step and np.max(np.abs(gx)) <= 1e3 * tol:
            break
    return x, fx, gx, it


# -- active-set phase --------------------------------------------------------------------------


def _active_set_newton(f, grad, hess, A, b, x, work, tol, max_iter):
    """Minimise f subject to A x >= b from a feasible x; ``work`` is the initial working set."""
    n = len(x)
    W = sorted(set(int(i) for i in work))
    fx = f(x)
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(x)
        AW = A[W] if W else np.zeros((0, n))
        Z = _null_space(AW, n)
        gz = Z.T @ g
        if np.max(np.abs(gz), initial=0.0) <= tol:
            if not W:
                break
            lam, *_ = np.linalg.lstsq(AW.T, g, rcond=None)
            j = int(np.argmin(lam))
            if lam[j] >= -tol:
                break
            W.pop(j)
            continue
        H = hess(x) if hess is not None else _fd_hessian(grad, x)
        pz = -_solve_pd(Z.T @ H @ Z, gz)
        p = Z @ pz
        # ratio test against constraints outside the working set
        tmax, block = 1.0, None
        if A.shape[0]:
            Ap = A @ p
            slack = A @ x - b
            for i in np.flatnonzero(Ap < -1e-14 * np.linalg.norm(p)):
                if i in W:
                    continue
                ti = max(slack[i], 0.0) / -Ap[i]
                if ti < tmax:
                    tmax, block = ti, int(i)
        t = tmax
        accepted = False
        for _ in range(60):
            xn = x + t * p
            fn = f(xn)
            if np.isfinite(fn) and fn <= fx + 1e-4 * t * float(g @ p):
                accepted = True
                break
            t *= 0.5
            block = None
        if not accepted:
            break
        if A.shape[0]:
            # clip roundoff so the iterate stays exactly feasible
            sl = A @ xn - b
            if np.any(sl < -_FEAS_TOL * (1 + np.abs(b))):
                xn = _restore(A, b, xn, x)
                fn = f(xn)
        x, fx = xn, fn
        if block is not None:
            W.append(block)
            W.sort()
    return x, fx, W, it


def _restore(A, b, x, anchor):
    """Move x towards the feasible ``anchor`` just enough to satisfy A x >= b."""
    sx = A @ x - b
    sa = A @ anchor - b
    bad = sx < 0
    if not np.any(bad):
        return x
    denom = sa[bad] - sx[bad]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = float(np.min(np.where(denom > 0, sa[bad] / denom, 0.0)))
    t = min(max(t, 0.0), 1.0)
    return anchor + t * (x - anchor)


def _fd_hessian(grad, x, eps=1e-6):
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps * max(1.0, abs(x[i]))
        H[:, i] = (grad(x + e) - grad(x - e)) / (2 * e[i])
    return 0.5 * (H + H.T)


# -- driver ---------------------------------------------------------------------------------------


def maximize(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    A,
    b,
    x0,
    config: OptimizerConfig | None = None,
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
    active_tol: float = 1e-7,
) -> OptimResult:
    """Maximise ``fun`` subject to ``A x >= b`` starting from feasible ``x0``.

    ``hess`` is the Hessian of ``fun`` (negative semidefinite for concave
    problems).  ``fun`` may return -inf outside its domain.
    """
    cfg = config or OptimizerConfig()
    x0 = np.asarray(x0, dtype=float).copy()
    n = len(x0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = A.shape[0]

    f0 = fun(x0)
    if not np.isfinite(f0):
        raise OptimizationError("objective is not finite at the initial value")
    if m and np.any(A @ x0 < b):
        raise OptimizationError("initial value violates the constraints")

    # minimisation form
    def f(x):
        v = fun(x)
        return -v if np.isfinite(v) else math.inf

    def g(x):
        return -np.asarray(grad(x), dtype=float)

    H = None if hess is None else (lambda x: -np.asarray(hess(x), dtype=float))
    use_bfgs = cfg.quasi_newton or H is None

    x = x0.copy()
    lam = np.zeros(m)
    rho = cfg.penalty_init
    history = [f0]
    viol_prev = math.inf
    outer = 0
    inner_tol = max(cfg.gtol, 1e-6)
    for outer in range(1, cfg.max_outer + 1 if m else 2):
        if m:
            def phi(z, lam=lam, rho=rho):
                fz = f(z)
                if not np.isfinite(fz):
                    return math.inf
                c = A @ z - b
                q = np.minimum(c, lam / rho)
                return fz - float(lam @ q) + 0.5 * rho * float(q @ q)

            def dphi(z, lam=lam, rho=rho):
                c = A @ z - b
                return g(z) - A.T @ np.maximum(lam - rho * c, 0.0)

            def d2phi(z, lam=lam, rho=rho):
                c = A @ z - b
                act = (lam - rho * c) > 0
                return H(z) + rho * A[act].T @ A[act]

            x, _, _, _ = _minimize(phi, dphi, None if use_bfgs else d2phi, x, inner_tol, cfg.max_inner, use_bfgs)
            c = A @ x - b
            lam = np.maximum(lam - rho * c, 0.0)
            viol = float(np.max(np.abs(np.minimum(c, lam / rho)), initial=0.0))
            history.append(-f(x) if np.isfinite(f(x)) else -math.inf)
            kk = g(x) - A.T @ lam
            if viol <= 1e-7 and np.max(np.abs(kk)) <= inner_tol:
                break
            if viol > 0.25 * viol_prev:
                rho *= cfg.penalty_growth
            viol_prev = viol
        else:
            x, _, _, _ = _minimize(f, g, H, x, cfg.gtol, cfg.max_inner, use_bfgs)
            history.append(-f(x))

    # back inside the feasible set, then polish on the active set
    if (m and np.any(A @ x < b)) or not np.isfinite(f(x)):
        x = _restore(A, b, x, x0) if m else x0
        if not np.isfinite(f(x)):
            x = x0.copy()
    tol_act = 1e-6
    work = np.flatnonzero((A @ x - b) <= tol_act * (1 + np.abs(b))) if m else []
    if m:
        work = [i for i in work if lam[i] > 0 or (A[i] @ x - b[i]) <= 1e-10]
        x = _snap(A, b, x, work, x0)
    x, fx, W, it = _active_set_newton(f, g, H, A, b, x, work, cfg.gtol, cfg.max_inner)
    if m and np.any(A @ x - b < -_FEAS_TOL * (1 + np.abs(b))):
        x = _restore(A, b, x, x0)
        fx = f(x)

    fval = -fx
    if fval < f0:
        # never return something worse than the start
        x, fval = x0.copy(), f0
    history.append(fval)
    rep = kkt_check(x, grad(x), A, b)
    converged = rep.stationarity <= cfg.gtol and rep.complementarity <= cfg.gtol
    converged = bool(converged and (not m or rep.feasibility >= -_FEAS_TOL * (1 + np.max(np.abs(b)))))
    active = np.flatnonzero(A @ x - b <= active_tol) if m else np.zeros(0, int)
    return OptimResult(
        x=x, fun=fval, converged=converged, iterations=outer + it, active=active, kkt=rep,
        message="converged" if converged else "stationarity tolerance not reached", history=history,
    )


def _snap(A, b, x, work, anchor):
    """Project x onto {A_W x = b_W} and keep the remaining constraints satisfied."""
    if len(work) == 0:
        return _restore(A, b, x, anchor)
    AW = A[work]
    r = AW @ x - b[work]
    dx, *_ = np.linalg.lstsq(AW, r, rcond=None)
    xs = x - dx
    if np.all(A @ xs - b >= -1e-15 * (1 + np.abs(b))):
        sl = A @ xs - b
        if np.any(sl < 0):
            return _restore(A, b, xs, anchor)
        return xs
    return _restore(A, b, x, anchor)
