"""Basis functions a(y), b(x) and their joint compositions c(y, x).

A basis maps a response value (and a covariate row) to a design vector.
Response bases additionally provide the derivative in y and a linear
constraint matrix A such that A theta > 0 makes h(y) = c(y, x)' theta
strictly increasing in y.

Bases are frozen dataclasses and evaluate vectorised: ``y`` is an array of
length n, ``x`` a mapping from covariate name to arrays of length n.  The
output is an (n, dim) design matrix.

Kronecker products are vectorised with the left index varying slowest, so
for ``Kronecker(a, b)`` the coefficient of a_j(y) b_k(x) sits at position
``j * b.dim + k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import comb

# largest joint-basis dimension a composition may produce
MAX_DIM = 10_000
# strictness margin turning A theta > 0 into A theta >= EPS_C
EPS_C = 1e-8


class BasisDomainError(ValueError):
    """A response value lies outside the support of the basis."""


class ConfigurationError(ValueError):
    """An invalid basis composition was requested."""


class _UpperTail:
    """Tagged value standing for h(y_K) = +inf in discrete models."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UPPER_INF"


UPPER_INF = _UpperTail()


@dataclass(frozen=True)
class Support:
    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("support bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"support requires lower < upper, got {self.lower}, {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def rescale(self, y):
        return (np.asarray(y, dtype=float) - self.lower) / self.width

    @classmethod
    def from_data(cls, y, frac: float = 1e-3) -> "Support":
        """[min - d, max + d] with d = frac * range over the finite values of y."""
        y = np.asarray(y, dtype=float)
        y = y[np.isfinite(y)]
        if y.size == 0:
            raise ValueError("cannot derive a support from no finite values")
        lo, hi = float(y.min()), float(y.max())
        if lo == hi:
            raise ValueError("cannot derive a support from a single unique value")
        d = frac * (hi - lo)
        return cls(lo - d, hi + d)


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Linear constraints A theta >= eps (the closed version of A theta > 0)."""

    A: np.ndarray
    eps: float = EPS_C

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def margin(self, theta) -> np.ndarray:
        return self.A @ np.asarray(theta, dtype=float)

    def feasible(self, theta, eps: float | None = None) -> bool:
        eps = self.eps if eps is None else eps
        return bool(np.all(self.margin(theta) >= eps)) if self.n_constraints else True


def _empty_rows(dim: int) -> np.ndarray:
    return np.zeros((0, dim))


def diff_matrix(p: int) -> np.ndarray:
    """First-order difference matrix D_p with p - 1 rows of (-1, +1)."""
    D = np.zeros((max(p - 1, 0), p))
    for i in range(p - 1):
        D[i, i] = -1.0
        D[i, i + 1] = 1.0
    return D


class Basis:
    """Common interface; see the module docstring."""

    dim: int
    var: str | None = None

    @property
    def is_response(self) -> bool:
        return self.var is None

    def _input(self, y, x):
        if self.var is None:
            return np.atleast_1d(np.asarray(y, dtype=float))
        if x is None or self.var not in x:
            raise KeyError(f"covariate {self.var!r} missing")
        return np.atleast_1d(np.asarray(x[self.var], dtype=float))

    def evaluate(self, y, x: Mapping[str, np.ndarray] | None = None, clamp: bool = False) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, y, x: Mapping[str, np.ndarray] | None = None, clamp: bool = False) -> np.ndarray:
        """Derivative of the basis with respect to the response y."""
        return np.zeros((len(np.atleast_1d(y)), self.dim))

    def constraint_matrix(self) -> np.ndarray:
        return _empty_rows(self.dim)

    def monotone_rows(self) -> np.ndarray:
        """Covariate-basis values at which monotonicity in y must hold."""
        if self.is_response:
            raise ConfigurationError("monotone_rows is defined for covariate bases only")
        return np.eye(self.dim)

    def unit_weights(self) -> np.ndarray | None:
        """A vector w with b(x)' w = 1 for all x, if one exists."""
        return None

    def names(self) -> list[str]:
        return [f"c{i}" for i in range(self.dim)]

    def constraints(self, eps: float = EPS_C) -> ConstraintSystem:
        return ConstraintSystem(self.constraint_matrix(), eps)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Bernstein(Basis):
    """Bernstein polynomial basis of order M on a finite support.

    With ``floor=True`` the basis is evaluated at floor(y), giving a step
    function suited to count responses.
    """

    order: int
    support: Support
    var: str | None = None
    floor: bool = False

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("Bernstein order must be >= 0")

    @property
    def dim(self) -> int:
        return self.order + 1

    def _unit(self, y, x, clamp):
        t = self._input(y, x)
        if self.floor:
            t = np.floor(t)
        u = self.support.rescale(t)
        tol = 1e-12
        if clamp:
            return np.clip(u, 0.0, 1.0)
        if np.any((u < -tol) | (u > 1 + tol)) or np.any(np.isnan(u)):
            raise BasisDomainError(
                f"value outside Bernstein support [{self.support.lower}, {self.support.upper}]"
            )
        return np.clip(u, 0.0, 1.0)

    @staticmethod
    def _bpoly(u, M):
        m = np.arange(M + 1)
        u = u[:, None]
        return comb(M, m) * u**m * (1.0 - u) ** (M - m)

    def evaluate(self, y, x=None, clamp=False):
        return self._bpoly(self._unit(y, x, clamp), self.order)

    def deriv(self, y, x=None, clamp=False):
        u = self._unit(y, x, clamp)
        n = u.shape[0]
        M = self.order
        if not self.is_response or self.floor or M == 0:
            return np.zeros((n, self.dim))
        low = self._bpoly(u, M - 1) * (M / self.support.width)
        out = np.zeros((n, M + 1))
        # d/du sum_m theta_m b_{m,M} = M sum_m (theta_{m+1} - theta_m) b_{m,M-1}
        out[:, 1:] += low
        out[:, :-1] -= low
        return out

    def constraint_matrix(self):
        if not self.is_response:
            return _empty_rows(self.dim)
        return diff_matrix(self.dim)

    def unit_weights(self):
        return np.ones(self.dim)

    def names(self):
        v = self.var or "y"
        return [f"Bs{m + 1}({v})" for m in range(self.dim)]

    def to_dict(self):
        return {
            "kind": "bernstein",
            "order": self.order,
            "support": [self.support.lower, self.support.upper],
            "var": self.var,
            "floor": self.floor,
        }


@dataclass(frozen=True)
class Discrete(Basis):
    """Unit-vector basis e_{K-1}(k) for an ordered response with K levels.

    Inputs are level indices 1..K-1; the last level is the upper-tail
    sentinel and never reaches ``evaluate``.
    """

    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a discrete response needs at least two levels")

    @property
    def dim(self) -> int:
        return self.levels - 1

    def evaluate(self, y, x=None, clamp=False):
        k = self._input(y, x)
        if clamp:
            k = np.clip(k, 1, self.levels - 1)
        ki = k.astype(int)
        if np.any(ki != k) or np.any((ki < 1) | (ki >= self.levels)):
            raise BasisDomainError(f"level index outside 1..{self.levels - 1}")
        out = np.zeros((k.shape[0], self.dim))
        out[np.arange(k.shape[0]), ki - 1] = 1.0
        return out

    def constraint_matrix(self):
        return diff_matrix(self.dim)

    def names(self):
        return [f"e{k}" for k in range(1, self.levels)]

    def to_dict(self):
        return {"kind": "discrete", "levels": self.levels}


@dataclass(frozen=True)
class Linear(Basis):
    """(1, t) or (t,) with t = y or log(y); on a covariate when ``var`` is set."""

    var: str | None = None
    log: bool = False
    intercept: bool = True

    @property
    def dim(self) -> int:
        return 2 if self.intercept else 1

    def _t(self, y, x):
        t = self._input(y, x)
        if self.log:
            if np.any(t <= 0):
                raise BasisDomainError("log-linear basis requires positive values")
            return np.log(t)
        return t

    def evaluate(self, y, x=None, clamp=False):
        t = self._t(y, x)
        cols = [np.ones_like(t), t] if self.intercept else [t]
        return np.column_stack(cols)

    def deriv(self, y, x=None, clamp=False):
        t = self._input(y, x)
        if not self.is_response:
            return np.zeros((t.shape[0], self.dim))
        d = 1.0 / t if self.log else np.ones_like(t)
        cols = [np.zeros_like(t), d] if self.intercept else [d]
        return np.column_stack(cols)

    def constraint_matrix(self):
        if not self.is_response:
            return _empty_rows(self.dim)
        A = np.zeros((1, self.dim))
        A[0, -1] = 1.0
        return A

    def unit_weights(self):
        if not self.intercept:
            return None
        w = np.zeros(self.dim)
        w[0] = 1.0
        return w

    def names(self):
        v = self.var or "y"
        t = f"log({v})" if self.log else v
        return ["(Intercept)", t] if self.intercept else [t]

    def to_dict(self):
        return {"kind": "linear", "var": self.var, "log": self.log, "intercept": self.intercept}


@dataclass(frozen=True)
class Intercept(Basis):
    """The constant basis b(x) = 1."""

    @property
    def dim(self) -> int:
        return 1

    @property
    def is_response(self) -> bool:
        return False

    def evaluate(self, y, x=None, clamp=False):
        return np.ones((len(np.atleast_1d(y)), 1))

    def monotone_rows(self):
        return np.ones((1, 1))

    def unit_weights(self):
        return np.ones(1)

    def names(self):
        return ["(Intercept)"]

    def to_dict(self):
        return {"kind": "intercept"}


@dataclass(frozen=True)
class Covariates(Basis):
    """Linear covariate basis (1, x_1, ..., x_Q) or (x_1, ..., x_Q).

    ``bounds`` optionally declares a box for the covariates; it is used to
    place monotonicity constraints of Kronecker terms at the corners of the
    box (sufficient because the basis is linear in x).
    """

    columns: tuple[str, ...]
    intercept: bool = False
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.bounds is not None:
            b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(b) != len(self.columns):
                raise ValueError("one (lower, upper) pair per covariate column is required")
            object.__setattr__(self, "bounds", b)

    @property
    def dim(self) -> int:
        return len(self.columns) + int(self.intercept)

    @property
    def is_response(self) -> bool:
        return False

    def evaluate(self, y, x=None, clamp=False):
        n = len(np.atleast_1d(y))
        cols = [np.ones(n)] if self.intercept else []
        for c in self.columns:
            if x is None or c not in x:
                raise KeyError(f"covariate {c!r} missing")
            v = np.broadcast_to(np.asarray(x[c], dtype=float), (n,))
            cols.append(v)
        if not cols:
            return np.zeros((n, 0))
        return np.column_stack(cols)

    def monotone_rows(self):
        if self.bounds is None:
            return np.eye(self.dim)
        corners = np.array(list(itertools.product(*self.bounds)), dtype=float)
        corners = corners.reshape(-1, len(self.columns))
        if self.intercept:
            corners = np.column_stack([np.ones(len(corners)), corners])
        return corners

    def unit_weights(self):
        if not self.intercept:
            return None
        w = np.zeros(self.dim)
        w[0] = 1.0
        return w

    def names(self):
        return (["(Intercept)"] if self.intercept else []) + list(self.columns)

    def to_dict(self):
        return {
            "kind": "covariates",
            "columns": list(self.columns),
            "intercept": self.intercept,
            "bounds": None if self.bounds is None else [list(b) for b in self.bounds],
        }


@dataclass(frozen=True)
class ZeroIndicator(Basis):
    """1(floor(y) == 0), the excess-zero block of hurdle count models."""

    var: str | None = None

    @property
    def dim(self) -> int:
        return 1

    def evaluate(self, y, x=None, clamp=False):
        t = self._input(y, x)
        return (np.floor(t) == 0).astype(float)[:, None]

    def names(self):
        return ["1(y=0)"]

    def to_dict(self):
        return {"kind": "zero", "var": self.var}


@dataclass(frozen=True)
class Concat(Basis):
    """c = (a_1', ..., a_J')'; constraints act block-wise."""

    parts: tuple[Basis, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ConfigurationError("concat needs at least one part")
        if self.dim > MAX_DIM:
            raise ConfigurationError(f"joint basis dimension {self.dim} exceeds cap {MAX_DIM}")

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    @property
    def is_response(self) -> bool:
        return any(p.is_response for p in self.parts)

    def evaluate(self, y, x=None, clamp=False):
        return np.hstack([p.evaluate(y, x, clamp) for p in self.parts])

    def deriv(self, y, x=None, clamp=False):
        return np.hstack([p.deriv(y, x, clamp) for p in self.parts])

    def constraint_matrix(self):
        blocks = [p.constraint_matrix() for p in self.parts]
        rows = sum(b.shape[0] for b in blocks)
        A = np.zeros((rows, self.dim))
        r = c = 0
        for b, p in zip(blocks, self.parts):
            A[r:r + b.shape[0], c:c + p.dim] = b
            r += b.shape[0]
            c += p.dim
        return A

    def monotone_rows(self):
        if self.is_response:
            raise ConfigurationError("monotone_rows is defined for covariate bases only")
        return np.eye(self.dim)

    def unit_weights(self):
        for i, p in enumerate(self.parts):
            w = p.unit_weights()
            if w is not None:
                out = np.zeros(self.dim)
                start = sum(q.dim for q in self.parts[:i])
                out[start:start + p.dim] = w
                return out
        return None

    def names(self):
        return [n for p in self.parts for n in p.names()]

    def to_dict(self):
        return {"kind": "concat", "children": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class Kronecker(Basis):
    """c = a (x) b, evaluated row-wise with the index of ``left`` varying slowest."""

    left: Basis
    right: Basis

    def __post_init__(self):
        if self.left.is_response and self.right.is_response:
            raise ConfigurationError("Kronecker product of two response bases is not supported")
        if self.dim > MAX_DIM:
            raise ConfigurationError(f"joint basis dimension {self.dim} exceeds cap {MAX_DIM}")

    @property
    def dim(self) -> int:
        return self.left.dim * self.right.dim

    @property
    def is_response(self) -> bool:
        return self.left.is_response or self.right.is_response

    @staticmethod
    def _rowkron(A, B):
        n = A.shape[0]
        return (A[:, :, None] * B[:, None, :]).reshape(n, -1)

    def evaluate(self, y, x=None, clamp=False):
        return self._rowkron(self.left.evaluate(y, x, clamp), self.right.evaluate(y, x, clamp))

    def deriv(self, y, x=None, clamp=False):
        a = self.left.evaluate(y, x, clamp)
        b = self.right.evaluate(y, x, clamp)
        out = None
        if self.left.is_response:
            out = self._rowkron(self.left.deriv(y, x, clamp), b)
        if self.right.is_response:
            d = self._rowkron(a, self.right.deriv(y, x, clamp))
            out = d if out is None else out + d
        if out is None:
            out = np.zeros_like(self._rowkron(a, b))
        return out

    def constraint_matrix(self):
        if self.left.is_response:
            A = self.left.constraint_matrix()
            return np.kron(A, self.right.monotone_rows()) if A.size else _empty_rows(self.dim)
        if self.right.is_response:
            A = self.right.constraint_matrix()
            return np.kron(self.left.monotone_rows(), A) if A.size else _empty_rows(self.dim)
        return _empty_rows(self.dim)

    def monotone_rows(self):
        if self.is_response:
            raise ConfigurationError("monotone_rows is defined for covariate bases only")
        return np.kron(self.left.monotone_rows(), self.right.monotone_rows())

    def unit_weights(self):
        wl, wr = self.left.unit_weights(), self.right.unit_weights()
        if wl is None or wr is None:
            return None
        return np.kron(wl, wr)

    def names(self):
        return [f"{a}:{b}" for a in self.left.names() for b in self.right.names()]

    def to_dict(self):
        return {"kind": "kronecker", "children": [self.left.to_dict(), self.right.to_dict()]}


# -- response-basis helpers ---------------------------------------------------


def response_parts(basis: Basis) -> list[Basis]:
    """All response-dependent leaves of a composed basis."""
    if isinstance(basis, Concat):
        return [q for p in basis.parts for q in response_parts(p)]
    if isinstance(basis, Kronecker):
        return response_parts(basis.left) + response_parts(basis.right)
    return [basis] if basis.is_response else []


def compose(mode: str, parts: Sequence[Basis]) -> Basis:
    parts = list(parts)
    if not parts:
        raise ConfigurationError("compose needs at least one part")
    if mode == "concat":
        return Concat(tuple(parts))
    if mode == "kronecker":
        if len(parts) != 2:
            raise ConfigurationError("kronecker composition takes exactly two parts")
        return Kronecker(parts[0], parts[1])
    raise ConfigurationError(f"unknown composition mode {mode!r}")


def constraints_for(basis: Basis, eps: float = EPS_C) -> ConstraintSystem:
    return basis.constraints(eps)


# -- scalar convenience wrappers ------------------------------------------------


def bernstein_eval(y: float, order: int, support: Support, clamp: bool = False) -> np.ndarray:
    return Bernstein(order, support).evaluate([y], clamp=clamp)[0]


def bernstein_deriv(y: float, order: int, support: Support, clamp: bool = False) -> np.ndarray:
    return Bernstein(order, support).deriv([y], clamp=clamp)[0]


def discrete_eval(k: int, levels: int):
    """e_{K-1}(k) for k < K, the ``UPPER_INF`` sentinel for k == K."""
    if not 1 <= k <= levels:
        raise BasisDomainError(f"level {k} outside 1..{levels}")
    if k == levels:
        return UPPER_INF
    return Discrete(levels).evaluate([k])[0]


# -- JSON round trip -------------------------------------------------------------


def from_dict(d: Mapping) -> Basis:
    kind = d["kind"]
    if kind == "bernstein":
        lo, hi = d["support"]
        return Bernstein(int(d["order"]), Support(float(lo), float(hi)), d.get("var"), bool(d.get("floor", False)))
    if kind == "discrete":
        return Discrete(int(d["levels"]))
    if kind == "linear":
        return Linear(d.get("var"), bool(d.get("log", False)), bool(d.get("intercept", True)))
    if kind == "intercept":
        return Intercept()
    if kind == "covariates":
        b = d.get("bounds")
        return Covariates(tuple(d["columns"]), bool(d.get("intercept", False)),
                          None if b is None else tuple(tuple(x) for x in b))
    if kind == "zero":
        return ZeroIndicator(d.get("var"))
    if kind == "concat":
        return Concat(tuple(from_dict(c) for c in d["children"]))
    if kind == "kronecker":
        left, right = d["children"]
        return Kronecker(from_dict(left), from_dict(right))
    raise ValueError(f"unknown basis kind {kind!r}")
