"""Error distributions F_Z for transformation models.

Each distribution is parameter-free and exposes the quantities the score and
Fisher information need: log-cdf, log-survivor, log-density, and the ratios
f'/f and f''/f.  Everything is vectorised over numpy arrays and extended to
z = +-inf where the limits exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

KINDS = ("normal", "logistic", "mev", "exp")

# beyond this the normal cdf is 0 or 1 to double precision
_NORMAL_TAIL = 38.0


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of F_Z or F_Z^-1."""


def _as_array(z):
    return np.asarray(z, dtype=float)


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0, accurate near both ends."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x > -np.log(2.0)
    out[small] = np.log(-np.expm1(x[small]))
    out[~small] = np.log1p(-np.exp(x[~small]))
    return out


@dataclass(frozen=True)
class ErrorDistribution:
    """A standard error distribution: ``normal``, ``logistic``, ``mev`` or ``exp``.

    ``mev`` is the minimum extreme value distribution F(z) = 1 - exp(-exp(z))
    and ``exp`` the unit exponential F(z) = 1 - exp(-z) on z >= 0.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown error distribution {self.kind!r}; expected one of {KINDS}")

    # -- domain helpers -----------------------------------------------------

    @property
    def lower_bound(self) -> float:
        return 0.0 if self.kind == "exp" else -np.inf

    def _check_domain(self, z):
        if self.kind == "exp" and np.any(z < 0):
            raise DomainError("exponential F_Z evaluated at z < 0 (positivity constraint violated)")

    # -- distribution function ----------------------------------------------

    def cdf(self, z):
        z = _as_array(z)
        self._check_domain(z)
        if self.kind == "normal":
            out = special.ndtr(z)
            out = np.where(z < -_NORMAL_TAIL, 0.0, np.where(z > _NORMAL_TAIL, 1.0, out))
            return out
        if self.kind == "logistic":
            return special.expit(z)
        if self.kind == "mev":
            with np.errstate(over="ignore"):
                return -np.expm1(-np.exp(z))
        return -np.expm1(-z)

    def sf(self, z):
        z = _as_array(z)
        self._check_domain(z)
        if self.kind == "normal":
            out = special.ndtr(-z)
            return np.where(z > _NORMAL_TAIL, 0.0, np.where(z < -_NORMAL_TAIL, 1.0, out))
        if self.kind == "logistic":
            return special.expit(-z)
        if self.kind == "mev":
            with np.errstate(over="ignore"):
                return np.exp(-np.exp(z))
        return np.exp(-z)

    def logcdf(self, z):
        z = _as_array(z)
        self._check_domain(z)
        with np.errstate(over="ignore", divide="ignore"):
            if self.kind == "normal":
                return special.log_ndtr(z)
            if self.kind == "logistic":
                return -np.logaddexp(0.0, -z)
            if self.kind == "mev":
                return _log1mexp(-np.exp(z))
            return _log1mexp(-z)

    def logsf(self, z):
        z = _as_array(z)
        self._check_domain(z)
        with np.errstate(over="ignore"):
            if self.kind == "normal":
                return special.log_ndtr(-z)
            if self.kind == "logistic":
                return -np.logaddexp(0.0, z)
            if self.kind == "mev":
                return -np.exp(z)
            return -z

    # -- density and its derivatives ---------------------------------------

    def logpdf(self, z):
        z = _as_array(z)
        self._check_domain(z)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.kind == "normal":
                out = -0.5 * z * z - 0.5 * np.log(2.0 * np.pi)
            elif self.kind == "logistic":
                out = -np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z)))
            elif self.kind == "mev":
                out = z - np.exp(z)
            else:
                out = -z
        return np.where(np.isinf(z), -np.inf, out)

    def pdf(self, z):
        return np.exp(self.logpdf(z))

    def log_density_ratio(self, z):
        """f'(z) / f(z), the derivative of log f."""
        z = _as_array(z)
        if self.kind == "normal":
            return -z
        if self.kind == "logistic":
            return -np.tanh(z / 2.0)  # = 1 - 2 F(z)
        if self.kind == "mev":
            with np.errstate(over="ignore"):
                return -np.expm1(z)
        return -np.ones_like(z)

    def curvature_ratio(self, z):
        """f''(z) / f(z)."""
        z = _as_array(z)
        if self.kind == "normal":
            return z * z - 1.0
        if self.kind == "logistic":
            # 1 - 6 F (1 - F), with F (1 - F) written via the density
            return 1.0 - 6.0 * np.exp(self.logpdf(z))
        if self.kind == "mev":
            with np.errstate(over="ignore", invalid="ignore"):
                e = np.exp(z)
                return np.expm1(z) ** 2 - e
        return np.ones_like(z)

    # -- quantile -----------------------------------------------------------

    def quantile(self, p):
        p = _as_array(p)
        if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
            raise DomainError("quantile requires 0 < p < 1")
        if self.kind == "normal":
            return special.ndtri(p)
        if self.kind == "logistic":
            return special.logit(p)
        if self.kind == "mev":
            return np.log(-np.log1p(-p))
        return -np.log1p(-p)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.uniform(size=size)
        # u == 0 has probability 2**-53; keep the quantile finite regardless
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return self.quantile(u)

    @property
    def median(self) -> float:
        return float(self.quantile(0.5))


NORMAL = ErrorDistribution("normal")
LOGISTIC = ErrorDistribution("logistic")
MEV = ErrorDistribution("mev")
EXP = ErrorDistribution("exp")


def get(kind) -> ErrorDistribution:
    """Look up a distribution by name; common aliases are accepted."""
    if isinstance(kind, ErrorDistribution):
        return kind
    aliases = {
        "normal": "normal", "probit": "normal", "gaussian": "normal",
        "logistic": "logistic", "logit": "logistic", "sl": "logistic",
        "mev": "mev", "cloglog": "mev", "minextrval": "mev",
        "exp": "exp", "exponential": "exp",
    }
    try:
        return ErrorDistribution(aliases[str(kind).lower()])
    except KeyError:
        raise ValueError(f"unknown error distribution {kind!r}") from None


def log_interval_prob(dist: ErrorDistribution, lo, hi):
    """log(F(hi) - F(lo)) for lo < hi, computed without cancellation.

    ``lo`` may be -inf and ``hi`` may be +inf.  Works in the lower or upper
    tail by switching between the cdf and survivor representations.
    """
    lo = _as_array(lo)
    hi = _as_array(hi)
    lo, hi = np.broadcast_arrays(lo, hi)
    if dist.kind == "exp":
        # the -inf sentinel maps onto the left end of the exponential support
        lo = np.where(np.isneginf(lo), 0.0, lo)
    out = np.empty(lo.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        upper_tail = dist.cdf(lo) > 0.5
        a = ~upper_tail
        if np.any(a):
            lc_hi = dist.logcdf(hi[a])
            lc_lo = dist.logcdf(lo[a])
            out[a] = lc_hi + _log1mexp(np.minimum(lc_lo - lc_hi, 0.0))
        if np.any(upper_tail):
            ls_lo = dist.logsf(lo[upper_tail])
            ls_hi = dist.logsf(hi[upper_tail])
            out[upper_tail] = ls_lo + _log1mexp(np.minimum(ls_hi - ls_lo, 0.0))
    # equal endpoints or underflow on both ends give zero probability
    out[~(hi > lo) | np.isnan(out)] = -np.inf
    return out
