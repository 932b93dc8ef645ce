"""Observations under censoring and truncation, and CSV ingestion.

A response is stored as a pair of bounds (lower, upper] with -inf / +inf
marking open ends, a flag for exact observations (lower == upper == y), and
optional truncation bounds (tlower, tupper].  Ordered factors are stored as
level indices 1..K together with the level labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

INF = math.inf
KINDS = ("exact", "left", "right", "interval")


class DataError(ValueError):
    """Malformed data; ``row`` is the 0-based data row when known."""

    def __init__(self, msg: str, row: int | None = None):
        self.row = row
        super().__init__(msg if row is None else f"row {row}: {msg}")


@dataclass(frozen=True)
class ResponseStatus:
    """One response datum: exact, left-, right- or interval-censored, maybe truncated."""

    kind: str
    lower: float
    upper: float
    tlower: float = -INF
    tupper: float = INF

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown response kind {self.kind!r}")
        lo, hi = self.lower, self.upper
        if self.kind == "exact":
            if not (lo == hi and math.isfinite(lo)):
                raise DataError("exact observation needs one finite value")
        elif self.kind == "left":
            if not (lo == -INF and math.isfinite(hi)):
                raise DataError("left censoring needs (-inf, upper] with finite upper")
        elif self.kind == "right":
            if not (math.isfinite(lo) and hi == INF):
                raise DataError("right censoring needs (lower, +inf] with finite lower")
        elif not lo < hi:
            raise DataError(f"interval requires lower < upper, got ({lo}, {hi}]")
        if not self.tlower < self.tupper:
            raise DataError("truncation requires tlower < tupper")
        if self.kind == "exact":
            if not (self.tlower < lo <= self.tupper):
                raise DataError("exact value outside truncation interval")
        elif self.tlower > lo or hi > self.tupper:
            raise DataError("censoring interval not inside truncation interval")

    @classmethod
    def exact(cls, y, truncation=(-INF, INF)):
        return cls("exact", float(y), float(y), *map(float, truncation))

    @classmethod
    def left(cls, upper, truncation=(-INF, INF)):
        return cls("left", -INF, float(upper), *map(float, truncation))

    @classmethod
    def right(cls, lower, truncation=(-INF, INF)):
        return cls("right", float(lower), INF, *map(float, truncation))

    @classmethod
    def interval(cls, lower, upper, truncation=(-INF, INF)):
        """Classifies open ends, so interval(-inf, u) is left(u)."""
        lower, upper = float(lower), float(upper)
        if lower == -INF and upper != INF:
            return cls.left(upper, truncation)
        if upper == INF and lower != -INF:
            return cls.right(lower, truncation)
        return cls("interval", lower, upper, *map(float, truncation))

    @property
    def truncated(self) -> bool:
        return self.tlower > -INF or self.tupper < INF


def _classify(lower: float, upper: float, exact: bool) -> str:
    if exact:
        return "exact"
    if lower == -INF and upper != INF:
        return "left"
    if upper == INF and lower != -INF:
        return "right"
    return "interval"


@dataclass(frozen=True)
class LevelMap:
    """Bijection between ordered level labels and indices 1..K."""

    levels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels):
            raise DataError("duplicate factor levels")
        if len(self.levels) < 2:
            raise DataError("an ordered factor needs at least two levels")

    @property
    def K(self) -> int:
        return len(self.levels)

    def index(self, label) -> int:
        try:
            return self.levels.index(str(label)) + 1
        except ValueError:
            raise DataError(f"unknown factor level {label!r}") from None

    def label(self, k: int) -> str:
        return self.levels[k - 1]

    def interval(self, k: int) -> tuple[float, float]:
        """Category y_k as the censoring interval (y_{k-1}, y_k] in index space."""
        if not 1 <= k <= self.K:
            raise DataError(f"level index {k} outside 1..{self.K}")
        lo = -INF if k == 1 else float(k - 1)
        hi = INF if k == self.K else float(k)
        return lo, hi


def ordered_levels(levels: Sequence) -> LevelMap:
    return LevelMap(tuple(str(v) for v in levels))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented observations; build with the ``from_*`` constructors."""

    lower: np.ndarray
    upper: np.ndarray
    exact: np.ndarray
    tlower: np.ndarray
    tupper: np.ndarray
    x: Mapping[str, np.ndarray] = field(default_factory=dict)
    levels: LevelMap | None = None
    response: str = "y"

    def __post_init__(self):
        n = len(self.lower)
        for name in ("upper", "exact", "tlower", "tupper"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name} has wrong length")
        for k, v in self.x.items():
            if len(v) != n:
                raise DataError(f"covariate {k!r} has wrong length")
            if np.any(~np.isfinite(v)):
                row = int(np.flatnonzero(~np.isfinite(v))[0])
                raise DataError(f"missing or non-finite covariate {k!r}", row)
        for arr in (self.lower, self.upper, self.tlower, self.tupper, self.exact, *self.x.values()):
            arr.flags.writeable = False
        bad = ~self.exact & ~(self.lower < self.upper)
        if np.any(bad):
            raise DataError("interval requires lower < upper", int(np.flatnonzero(bad)[0]))
        bad = self.exact & ~np.isfinite(self.lower)
        if np.any(bad):
            raise DataError("exact response must be finite", int(np.flatnonzero(bad)[0]))

    # -- constructors ---------------------------------------------------------

    @classmethod
    def from_bounds(cls, lower, upper, x=None, tlower=None, tupper=None, response="y"):
        """Rows with lower == upper are exact; +-inf bounds encode censoring."""
        lower = np.asarray(lower, dtype=float).copy()
        upper = np.asarray(upper, dtype=float).copy()
        n = len(lower)
        exact = lower == upper
        tl = np.full(n, -INF) if tlower is None else np.asarray(tlower, dtype=float).copy()
        tu = np.full(n, INF) if tupper is None else np.asarray(tupper, dtype=float).copy()
        return cls(lower, upper, exact, tl, tu, _covariates(x, n), None, response)

    @classmethod
    def from_exact(cls, y, x=None, tlower=None, tupper=None, response="y"):
        y = np.asarray(y, dtype=float)
        return cls.from_bounds(y, y, x, tlower, tupper, response)

    @classmethod
    def from_levels(cls, values, levels: LevelMap | Sequence, x=None, response="y"):
        """Ordered-factor response given as labels or as indices 1..K."""
        lm = levels if isinstance(levels, LevelMap) else ordered_levels(levels)
        idx = []
        for i, v in enumerate(values):
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                if not 1 <= v <= lm.K:
                    raise DataError(f"level index {v} outside 1..{lm.K}", i)
                idx.append(float(v))
            else:
                try:
                    idx.append(float(lm.index(v)))
                except DataError as e:
                    raise DataError(str(e), i) from None
        k = np.asarray(idx, dtype=float)
        n = len(k)
        return cls(k.copy(), k.copy(), np.ones(n, bool), np.full(n, -INF), np.full(n, INF),
                   _covariates(x, n), lm, response)

    @classmethod
    def from_statuses(cls, statuses: Sequence[ResponseStatus], x=None, response="y"):
        n = len(statuses)
        return cls(
            np.array([s.lower for s in statuses], dtype=float),
            np.array([s.upper for s in statuses], dtype=float),
            np.array([s.kind == "exact" for s in statuses], dtype=bool),
            np.array([s.tlower for s in statuses], dtype=float),
            np.array([s.tupper for s in statuses], dtype=float),
            _covariates(x, n),
            None,
            response,
        )

    # -- access ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.lower)

    @property
    def covariate_names(self) -> list[str]:
        return list(self.x)

    def kind(self, i: int) -> str:
        return _classify(self.lower[i], self.upper[i], bool(self.exact[i]))

    def kinds(self) -> np.ndarray:
        return np.array([self.kind(i) for i in range(len(self))])

    def status(self, i: int) -> ResponseStatus:
        trunc = (float(self.tlower[i]), float(self.tupper[i]))
        kind = self.kind(i)
        return ResponseStatus(kind, float(self.lower[i]), float(self.upper[i]), *trunc)

    def row_x(self, i: int) -> dict[str, float]:
        return {k: float(v[i]) for k, v in self.x.items()}

    def rows(self) -> Iterator[tuple[ResponseStatus, dict[str, float]]]:
        for i in range(len(self)):
            yield self.status(i), self.row_x(i)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.lower[idx].copy(), self.upper[idx].copy(), self.exact[idx].copy(),
                       self.tlower[idx].copy(), self.tupper[idx].copy(),
                       {k: v[idx].copy() for k, v in self.x.items()}, self.levels, self.response)

    def midpoints(self) -> np.ndarray:
        """A representative finite response value per row (for starting values)."""
        lo, hi = self.lower, self.upper
        out = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.where(np.isfinite(lo), lo, hi))
        return out

    def with_midpoint_exact(self) -> "Dataset":
        """Replace finite intervals by exact midpoints (the density approximation)."""
        finite = np.isfinite(self.lower) & np.isfinite(self.upper) & ~self.exact
        mid = 0.5 * (self.lower + self.upper)
        lo = np.where(finite, mid, self.lower)
        hi = np.where(finite, mid, self.upper)
        return Dataset(lo, hi, self.exact | finite, self.tlower.copy(), self.tupper.copy(),
                       dict(self.x), self.levels, self.response)


def _covariates(x, n) -> dict[str, np.ndarray]:
    if x is None:
        return {}
    out = {}
    for k, v in dict(x).items():
        arr = np.asarray(v, dtype=float).copy()
        if arr.ndim == 0:
            arr = np.full(n, float(arr))
        out[str(k)] = arr
    return out


# -- CSV ---------------------------------------------------------------------------


def _parse_bound(cell: str, empty: float, row: int, col: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.upper() == "NA":
        return empty
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"cannot parse {col}={cell!r} as a number", row) from None


def load_csv(
    path,
    response: str | None = None,
    lower: str | None = None,
    upper: str | None = None,
    tlower: str | None = None,
    tupper: str | None = None,
    levels: Sequence[str] | None = None,
    covariates: Sequence[str] | None = None,
    midpoint: bool = False,
) -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    The response is either a single numeric column (``response``), a pair
    of bound columns (``lower``/``upper``; an empty cell means -inf or
    +inf, equal bounds mean an exact value), or a factor column
    (``response`` with ``levels`` in their order).  ``covariates`` defaults
    to all remaining columns.  With ``midpoint=True`` finite intervals are
    replaced by their midpoints and treated as exact.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        records = list(reader)

    if response is None and (lower is None or upper is None):
        raise DataError("need a response column or both lower and upper columns")
    used = [c for c in (response, lower, upper, tlower, tupper) if c]
    for c in used:
        if c not in header:
            raise DataError(f"column {c!r} not found in {path.name}")
    if covariates is None:
        covariates = [c for c in header if c not in used]
    for c in covariates:
        if c not in header:
            raise DataError(f"covariate column {c!r} not found in {path.name}")

    n = len(records)
    x = {c: np.empty(n) for c in covariates}
    for i, rec in enumerate(records):
        for c in covariates:
            cell = (rec[c] or "").strip()
            if cell == "" or cell.upper() == "NA":
                raise DataError(f"missing covariate {c!r}", i)
            try:
                x[c][i] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric covariate {c}={cell!r}", i) from None

    name = response or f"{lower}|{upper}"
    if levels is not None:
        if response is None:
            raise DataError("a factor response needs the response column")
        lm = ordered_levels(levels)
        values = [(rec[response] or "").strip() for rec in records]
        return Dataset.from_levels(values, lm, x, response=response)

    lo = np.empty(n)
    hi = np.empty(n)
    for i, rec in enumerate(records):
        if response is not None:
            cell = (rec[response] or "").strip()
            if cell == "":
                raise DataError(f"missing response {response!r}", i)
            lo[i] = hi[i] = _parse_bound(cell, np.nan, i, response)
        else:
            lo[i] = _parse_bound(rec[lower] or "", -INF, i, lower)
            hi[i] = _parse_bound(rec[upper] or "", INF, i, upper)
            if lo[i] == -INF and hi[i] == INF:
                raise DataError("both bounds empty", i)
            if not lo[i] <= hi[i]:
                raise DataError(f"malformed bounds lower={lo[i]} >= upper={hi[i]}", i)
    tl = np.array([_parse_bound(rec[tlower] or "", -INF, i, tlower) for i, rec in enumerate(records)]) if tlower else None
    tu = np.array([_parse_bound(rec[tupper] or "", INF, i, tupper) for i, rec in enumerate(records)]) if tupper else None
    data = Dataset.from_bounds(lo, hi, x, tl, tu, response=name)
    return data.with_midpoint_exact() if midpoint else data


def _fmt(v: float) -> str:
    return "" if math.isinf(v) else repr(float(v))


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` so that :func:`load_csv` with lower/upper/tlower/tupper reads it back."""
    path = Path(path)
    cov = data.covariate_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if data.levels is not None:
            w.writerow(["y", *cov])
            for i in range(len(data)):
                w.writerow([data.levels.label(int(data.lower[i])), *(repr(float(data.x[c][i])) for c in cov)])
            return
        w.writerow(["lower", "upper", "tlower", "tupper", *cov])
        for i in range(len(data)):
            w.writerow([_fmt(data.lower[i]), _fmt(data.upper[i]), _fmt(data.tlower[i]), _fmt(data.tupper[i]),
                        *(repr(float(data.x[c][i])) for c in cov)])
