"""Command-line front end: ``mlt {fit,predict,sample,simulate,band}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical non-convergence.
All tabular output is long-format CSV with a header.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import inference as inf
from . import simulate as sim
from .basis import BasisDomainError
from .data import DataError, load_csv
from .likelihood import LikelihoodError
from .models import FitResult, ModelSpec, build, fit
from .optimizer import OptimizationError, OptimizerConfig

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v) -> str:
    if isinstance(v, (str, bool, np.bool_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        return "NA"
    if np.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    return repr(v)


def _write(path, header, rows) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _floats(text: str, flag: str) -> np.ndarray:
    """Comma list or lo:hi:n range."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.linspace(float(lo), float(hi), int(n))
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"cannot parse {flag} {text!r}; use a comma list or lo:hi:n") from None


def _spec_columns(spec: ModelSpec) -> list[str]:
    cols = list(spec.shift) + list(spec.varying)
    for t in spec.terms or ():
        for part in (t.get("response", {}), t.get("covariate", {})):
            cols += _basis_columns(part)
    return list(dict.fromkeys(cols))


def _basis_columns(d) -> list[str]:
    out = list(d.get("columns", []))
    if d.get("var"):
        out.append(d["var"])
    for c in d.get("children", []):
        out += _basis_columns(c)
    return out


def _model_columns(res: FitResult) -> list[str]:
    return list(dict.fromkeys(_basis_columns(res.model.basis.to_dict())))


def _optimizer(args, spec: ModelSpec) -> OptimizerConfig:
    kw = dict(spec.optimizer)
    if args.max_iter is not None:
        kw["max_inner"] = args.max_iter
    if args.gtol is not None:
        kw["gtol"] = args.gtol
    return OptimizerConfig(**kw)


def cmd_fit(args) -> int:
    spec = ModelSpec.from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    levels = args.levels.split(",") if args.levels else (list(spec.levels) if spec.levels else None)
    response = args.response or (None if args.lower else spec.response)
    data = load_csv(args.data, response=response, lower=args.lower, upper=args.upper,
                    tlower=args.tlower, tupper=args.tupper, levels=levels, covariates=_spec_columns(spec))
    res = fit(build(spec, data), data, _optimizer(args, spec), spec=spec)
    res.save(args.out)
    print(res.summary())
    if not res.converged:
        print(f"warning: optimizer did not converge (KKT residual {res.optim.kkt_residual:.3g}); "
              f"artifact written to {args.out} and flagged", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def _newdata(args, res: FitResult) -> dict[str, np.ndarray]:
    cols = _model_columns(res)
    if not cols:
        return {}
    if not args.data:
        raise UsageError(f"model uses covariates {cols}; pass them with --data")
    with open(args.data, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    missing = [c for c in cols if rows and c not in rows[0]]
    if missing or not rows:
        raise DataError(f"newdata lacks covariate columns {missing}" if rows else "newdata is empty")
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in cols}
    except ValueError as e:
        raise DataError(f"non-numeric covariate in newdata: {e}") from None


def cmd_predict(args) -> int:
    res = FitResult.load(args.model)
    if args.what not in inf.WHATS:
        raise UsageError(f"--what must be one of {', '.join(inf.WHATS)}")
    if args.what == "quantile" and not args.p:
        raise UsageError("--what quantile needs --p")
    x = _newdata(args, res)
    cols = list(x)
    nrow = len(next(iter(x.values()))) if x else 1
    if args.what == "quantile":
        grid = _floats(args.p, "--p")
        vals = inf.predict(res, x=x or None, what="quantile", p=grid)
        key = "p"
    else:
        grid = _floats(args.grid, "--grid") if args.grid else inf.default_grid(res.model)
        vals = inf.predict(res, grid, x or None, args.what)
        key = "y"
    rows = []
    for i in range(nrow):
        xi = [x[c][i] for c in cols]
        rows += [[i + 1, *xi, g, v] for g, v in zip(grid, vals[i])]
    _write(args.out, ["row", *cols, key, args.what], rows)
    return EXIT_OK


def cmd_sample(args) -> int:
    res = FitResult.load(args.model)
    x = _newdata(args, res)
    cols = list(x)
    if x:
        y = inf.sample(res.model, res.theta, x, seed=args.seed)
        rows = [[i + 1, *(x[c][i] for c in cols), y[i]] for i in range(len(y))]
    else:
        if args.n is None:
            raise UsageError("--n is required without --data")
        y = inf.sample(res.model, res.theta, None, n=args.n, seed=args.seed)
        rows = [[i + 1, v] for i, v in enumerate(y)]
    _write(args.out, ["row", *cols, "y"], rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.study == "simmod":
        n = 200 if args.n is None else args.n
        if n < 50 or args.reps < 1:
            raise UsageError("simmod needs --n >= 50 and --reps >= 1")
        reps = [sim.simmod_rep(n, r, args.seed) for r in range(args.reps)]
        header = ["n", "rep", "converged", "mad_min", "mad_median", "mad_max",
                  *(f"theta{k + 1}" for k in range(6)), "error"]
        rows = [[r.n, r.rep + 1, r.converged, r.mad_min, r.mad_median, r.mad_max, *r.theta, r.error]
                for r in reps]
        _write(args.out, header, rows)
        return EXIT_OK if all(r.converged for r in reps) else EXIT_NONCONV
    data = sim.gbsg_like(seed=args.seed) if args.n is None else sim.gbsg_like(n=args.n, seed=args.seed,
                                                                                treated=round(args.n * 246 / 686))
    out = sim.cox_order_m(data)
    rows = []
    for r in out:
        rows += [[r.order, r.converged, "beta", name, "", b] for name, b in zip(("horTh", "age"), r.beta)]
        rows += [[r.order, r.converged, "log_cumhazard", "", y, v] for y, v in zip(r.grid, r.log_cumhazard)]
    _write(args.out, ["order", "converged", "quantity", "name", "y", "value"], rows)
    return EXIT_OK if all(r.converged for r in out) else EXIT_NONCONV


def cmd_band(args) -> int:
    res = FitResult.load(args.model)
    x = _newdata(args, res)
    if x and len(next(iter(x.values()))) != 1:
        raise UsageError("band needs exactly one covariate row in --data")
    grid = _floats(args.grid, "--grid") if args.grid else inf.default_grid(res.model)
    xs = {k: float(v[0]) for k, v in x.items()} or None
    b = inf.confidence_band(res, grid, level=args.level, x=xs, seed=args.seed)
    rows = [[g, e, s, lo, hi, b.multiplier] for g, e, s, lo, hi in zip(b.grid, b.estimate, b.se, b.lower, b.upper)]
    _write(args.out, ["y", "trafo", "se", "lower", "upper", "multiplier"], rows)
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mlt", description="Most likely transformation models")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", help="output path ('-' for stdout)", default="-")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true")

    f = sub.add_parser("fit", help="fit a model from CSV data and a model JSON")
    f.add_argument("--data", required=True)
    f.add_argument("--model", required=True, help="model JSON")
    f.add_argument("--response")
    f.add_argument("--lower")
    f.add_argument("--upper")
    f.add_argument("--tlower")
    f.add_argument("--tupper")
    f.add_argument("--levels", help="comma-separated ordered levels")
    f.add_argument("--max-iter", type=int)
    f.add_argument("--gtol", type=float)
    common(f)

    pr = sub.add_parser("predict", help="predict from a fit artifact")
    pr.add_argument("--model", required=True, help="fit artifact JSON")
    pr.add_argument("--data", help="CSV of covariate rows")
    pr.add_argument("--what", default="distribution")
    pr.add_argument("--grid", help="response grid: comma list or lo:hi:n (write --grid=-2:4:5 for a negative start)")
    pr.add_argument("--p", help="probabilities for --what quantile")
    common(pr)

    s = sub.add_parser("sample", help="draw responses from a fit artifact")
    s.add_argument("--model", required=True)
    s.add_argument("--data")
    s.add_argument("--n", type=int)
    common(s)

    si = sub.add_parser("simulate", help="run a built-in simulation study")
    si.add_argument("--study", required=True, choices=["simmod", "cox-order-M"])
    si.add_argument("--n", type=int)
    si.add_argument("--reps", type=int, default=1)
    common(si)

    b = sub.add_parser("band", help="simultaneous confidence band for the transformation function")
    b.add_argument("--model", required=True)
    b.add_argument("--data")
    b.add_argument("--grid")
    b.add_argument("--level", type=float, default=0.95)
    common(b)
    return p


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "sample": cmd_sample, "simulate": cmd_simulate, "band": cmd_band}


def main(argv=None) -> int:
    try:
        args = parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "fit" and not args.response and bool(args.lower) != bool(args.upper):
        print("mlt fit: --lower and --upper must be given together", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"mlt {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError, KeyError, BasisDomainError) as e:
        print(f"mlt {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizationError, LikelihoodError, np.linalg.LinAlgError) as e:
        print(f"mlt {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
