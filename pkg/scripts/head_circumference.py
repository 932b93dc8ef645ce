"""Growth curves: conditional quantiles of head circumference given age.

The transformation function is the tensor product of a cubic Bernstein
polynomial in head circumference and a cubic Bernstein polynomial in the
cube root of age.  Needs a CSV with numeric ``head`` and ``age`` columns.

    python3 scripts/head_circumference.py boys.csv --out hc_quantiles.csv
"""

import argparse
import csv

import numpy as np

from mlt import inference as inf
from mlt.data import Dataset, load_csv
from mlt.models import ModelSpec, fit_spec

PROBS = (0.004, 0.02, 0.10, 0.25, 0.50, 0.75, 0.90, 0.98, 0.996)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv")
    ap.add_argument("--response", default="head")
    ap.add_argument("--age", default="age")
    ap.add_argument("--out", default="hc_quantiles.csv")
    args = ap.parse_args()

    raw = load_csv(args.csv, response=args.response, covariates=[args.age])
    age3 = np.cbrt(raw.x[args.age])
    data = Dataset.from_exact(raw.lower, {"age3": age3})
    y = raw.lower
    ys = (float(y.min()) - 1.0, float(y.max()) + 1.0)
    xs = (float(age3.min()), float(age3.max()))
    spec = ModelSpec("ctm", support=ys, terms=[{
        "response": {"kind": "bernstein", "order": 3, "support": list(ys)},
        "covariate": {"kind": "bernstein", "order": 3, "support": list(xs), "var": "age3"},
    }])
    res = fit_spec(spec, data)
    print(res.summary())
    ages = np.linspace(raw.x[args.age].min(), raw.x[args.age].max(), 100)
    q = inf.predict(res, x={"age3": np.cbrt(ages)}, what="quantile", p=PROBS)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([args.age, "p", "quantile"])
        for a, row in zip(ages, q):
            w.writerows([a, p, v] for p, v in zip(PROBS, row))
    print(f"quantile curves for p = {PROBS} written to {args.out}")


if __name__ == "__main__":
    main()
