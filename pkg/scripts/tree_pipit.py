"""Counts of birds per plot given canopy cover, as a conditional transformation model.

The response levels 0..4 get one parameter each (the top level is the
sample-space boundary), and every parameter varies with cover through a
Bernstein polynomial of order 4.  Needs a CSV with integer ``counts`` and
numeric ``coverstorey`` columns.

    python3 scripts/tree_pipit.py treepipit.csv --out pipit_cdf.csv
"""

import argparse
import csv

import numpy as np

from mlt import basis as B
from mlt import distributions as D
from mlt import inference as inf
from mlt.data import Dataset, load_csv
from mlt.likelihood import TransformationModel
from mlt.models import fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv")
    ap.add_argument("--response", default="counts")
    ap.add_argument("--cover", default="coverstorey")
    ap.add_argument("--max-count", type=int, default=4)
    ap.add_argument("--out", default="pipit_cdf.csv")
    args = ap.parse_args()

    raw = load_csv(args.csv, response=args.response, covariates=[args.cover])
    K = args.max_count + 2  # levels 0..max_count and "more"
    k = np.minimum(raw.lower.astype(int), args.max_count + 1) + 1
    cover = raw.x[args.cover]
    data = Dataset.from_levels(k, [str(i) for i in range(K - 1)] + ["more"], {"cover": cover})
    a = B.Discrete(K)
    bx = B.Bernstein(4, B.Support(float(cover.min()), float(cover.max())), var="cover")
    basis = B.Kronecker(a, bx)
    model = TransformationModel(D.NORMAL, basis, B.ConstraintSystem(basis.constraint_matrix()), "discrete", K)
    res = fit(model, data)
    print(res.summary())
    grid = np.linspace(cover.min(), cover.max(), 50)
    F = inf.predict(res, np.arange(1, K), {"cover": grid})
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cover", "count", "distribution"])
        for c, row in zip(grid, F):
            w.writerows([c, j, v] for j, v in enumerate(row))
    print(f"conditional distribution functions written to {args.out}")


if __name__ == "__main__":
    main()
