"""Per-scale Jacobian, drift and contact-factor data for one germ, as CSV.

usage: python scripts/lipschitz_scales.py GERM [--eps E] [--samples N] [--out FILE]

GERM is a corpus name or a path to a germ JSON file.  Columns are suitable
for log-log plots of |J - I|, drift and |grad U| against t.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from germfold.germfile import corpus_names, load_corpus_germ, load_germ
from germfold.trivial import lipschitz_scan


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("germ")
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=40)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    defn = load_corpus_germ(args.germ) if args.germ in corpus_names() else load_germ(args.germ)
    gs = defn.build()
    scales = np.geomspace(1e-1, 1e-4, 7)
    d = lipschitz_scan(gs, args.eps, scales, args.samples, args.seed)
    fh = sys.stdout if args.out == "-" else Path(args.out).open("w", newline="")
    w = csv.writer(fh)
    w.writerow(["t", "jac_norm", "inv_jac_norm", "jac_minus_id", "inv_jac_minus_id", "drift", "u_grad"])
    for i, t in enumerate(d.scales):
        w.writerow([f"{t:.6g}", d.jac_norms[i], d.inv_jac_norms[i], d.jac_minus_id[i],
                    d.inv_jac_minus_id[i], d.drift_ratios[i], d.u_grad_norms[i] if d.u_grad_norms else ""])
    print(f"# {defn.name}: verdicts {d.verdicts}, skipped {d.skipped}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
