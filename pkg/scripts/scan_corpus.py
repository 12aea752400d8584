"""Verify every built-in germ and write one JSON report per germ.

usage: python scripts/scan_corpus.py [OUTDIR] [--seed S]
"""

import argparse
import json
import sys
from pathlib import Path

from germfold.germfile import load_corpus
from germfold.verify import run_verification


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", nargs="?", default="reports")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for d in load_corpus():
        rep = run_verification(d, seed=args.seed)
        (out / f"{d.name}.json").write_text(json.dumps(rep.to_json(), indent=2, default=str) + "\n")
        print(rep.summary())
        ok &= rep.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
