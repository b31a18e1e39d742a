#!/usr/bin/env python3
"""Generate a self-contained synthetic study for smoke testing.

Writes a case store (images + manifest), a raw ratings CSV with a planted
adversarial rater, and a learnable MOS table keyed to the stub features,
so the full CLI chain (ingest -> mos -> baselines -> train) can run
without any external data.
"""

import argparse
from pathlib import Path

import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from editqa import subjective
from editqa.synthetic import linear_mos_targets, make_case_store, synthetic_score_rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--cases", type=int, default=50)
    parser.add_argument("--raters", type=int, default=25)
    parser.add_argument("--adversaries", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    store_dir = out / "store"
    cs = make_case_store(store_dir, n_cases=args.cases, seed=args.seed)
    print(f"case store: {store_dir} ({len(cs)} cases)")

    rows = synthetic_score_rows(
        n_raters=args.raters, n_cases=args.cases, seed=args.seed,
        adversarial_raters=args.adversaries,
    )
    ratings = out / "ratings.csv"
    subjective.write_score_rows(rows, ratings)
    print(f"ratings: {ratings} ({len(rows)} rows, {args.adversaries} adversarial)")

    targets = linear_mos_targets(cs, seed=args.seed)
    mos_path = out / "learnable_mos.csv"
    with mos_path.open("w") as f:
        f.write(",".join(subjective.MOS_ROW_FIELDS) + "\n")
        for cid in cs.case_ids():
            f.write(f"{cid},overall_quality,{targets[cid]!r},1\n")
    print(f"learnable MOS table: {mos_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
