"""Masking experiment for a trained checkpoint, printed as a table.

Randomly deletes a fraction of each test patient's recorded diagnoses, then
measures how far ranking quality falls and how often augmentation re-asserts
a deleted occurrence inside the extracted phenotypes.
"""

import argparse
import sys
from pathlib import Path

from hyperphen.data import load_dataset, split_dataset
from hyperphen.model import load_checkpoint
from hyperphen.training import robustness_experiment, write_robustness_csv


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, required=True, help="diagnosis CSV")
    parser.add_argument("--checkpoint", type=Path, required=True, help="one seed-* checkpoint dir")
    parser.add_argument("--fractions", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    parser.add_argument("--split-seed", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0, help="mask-selection seed")
    parser.add_argument("--out", type=Path, help="also write the rows as CSV")
    args = parser.parse_args(argv)

    ds = load_dataset(args.data)
    _, _, test_ds = split_dataset(ds, (0.8, 0.1, 0.1), args.split_seed)
    model, _ = load_checkpoint(args.checkpoint)
    rows = robustness_experiment(model, test_ds, fractions=tuple(args.fractions), seed=args.seed)

    columns = ["fraction", "recall@20", "ndcg@20", "recall_drop_pct", "ndcg_drop_pct", "recovered_rate", "n_masked"]
    print("  ".join(f"{c:>15}" for c in columns))
    for row in rows:
        print("  ".join(f"{row[c]:>15.4f}" if isinstance(row[c], float) else f"{row[c]:>15}" for c in columns))

    if args.out:
        write_robustness_csv(rows, args.out)
        print(f"\nwrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
