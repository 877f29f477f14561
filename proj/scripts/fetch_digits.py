#!/usr/bin/env python3
"""Regenerate data/digits.csv from the copy of the UCI optdigits test set
bundled with scikit-learn (sklearn.datasets.load_digits).

Output format: 1797 rows, 64 integer pixel intensities in [0, 16] followed by
the integer class label, comma separated, no header.
"""
import gzip
import os
import sys


def main() -> int:
    try:
        import sklearn.datasets
    except ImportError:
        print("scikit-learn is required to regenerate data/digits.csv", file=sys.stderr)
        return 1

    src = os.path.join(os.path.dirname(sklearn.datasets.__file__), "data", "digits.csv.gz")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    dst = os.path.join(root, "data", "digits.csv")
    os.makedirs(os.path.dirname(dst), exist_ok=True)

    with gzip.open(src, "rt") as fin:
        rows = [line.strip() for line in fin if line.strip()]
    if len(rows) != 1797:
        print(f"unexpected row count {len(rows)} in {src}", file=sys.stderr)
        return 1
    with open(dst, "w") as fout:
        fout.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} rows to {dst}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
