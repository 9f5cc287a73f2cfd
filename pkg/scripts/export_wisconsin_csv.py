#!/usr/bin/env python3
"""Export the bundled Wisconsin breast cancer dataset to CSV for the CLI."""

import argparse

from sklearn.datasets import load_breast_cancer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="wdbc.csv")
    args = ap.parse_args()

    d = load_breast_cancer()
    header = [f"f{i}" for i in range(d.data.shape[1])] + ["diagnosis"]
    with open(args.out, "w") as f:
        f.write(",".join(header) + "\n")
        for row, target in zip(d.data, d.target):
            cells = [f"{v:.9g}" for v in row] + [d.target_names[target]]
            f.write(",".join(cells) + "\n")
    print(f"wrote {len(d.data)} samples -> {args.out}")


if __name__ == "__main__":
    main()
