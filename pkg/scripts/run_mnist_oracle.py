#!/usr/bin/env python3
"""Plaintext integer-WiSARD oracle on MNIST (needs the IDX files locally).

Reproduces the desk-scale accuracy of the mnist_* configs, e.g. mnist_s
over the standard 60k/10k split lands near 91.7% (mean over seeds).
"""

import argparse
import os
import time

import numpy as np

from hewisard import data as hdata
from hewisard import wnn
from hewisard.config import named_config

CANDIDATES = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
     "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
     "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
]


def find_mnist(directory):
    for names in CANDIDATES:
        paths = [os.path.join(directory, n) for n in names]
        if all(os.path.exists(p) for p in paths):
            return paths
    raise SystemExit(f"MNIST IDX files not found under {directory!r}; "
                     "set --data-dir or HEWISARD_MNIST_DIR")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="mnist_s")
    ap.add_argument("--data-dir", default=os.environ.get("HEWISARD_MNIST_DIR", "data/mnist"))
    ap.add_argument("--train-samples", type=int, default=0,
                    help="0: the config's published training-set size")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    sizes = {"mnist_t": 1000, "mnist_s": 7500, "mnist_m": 30000, "mnist_l": 60000}
    cfg = named_config(args.config)
    n_train = args.train_samples or sizes.get(args.config, 7500)

    tr_i, tr_l, te_i, te_l = find_mnist(args.data_dir)
    train = hdata.load_mnist_idx(tr_i, tr_l)
    test = hdata.load_mnist_idx(te_i, te_l)
    btr = hdata.preprocess(train.subset(np.arange(n_train)), cfg.preprocess_spec())
    bte = hdata.preprocess(test, cfg.preprocess_spec())

    accs = []
    for r in range(args.seeds):
        g = cfg.geometry(r)
        t0 = time.perf_counter()
        model, counts = wnn.train_integer(btr.bits, btr.labels, g)
        cfg.validate_training_size(counts.counts)
        preds = wnn.evaluate_dataset(model, bte.bits, cfg.activation(),
                                     counts if cfg.balance else None)
        acc = float(np.mean(preds == bte.labels))
        accs.append(acc)
        print(f"seed {r:2d}: {acc * 100:.2f}% ({time.perf_counter() - t0:.1f}s)")
    print(f"mean over {args.seeds} seeds: {np.mean(accs) * 100:.2f}%")


if __name__ == "__main__":
    main()
