#!/usr/bin/env python3
"""Wisconsin end to end: plaintext accuracy sweep, optionally fully encrypted.

Plaintext: mean accuracy over permutation seeds with the `wisconsin` config.
With --encrypted, also trains and evaluates homomorphically (HE_0) and
cross-checks predictions against the plaintext oracle.
"""

import argparse
import time

import numpy as np
from sklearn.datasets import load_breast_cancer

from hewisard import data as hdata
from hewisard import fft, hewnn, wnn
from hewisard.config import named_config
from hewisard.tfhe import keygen, make_rng


def load_splits(split_seed: int):
    d = load_breast_cancer()
    rng = make_rng(split_seed)
    idx = rng.permutation(len(d.data))
    cut = int(len(d.data) * 0.8)
    tr, te = idx[:cut], idx[cut:]
    lo, hi = d.data[tr].min(0), d.data[tr].max(0)
    meta = hdata.DatasetMeta(30, 256, 2, "sklearn-wdbc")
    train = hdata.Dataset(hdata.quantize_tabular(d.data[tr], lo, hi), d.target[tr], meta)
    test = hdata.Dataset(hdata.quantize_tabular(d.data[te], lo, hi), d.target[te], meta)
    return train, test


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20, help="permutation seeds")
    ap.add_argument("--split-seed", type=int, default=5)
    ap.add_argument("--encrypted", action="store_true")
    ap.add_argument("--enc-seeds", type=int, default=1,
                    help="how many of the seeds run encrypted")
    ap.add_argument("--threads", type=int, default=2)
    args = ap.parse_args()

    fft.set_fft_workers(args.threads)
    cfg = named_config("wisconsin")
    train, test = load_splits(args.split_seed)
    btr = hdata.preprocess(train, cfg.preprocess_spec())
    bte = hdata.preprocess(test, cfg.preprocess_spec())
    act = cfg.activation()

    accs = []
    models = {}
    for r in range(args.seeds):
        g = cfg.geometry(r)
        model, counts = wnn.train_integer(btr.bits, btr.labels, g)
        preds = wnn.evaluate_dataset(model, bte.bits, act,
                                     counts if cfg.balance else None)
        acc = float(np.mean(preds == bte.labels))
        accs.append(acc)
        models[r] = (model, counts)
        print(f"seed {r:2d}: plaintext accuracy {acc * 100:.2f}%")
    print(f"mean over {args.seeds} seeds: {np.mean(accs) * 100:.2f}% "
          f"(paper desk-scale target: 97.30 +/- 2.5)")

    if not args.encrypted:
        return
    params = cfg.he_params()
    key, ksk = keygen(params, rng_seed=1)
    enc_rng = make_rng(2)
    g = cfg.geometry(0)
    t0 = time.perf_counter()
    samples = [hewnn.encrypt_sample(btr.bits[i], int(btr.labels[i]), key, enc_rng,
                                    label_bits=g.label_bits)
               for i in range(len(btr.bits))]
    print(f"encrypted {len(samples)} training samples in {time.perf_counter() - t0:.0f}s")
    for r in range(min(args.enc_seeds, args.seeds)):
        g = cfg.geometry(r)
        t0 = time.perf_counter()
        he_model = hewnn.he_train(samples, g, params)
        t_train = time.perf_counter() - t0
        plain, counts = models[r]
        matches = 0
        t0 = time.perf_counter()
        for i in range(len(bte.bits)):
            q = hewnn.encrypt_sample(bte.bits[i], None, key, enc_rng)
            pack = hewnn.he_infer_pd(he_model, q, ksk)
            res = hewnn.client_finalize(pack, key, act, balance=cfg.balance)
            expect = wnn.evaluate(plain, bte.bits[i], act,
                                  counts if cfg.balance else None)
            matches += res.prediction == expect
        t_eval = time.perf_counter() - t0
        print(f"seed {r}: encrypted train {t_train:.0f}s, eval {t_eval:.0f}s, "
              f"prediction agreement {matches}/{len(bte.bits)}")


if __name__ == "__main__":
    main()
