#!/usr/bin/env python3
"""Microbenchmarks for the homomorphic primitives at a chosen parameter set."""

import argparse
import time

import numpy as np

from hewisard import fft, lut, tfhe
from hewisard.lut import SelectorBit
from hewisard.params import named_params
from hewisard.tfhe import enc_rgsw, enc_rlwe, keygen, make_rng


def timeit(label, fn, reps):
    fn()  # warm
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    dt = (time.perf_counter() - t0) / reps
    print(f"{label:34s} {dt * 1000:9.2f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--params-set", default="HE_0")
    ap.add_argument("--p", type=int, default=1 << 8)
    ap.add_argument("--threads", type=int, default=2)
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()

    fft.set_fft_workers(args.threads)
    params = named_params(args.params_set, p=args.p)
    key, ksk = keygen(params, rng_seed=1)
    rng = make_rng(2)
    n = params.n

    m = rng.integers(0, params.p, n)
    ct = enc_rlwe(m, key, rng)
    bit = enc_rgsw(1, key, rng)
    bits13 = [SelectorBit.enc(enc_rgsw(int(b), key, rng))
              for b in rng.integers(0, 2, 13)]
    payload = tfhe.trivial_rlwe(1, params)
    table = lut.encode_lut(rng.integers(0, params.p, 1 << 13), params)
    lwes = [tfhe.extract_lwe(ct, i) for i in range(8)]

    timeit("external product", lambda: tfhe.external_product(bit, ct), args.reps)
    timeit("cmux", lambda: tfhe.cmux(bit, ct, ct), args.reps)
    timeit(f"blind rotate ({params.degree_log} bits)",
           lambda: tfhe.blind_rotate(ct, [bit] * params.degree_log,
                                     [1 << i for i in range(params.degree_log)]),
           max(1, args.reps // 5))
    timeit("vertical packing (k=13)",
           lambda: lut.vertical_packing(bits13, table), max(1, args.reps // 5))
    timeit("inverse vertical packing (k=13)",
           lambda: lut.inverse_vertical_packing(bits13, payload),
           max(1, args.reps // 5))
    timeit("packing key switch (8 inputs)",
           lambda: tfhe.packing_key_switch(lwes, ksk), max(1, args.reps // 5))


if __name__ == "__main__":
    main()
