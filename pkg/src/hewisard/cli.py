"""Command-line interface: keygen, encrypt, train, infer, finalize, oracle, bench.

Exit codes: 0 success, 2 usage errors (argparse), 3 data/format errors,
4 decryption-failure diagnostics from finalize.
"""

from __future__ import annotations

import argparse
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import data as hdata
from . import fileio, hewnn, wnn
from .config import RunConfig, config_names, load_config
from .fft import set_fft_workers
from .fileio import FileFormatError
from .hewnn import client_finalize, encrypt_sample, he_infer_pd, he_train
from .tfhe import PRNG_ID, keygen, make_rng
from .wnn import WnnError

EXIT_DATA = 3
EXIT_DECRYPT = 4


class DecryptionDiagnostics(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# shared helpers


def _add_dataset_args(p: argparse.ArgumentParser):
    p.add_argument("--csv", help="delimited text dataset with a header row")
    p.add_argument("--label-column", default="label")
    p.add_argument("--mnist-images", help="IDX image file (optionally .gz)")
    p.add_argument("--mnist-labels", help="IDX label file (optionally .gz)")
    p.add_argument("--synthetic-unbalanced", metavar="R1:R2[:..]",
                   help="generate overlapping clusters with these class ratios")
    p.add_argument("--synthetic-seed", type=int, default=0)
    p.add_argument("--synthetic-samples", type=int, default=400)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--limit", type=int, default=0, help="cap the sample count")


def _load_dataset(args, cfg: RunConfig) -> hdata.Dataset:
    if args.csv:
        schema = hdata.TabularSchema(args.label_column)
        if args.split == "all":
            ds, _ = hdata.load_tabular(args.csv, schema)
        else:
            spec = hdata.SplitSpec(args.train_fraction, args.split_seed)
            train, test, _ = hdata.load_tabular_split(args.csv, schema, spec)
            ds = train if args.split == "train" else test
    elif args.mnist_images:
        if not args.mnist_labels:
            raise FileFormatError("--mnist-images needs --mnist-labels")
        ds = hdata.load_mnist_idx(args.mnist_images, args.mnist_labels)
        if args.split != "all":
            spec = hdata.SplitSpec(args.train_fraction, args.split_seed)
            train, test = hdata.split(ds, spec)
            ds = train if args.split == "train" else test
    elif args.synthetic_unbalanced:
        ratios = [int(x) for x in args.synthetic_unbalanced.split(":")]
        ds = hdata.make_unbalanced(ratios, args.synthetic_seed,
                                   samples=args.synthetic_samples)
        if args.split != "all":
            spec = hdata.SplitSpec(args.train_fraction, args.split_seed)
            train, test = hdata.split(ds, spec)
            ds = train if args.split == "train" else test
    else:
        raise FileFormatError("no dataset given (--csv, --mnist-images, "
                              "or --synthetic-unbalanced)")
    if args.limit:
        ds = ds.subset(np.arange(min(args.limit, len(ds))))
    return ds


def _report(path: str | None, entries: dict, table: list[tuple] | None = None):
    lines = [f"{k}: {v}" for k, v in entries.items()]
    if table:
        widths = [max(len(str(row[i])) for row in table) for i in range(len(table[0]))]
        lines.append("")
        for row in table:
            lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text)
    print(text, end="")


def _confusion(truth: np.ndarray, preds: np.ndarray, l: int) -> list[tuple]:
    mat = np.zeros((l, l), dtype=int)
    for t, p in zip(truth, preds):
        mat[t, p] += 1
    rows = [("truth\\pred", *range(l))]
    rows += [(c, *mat[c]) for c in range(l)]
    return rows


def _peak_mem_mib() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


# ---------------------------------------------------------------------------
# commands


def cmd_keygen(args) -> int:
    cfg = load_config(args.config)
    params = cfg.he_params()
    if params.insecure and not args.insecure:
        raise FileFormatError("parameter set is INSECURE; pass --insecure to proceed")
    key, ksk = keygen(params, rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_secret_key(out / "secret.key", key)
    fileio.save_ksk(out / "packing.ksk", ksk)
    fileio.write_manifest(out / "manifest.txt", {
        "kind": "keys", "config": cfg.name, "params-set": params.name,
        "p": params.p, "insecure": params.insecure, "key-seed": args.seed,
        "prng": PRNG_ID,
    })
    print(f"wrote {out}/secret.key, {out}/packing.ksk")
    return 0


def cmd_encrypt(args) -> int:
    cfg = load_config(args.config)
    params = cfg.he_params()
    key = fileio.load_secret_key(Path(args.keys) / "secret.key",
                                 allow_insecure=args.insecure)
    if key.params != params:
        raise FileFormatError("key file does not match the config's parameter set")
    ds = _load_dataset(args, cfg)
    bits = hdata.preprocess(ds, cfg.preprocess_spec())
    geometry = cfg.geometry(0, feature_count=ds.meta.feature_count,
                            class_count=ds.meta.class_count)
    rng = make_rng(args.enc_seed)
    with_labels = not args.no_labels

    def stream():
        for i in range(len(bits.bits)):
            label = int(bits.labels[i]) if with_labels else None
            yield encrypt_sample(bits.bits[i], label, key, rng,
                                 label_bits=geometry.label_bits)

    n = fileio.write_samples(args.out, stream(), params, {
        "s": geometry.s, "class_count": geometry.l,
        "feature_count": ds.meta.feature_count, "source": ds.meta.source_id,
        "config": cfg.name, "enc_seed": args.enc_seed,
    })
    if args.truth_out:
        Path(args.truth_out).write_text(
            "\n".join(str(int(v)) for v in bits.labels) + "\n")
    print(f"encrypted {n} samples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    params = cfg.he_params()
    meta = fileio.samples_meta(args.data, allow_insecure=args.insecure)
    geometry = cfg.geometry(args.perm_seed,
                            feature_count=meta["feature_count"],
                            class_count=meta["class_count"])
    model = None
    if args.resume:
        model = fileio.load_he_model(args.resume, allow_insecure=args.insecure,
                                     expect_params=params)
        if model.geometry != geometry:
            raise FileFormatError("resume model geometry does not match")
    set_fft_workers(args.threads)
    samples = fileio.read_samples(args.data, allow_insecure=args.insecure,
                                  expect_params=params)
    t0 = time.perf_counter()
    model = he_train(samples, geometry, params, model=model)
    dt = time.perf_counter() - t0
    fileio.save_he_model(args.out, model, {
        "config": cfg.name, "perm_seed": args.perm_seed, "source": meta.get("source"),
    })
    print(f"trained -> {args.out} ({dt:.1f}s, peak {_peak_mem_mib():.0f} MiB)")
    return 0


def cmd_infer(args) -> int:
    cfg = load_config(args.config)
    params = cfg.he_params()
    model = fileio.load_he_model(args.model, allow_insecure=args.insecure,
                                 expect_params=params)
    ksk = fileio.load_ksk(Path(args.keys) / "packing.ksk",
                          allow_insecure=args.insecure)
    set_fft_workers(args.threads)
    samples = fileio.read_samples(args.data, allow_insecure=args.insecure,
                                  expect_params=params)
    t0 = time.perf_counter()
    packs = (he_infer_pd(model, s, ksk) for s in samples)
    n = fileio.write_scorepacks(args.out, packs, params, model.geometry,
                                {"config": cfg.name})
    dt = time.perf_counter() - t0
    print(f"inferred {n} samples -> {args.out} ({dt:.1f}s)")
    return 0


def cmd_finalize(args) -> int:
    cfg = load_config(args.config)
    key = fileio.load_secret_key(Path(args.keys) / "secret.key",
                                 allow_insecure=args.insecure)
    activation = cfg.activation()
    balance = cfg.balance and not args.no_balance
    preds, noisy = [], 0
    for pack in fileio.read_scorepacks(args.packs, allow_insecure=args.insecure):
        res = client_finalize(pack, key, activation, balance=balance)
        preds.append(res.prediction)
        if not res.noise_ok:
            noisy += 1
    entries = {
        "kind": "finalize-report", "config": cfg.name, "samples": len(preds),
        "balance": balance, "noisy-packs": noisy,
        "predictions": " ".join(map(str, preds)),
    }
    table = None
    if args.truth:
        truth = np.array([int(x) for x in Path(args.truth).read_text().split()])
        if len(truth) != len(preds):
            raise FileFormatError("truth label count does not match pack count")
        acc = float(np.mean(truth == np.array(preds))) if len(preds) else 0.0
        entries["accuracy"] = f"{acc * 100:.2f}%"
        l = int(max(truth.max(initial=0), max(preds, default=0))) + 1
        table = _confusion(truth, np.array(preds), l)
    _report(args.out, entries, table)
    if noisy:
        raise DecryptionDiagnostics(f"{noisy} score packs exceeded the noise margin")
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    ds = _load_dataset(args, cfg)
    spec = cfg.preprocess_spec()
    if args.split != "all":
        raise FileFormatError("oracle runs on the full dataset and splits itself")
    split_spec = hdata.SplitSpec(args.train_fraction, args.split_seed)
    if args.csv:
        schema = hdata.TabularSchema(args.label_column)
        train, test, _ = hdata.load_tabular_split(args.csv, schema, split_spec)
    else:
        train, test = hdata.split(ds, split_spec)
    if args.limit:
        train = train.subset(np.arange(min(args.limit, len(train))))
    btr = hdata.preprocess(train, spec)
    bte = hdata.preprocess(test, spec)
    geometry = cfg.geometry(args.perm_seed, feature_count=train.meta.feature_count,
                            class_count=train.meta.class_count)
    t0 = time.perf_counter()
    model, counts = wnn.train_integer(btr.bits, btr.labels, geometry)
    cfg.validate_training_size(counts.counts)
    train_dt = time.perf_counter() - t0
    t0 = time.perf_counter()
    preds = wnn.evaluate_dataset(model, bte.bits, cfg.activation(),
                                 counts if cfg.balance else None)
    eval_dt = time.perf_counter() - t0
    acc = float(np.mean(preds == bte.labels))
    if args.model_out:
        fileio.save_plain_model(args.model_out, model, counts, {
            "config": cfg.name, "perm_seed": args.perm_seed,
            "preprocess": vars(spec) | {},
        })
    _report(args.out, {
        "kind": "oracle-report", "config": cfg.name,
        "train-samples": len(btr.bits), "test-samples": len(bte.bits),
        "perm-seed": args.perm_seed, "split-seed": args.split_seed,
        "balance": cfg.balance, "accuracy": f"{acc * 100:.2f}%",
        "train-seconds": f"{train_dt:.2f}", "eval-seconds": f"{eval_dt:.2f}",
    }, _confusion(bte.labels, preds, geometry.l))
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    params = cfg.he_params()
    if params.insecure and not args.insecure:
        raise FileFormatError("parameter set is INSECURE; pass --insecure to proceed")
    rng = np.random.default_rng(0)
    f = cfg.feature_count or 16
    l = cfg.class_count or 2
    ds = hdata.Dataset(rng.integers(0, cfg.in_range, (args.train_samples + args.test_samples, f)),
                       rng.integers(0, l, args.train_samples + args.test_samples),
                       hdata.DatasetMeta(f, cfg.in_range, l, "bench-synthetic"))
    bits = hdata.preprocess(ds, cfg.preprocess_spec())
    geometry = cfg.geometry(1, feature_count=f, class_count=l)
    key, ksk = keygen(params, rng_seed=1)
    enc_rng = make_rng(2)

    entries = {"kind": "bench-report", "config": cfg.name, "params-set": params.name,
               "threads": args.threads, "train-samples": args.train_samples,
               "test-samples": args.test_samples}
    set_fft_workers(args.threads)
    t0 = time.perf_counter()
    train_enc = [encrypt_sample(bits.bits[i], int(bits.labels[i]), key, enc_rng,
                                label_bits=geometry.label_bits)
                 for i in range(args.train_samples)]
    entries["encrypt-seconds-per-sample"] = f"{(time.perf_counter() - t0) / max(1, args.train_samples):.3f}"
    t0 = time.perf_counter()
    model = he_train(train_enc, geometry, params)
    dt = time.perf_counter() - t0
    entries["train-seconds-per-sample"] = f"{dt / max(1, args.train_samples):.3f}"
    entries["train-seconds-total"] = f"{dt:.2f}"

    t0 = time.perf_counter()
    for i in range(args.train_samples, args.train_samples + args.test_samples):
        q = encrypt_sample(bits.bits[i], None, key, enc_rng)
        he_infer_pd(model, q, ksk)
    dt = time.perf_counter() - t0
    entries["infer-seconds-per-sample"] = f"{dt / max(1, args.test_samples):.3f}"
    entries["peak-memory-mib"] = f"{_peak_mem_mib():.0f}"
    _report(args.out, entries)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hewisard",
        description="WiSARD weightless neural networks over TFHE-encrypted data")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help=f"named config ({', '.join(config_names())}) or JSON file")
        p.add_argument("--insecure", action="store_true",
                       help="allow INSECURE parameter sets")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("keygen", help="generate secret + packing keys")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt", help="preprocess and encrypt a dataset")
    common(p)
    _add_dataset_args(p)
    p.add_argument("--keys", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--enc-seed", type=int, default=0)
    p.add_argument("--no-labels", action="store_true",
                   help="omit encrypted labels (inference inputs)")
    p.add_argument("--truth-out", help="write plaintext labels for later accuracy")
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("train", help="homomorphic training over encrypted samples")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="continue training an existing model")
    p.add_argument("--perm-seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="encrypted inference producing score packs")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--keys", required=True, help="directory holding packing.ksk")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("finalize", help="decrypt score packs and classify")
    common(p)
    p.add_argument("--packs", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--truth", help="plaintext labels for accuracy")
    p.add_argument("--no-balance", action="store_true")
    p.add_argument("--out", help="report path (also printed)")
    p.set_defaults(func=cmd_finalize)

    p = sub.add_parser("oracle", help="plaintext pipeline, same report schema")
    common(p)
    _add_dataset_args(p)
    p.add_argument("--perm-seed", type=int, default=0)
    p.add_argument("--out", help="report path")
    p.add_argument("--model-out", help="save the plaintext model")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="timing/memory report on synthetic data")
    common(p)
    p.add_argument("--train-samples", type=int, default=8)
    p.add_argument("--test-samples", type=int, default=2)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DecryptionDiagnostics as e:
        print(f"decryption diagnostics: {e}", file=sys.stderr)
        return EXIT_DECRYPT
    except (FileFormatError, hdata.DataError, WnnError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
