"""Binary file formats and the run manifest.

Every file starts with the magic, a format version, and a JSON meta block
that embeds the full parameter set (including the insecure flag, which is
checked on load) and the PRNG identifier. Array payloads follow as raw
little-endian buffers with a small shape header each. Encrypted-sample and
score-pack files are sequences of records so they can be streamed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .hewnn import EncryptedSample, HomWisardModel, ScorePack
from .params import GadgetSpec, HeParams
from .tfhe import PRNG_ID, PackingKeySwitchKey, RgswCiphertext, SecretKey
from .wnn import ClassCounts, IntegerWisardModel, WisardGeometry

MAGIC = b"HWSD"
VERSION = 1


class FileFormatError(ValueError):
    pass


class InsecureParamsError(FileFormatError):
    """File carries an insecure parameter set and the caller did not opt in."""


# ---------------------------------------------------------------------------
# framing


def params_meta(params: HeParams) -> dict:
    return {
        "name": params.name, "degree_log": params.degree_log,
        "sigma_rel": params.sigma_rel,
        "gadget": [params.gadget.levels, params.gadget.base_log],
        "gadget_ks": [params.gadget_ks.levels, params.gadget_ks.base_log],
        "p": params.p, "insecure": params.insecure, "exact_mul": params.exact_mul,
    }


def params_from_meta(m: dict) -> HeParams:
    return HeParams(name=m["name"], degree_log=m["degree_log"],
                    sigma_rel=m["sigma_rel"], gadget=GadgetSpec(*m["gadget"]),
                    gadget_ks=GadgetSpec(*m["gadget_ks"]), p=m["p"],
                    insecure=m["insecure"], exact_mul=m["exact_mul"])


def geometry_meta(g: WisardGeometry) -> dict:
    return asdict(g)


def geometry_from_meta(m: dict) -> WisardGeometry:
    return WisardGeometry(**m)


def write_header(f, kind: str, params: HeParams | None, extra: dict | None = None):
    meta = {"kind": kind, "prng": PRNG_ID}
    if params is not None:
        meta["params"] = params_meta(params)
    meta.update(extra or {})
    blob = json.dumps(meta).encode()
    f.write(MAGIC)
    f.write(struct.pack("<HI", VERSION, len(blob)))
    f.write(blob)


def read_header(f, kind: str, *, allow_insecure: bool = False) -> dict:
    magic = f.read(4)
    if magic != MAGIC:
        raise FileFormatError(f"bad magic {magic!r}; not a {kind} file")
    version, mlen = struct.unpack("<HI", f.read(6))
    if version != VERSION:
        raise FileFormatError(f"unsupported format version {version}")
    meta = json.loads(f.read(mlen).decode())
    if meta.get("kind") != kind:
        raise FileFormatError(f"expected a {kind} file, found {meta.get('kind')!r}")
    p = meta.get("params")
    if p and p.get("insecure") and not allow_insecure:
        raise InsecureParamsError(
            "file uses INSECURE parameters; pass allow_insecure/--insecure to load it")
    return meta


def write_array(f, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<")
    tag = dt.str.encode()
    f.write(struct.pack("<B", len(tag)))
    f.write(tag)
    f.write(struct.pack("<B", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
    f.write(arr.astype(dt, copy=False).tobytes())


def read_array(f) -> np.ndarray:
    head = f.read(1)
    if not head:
        raise EOFError
    (tlen,) = struct.unpack("<B", head)
    dt = np.dtype(f.read(tlen).decode())
    (ndim,) = struct.unpack("<B", f.read(1))
    shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = f.read(count * dt.itemsize)
    if len(raw) != count * dt.itemsize:
        raise FileFormatError("truncated array data")
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


def _check_params(meta: dict, expect: HeParams | None):
    if expect is not None and params_from_meta(meta["params"]) != expect:
        raise FileFormatError("file parameter set does not match the expected one")


# ---------------------------------------------------------------------------
# keys


def save_secret_key(path, key: SecretKey):
    with open(path, "wb") as f:
        write_header(f, "secret-key", key.params)
        write_array(f, key.s)


def load_secret_key(path, *, allow_insecure: bool = False) -> SecretKey:
    with open(path, "rb") as f:
        meta = read_header(f, "secret-key", allow_insecure=allow_insecure)
        return SecretKey(params_from_meta(meta["params"]), read_array(f))


def save_ksk(path, ksk: PackingKeySwitchKey):
    with open(path, "wb") as f:
        write_header(f, "ksk", ksk.params)
        write_array(f, ksk.data)


def load_ksk(path, *, allow_insecure: bool = False) -> PackingKeySwitchKey:
    with open(path, "rb") as f:
        meta = read_header(f, "ksk", allow_insecure=allow_insecure)
        return PackingKeySwitchKey(params_from_meta(meta["params"]), read_array(f))


# ---------------------------------------------------------------------------
# encrypted sample streams


def write_samples(path, samples: Iterable[EncryptedSample], params: HeParams,
                  extra: dict | None = None) -> int:
    """Stream encrypted samples to disk; returns the record count."""
    n = 0
    with open(path, "wb") as f:
        write_header(f, "enc-samples", params, extra)
        for s in samples:
            data = np.stack([ct.data for ct in s.data_bits])
            f.write(struct.pack("<B", 1 if s.label_bits is not None else 0))
            write_array(f, data)
            if s.label_bits is not None:
                write_array(f, np.stack([ct.data for ct in s.label_bits]))
            n += 1
    return n


def read_samples(path, *, allow_insecure: bool = False,
                 expect_params: HeParams | None = None) -> Iterator[EncryptedSample]:
    """Stream encrypted samples back; never holds the whole file in memory."""
    with open(path, "rb") as f:
        meta = read_header(f, "enc-samples", allow_insecure=allow_insecure)
        _check_params(meta, expect_params)
        params = params_from_meta(meta["params"])
        while True:
            flag = f.read(1)
            if not flag:
                return
            data = read_array(f)
            bits = [RgswCiphertext(params, data[i]) for i in range(data.shape[0])]
            label = None
            if flag[0]:
                lab = read_array(f)
                label = [RgswCiphertext(params, lab[i]) for i in range(lab.shape[0])]
            yield EncryptedSample(params, bits, label)


def samples_meta(path, *, allow_insecure: bool = False) -> dict:
    with open(path, "rb") as f:
        return read_header(f, "enc-samples", allow_insecure=allow_insecure)


# ---------------------------------------------------------------------------
# models and score packs


def save_he_model(path, model: HomWisardModel, extra: dict | None = None):
    with open(path, "wb") as f:
        write_header(f, "he-model", model.params,
                     {"geometry": geometry_meta(model.geometry), **(extra or {})})
        write_array(f, model.rams)
        write_array(f, model.counts_ct)


def load_he_model(path, *, allow_insecure: bool = False,
                  expect_params: HeParams | None = None) -> HomWisardModel:
    with open(path, "rb") as f:
        meta = read_header(f, "he-model", allow_insecure=allow_insecure)
        _check_params(meta, expect_params)
        params = params_from_meta(meta["params"])
        geometry = geometry_from_meta(meta["geometry"])
        return HomWisardModel(geometry, params, read_array(f), read_array(f))


def write_scorepacks(path, packs: Iterable[ScorePack], params: HeParams,
                     geometry: WisardGeometry, extra: dict | None = None) -> int:
    n = 0
    with open(path, "wb") as f:
        write_header(f, "scorepack", params,
                     {"geometry": geometry_meta(geometry), **(extra or {})})
        for p in packs:
            write_array(f, p.packed)
            write_array(f, p.counts_ct)
            n += 1
    return n


def read_scorepacks(path, *, allow_insecure: bool = False) -> Iterator[ScorePack]:
    with open(path, "rb") as f:
        meta = read_header(f, "scorepack", allow_insecure=allow_insecure)
        params = params_from_meta(meta["params"])
        geometry = geometry_from_meta(meta["geometry"])
        while True:
            try:
                packed = read_array(f)
            except EOFError:
                return
            yield ScorePack(geometry, params, packed, read_array(f))


def save_plain_model(path, model: IntegerWisardModel, counts: ClassCounts,
                     extra: dict | None = None):
    with open(path, "wb") as f:
        write_header(f, "plain-model", None,
                     {"geometry": geometry_meta(model.geometry), **(extra or {})})
        write_array(f, model.counters)
        write_array(f, counts.counts)


def load_plain_model(path) -> tuple[IntegerWisardModel, ClassCounts, dict]:
    with open(path, "rb") as f:
        meta = read_header(f, "plain-model")
        geometry = geometry_from_meta(meta["geometry"])
        return (IntegerWisardModel(geometry, read_array(f)),
                ClassCounts(read_array(f)), meta)


# ---------------------------------------------------------------------------
# manifests (human-readable key: value text)


def write_manifest(path, entries: dict):
    lines = [f"{k}: {v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out
