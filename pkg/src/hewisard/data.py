"""Dataset ingestion and preprocessing.

Loaders are byte-deterministic; splits are reproducible by seed; sample
preprocessing depends only on the sample and the spec (no cross-sample
statistics), so it commutes with encryption and with streaming.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .tfhe import make_rng
from .wnn import PreprocessSpec, WnnError, quantize, thermometer_encode

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    pass


@dataclass
class DatasetMeta:
    feature_count: int
    value_range: int
    class_count: int
    source_id: str


@dataclass
class Dataset:
    samples: np.ndarray         # (n, features) integers
    labels: np.ndarray          # (n,) class indices
    meta: DatasetMeta

    def __post_init__(self):
        if len(self.samples) != len(self.labels):
            raise DataError("sample/label count mismatch")
        if len(self.labels) and int(self.labels.max()) >= self.meta.class_count:
            raise DataError("label out of range")

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.samples[idx], self.labels[idx], self.meta)


@dataclass
class BitDataset:
    bits: np.ndarray            # (n, s) uint8
    labels: np.ndarray
    meta: DatasetMeta

    @property
    def s(self) -> int:
        return self.bits.shape[1]

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train fraction must be in (0, 1)")


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split."""
    rng = make_rng(spec.seed)
    idx = rng.permutation(len(dataset))
    cut = int(len(dataset) * spec.train_fraction)
    return dataset.subset(idx[:cut]), dataset.subset(idx[cut:])


# ---------------------------------------------------------------------------
# MNIST IDX files


def _open_maybe_gz(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load the big-endian IDX image/label pair (optionally gzipped)."""
    with _open_maybe_gz(images_path) as f:
        head = f.read(16)
        if len(head) < 16:
            raise DataError(f"{images_path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(f"{images_path}: bad IDX magic {magic:#010x}")
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise DataError(f"{images_path}: truncated image data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    with _open_maybe_gz(labels_path) as f:
        head = f.read(8)
        if len(head) < 8:
            raise DataError(f"{labels_path}: truncated IDX header")
        magic, lcount = struct.unpack(">II", head)
        if magic != IDX_LABELS_MAGIC:
            raise DataError(f"{labels_path}: bad IDX magic {magic:#010x}")
        raw = f.read(lcount)
        if len(raw) != lcount:
            raise DataError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if lcount != count:
        raise DataError(f"image/label count mismatch: {count} vs {lcount}")
    meta = DatasetMeta(rows * cols, 256, 10, f"mnist-idx:{images_path}")
    return Dataset(images.astype(np.int64), labels.astype(np.int64), meta)


# ---------------------------------------------------------------------------
# delimited text (Wisconsin-style tabular data)


@dataclass(frozen=True)
class TabularSchema:
    label_column: str
    feature_columns: tuple[str, ...] | None = None   # None: all other columns
    delimiter: str = ","
    drop_columns: tuple[str, ...] = ()


def load_tabular(path, schema: TabularSchema,
                 bounds: tuple[np.ndarray, np.ndarray] | None = None
                 ) -> tuple[Dataset, tuple[np.ndarray, np.ndarray]]:
    """Load delimited text, min-max scale, and quantize to 8-bit integers.

    `bounds` supplies per-feature (lo, hi) from a reference split; when
    omitted the file's own extremes are used. Returns the dataset and the
    bounds actually applied (for the manifest).
    """
    raw, labels = _read_tabular(path, schema)
    lo, hi = bounds if bounds is not None else (raw.min(axis=0), raw.max(axis=0))
    ds = Dataset(quantize_tabular(raw, lo, hi), labels,
                 DatasetMeta(raw.shape[1], 256, int(labels.max()) + 1, f"tabular:{path}"))
    return ds, (lo, hi)


def _read_tabular(path, schema: TabularSchema) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        if schema.label_column not in reader.fieldnames:
            raise DataError(f"{path}: missing label column {schema.label_column!r}")
        feat_cols = schema.feature_columns or tuple(
            c for c in reader.fieldnames
            if c != schema.label_column and c not in schema.drop_columns)
        missing = [c for c in feat_cols if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        rows, labels = [], []
        label_map: dict[str, int] = {}
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[c]) for c in feat_cols])
            except (TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from None
            lab = rec[schema.label_column]
            labels.append(label_map.setdefault(lab, len(label_map)))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def quantize_tabular(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((raw - lo) / span * 255, 0, 255).astype(np.int64)


def load_tabular_split(path, schema: TabularSchema, spec: SplitSpec
                       ) -> tuple[Dataset, Dataset, tuple[np.ndarray, np.ndarray]]:
    """Split first, then scale both parts by the training split's bounds."""
    raw, labels = _read_tabular(path, schema)
    rng = make_rng(spec.seed)
    idx = rng.permutation(len(raw))
    cut = int(len(raw) * spec.train_fraction)
    tr, te = idx[:cut], idx[cut:]
    lo, hi = raw[tr].min(axis=0), raw[tr].max(axis=0)
    classes = int(labels.max()) + 1
    meta = DatasetMeta(raw.shape[1], 256, classes, f"tabular:{path}")
    train = Dataset(quantize_tabular(raw[tr], lo, hi), labels[tr], meta)
    test = Dataset(quantize_tabular(raw[te], lo, hi), labels[te], meta)
    return train, test, (lo, hi)


# ---------------------------------------------------------------------------
# preprocessing


def preprocess(dataset: Dataset, spec: PreprocessSpec) -> BitDataset:
    """Quantize + thermometer-encode every sample: (n, f) -> (n, f*T) bits."""
    v = dataset.samples
    if spec.quant_kind == "lin":
        ratio = max(1, spec.in_range // (1 << spec.quant_bits))
        v = quantize(v, "lin", ratio=ratio)
    elif spec.quant_kind == "log":
        base = float(spec.in_range) ** (1.0 / ((1 << spec.quant_bits) - 1))
        v = quantize(v, "log", base=base)
    bits = thermometer_encode(v, spec.thresholds())
    bits = bits.reshape(len(v), -1)
    if bits.shape[1] != dataset.meta.feature_count * spec.therm_size:
        raise WnnError("preprocess spec does not match the feature count")
    return BitDataset(bits, dataset.labels.copy(), dataset.meta)


# ---------------------------------------------------------------------------
# synthetic unbalanced data (balancing test fixture)


def make_unbalanced(class_ratios, seed: int, *, samples: int = 400,
                    features: int = 32, value_range: int = 256,
                    center_spread: float = 22.0, cluster_std: float = 40.0,
                    centers_seed: int | None = None) -> Dataset:
    """Overlapping integer-valued Gaussian clusters with skewed class sizes.

    Class centers are deterministic in `centers_seed` (defaults to `seed`),
    so train and test sets drawn with different `seed` values share the
    underlying distribution. The overlap makes the majority class swamp the
    minority under raw counting while staying separable after balancing.
    """
    ratios = np.asarray(class_ratios, dtype=np.float64)
    ratios /= ratios.sum()
    crng = make_rng([centers_seed if centers_seed is not None else seed, 0xC])
    base = crng.uniform(value_range * 0.35, value_range * 0.65, features)
    centers = [base + crng.normal(0.0, center_spread, features) for _ in ratios]
    rng = make_rng([seed, 0x5])
    xs, ys = [], []
    for c, frac in enumerate(ratios):
        n_c = int(round(samples * frac))
        pts = rng.normal(centers[c], cluster_std, (n_c, features))
        xs.append(np.clip(pts, 0, value_range - 1).astype(np.int64))
        ys.append(np.full(n_c, c, dtype=np.int64))
    samples_arr = np.concatenate(xs)
    labels = np.concatenate(ys)
    order = rng.permutation(len(labels))
    meta = DatasetMeta(features, value_range, len(ratios),
                       f"synthetic-unbalanced:seed={seed}")
    return Dataset(samples_arr[order], labels[order], meta)
