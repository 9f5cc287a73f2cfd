"""Named run configurations binding model hyperparameters to TFHE sets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

from .params import HeParams, named_params
from .wnn import ActivationSpec, PreprocessSpec, WisardGeometry, WnnError


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one model family end to end."""

    name: str
    addr: int                   # RAM address size
    therm_size: int
    therm_kind: str             # "lin" | "log"
    act_kind: str               # "bin" | "log" | "b-log"
    act_thr: int
    act_c: int
    he_set: str                 # TFHE parameter set name
    p: int                      # plaintext / counter modulus
    quant_kind: str = "none"    # input quantizer ahead of the thermometer
    quant_bits: int = 8
    in_range: int = 256
    feature_count: int = 0      # 0: taken from the dataset at run time
    class_count: int = 0
    balance: bool = False       # apply class-count rescaling at activation

    def preprocess_spec(self) -> PreprocessSpec:
        return PreprocessSpec(self.quant_kind, self.quant_bits, self.in_range,
                              self.therm_size, self.therm_kind)

    def activation(self) -> ActivationSpec:
        return ActivationSpec(self.act_kind, thr=self.act_thr, c=self.act_c)

    def he_params(self) -> HeParams:
        return named_params(self.he_set, p=self.p)

    def input_bits(self, feature_count: int | None = None) -> int:
        f = feature_count or self.feature_count
        if not f:
            raise WnnError("feature count unknown; pass it or set it in the config")
        return f * self.therm_size

    def geometry(self, perm_seed: int, *, feature_count: int | None = None,
                 class_count: int | None = None) -> WisardGeometry:
        l = class_count or self.class_count
        if not l:
            raise WnnError("class count unknown; pass it or set it in the config")
        return WisardGeometry(s=self.input_bits(feature_count), l=l,
                              a=self.addr, r=perm_seed, p=self.p)

    def validate_training_size(self, per_class_counts) -> None:
        """Counters may not wrap: every per-class total must stay below p."""
        worst = max(int(c) for c in per_class_counts)
        if worst >= self.p:
            raise WnnError(
                f"{worst} samples of one class overflow counters mod p={self.p}; "
                f"use a larger plaintext modulus")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


# Model families: address size, thermometer, activation, threshold, TFHE set
# and plaintext modulus per family; MNIST additionally quantizes 8 -> 4 bits.
_NAMED_CONFIGS = {
    "mnist_t": RunConfig("mnist_t", addr=9, therm_size=4, therm_kind="log",
                         act_kind="b-log", act_thr=0, act_c=4,
                         he_set="HE_0", p=1 << 8, quant_kind="lin", quant_bits=4,
                         feature_count=784, class_count=10),
    "mnist_s": RunConfig("mnist_s", addr=12, therm_size=4, therm_kind="log",
                         act_kind="b-log", act_thr=0, act_c=4,
                         he_set="HE_0", p=1 << 10, quant_kind="lin", quant_bits=4,
                         feature_count=784, class_count=10),
    "mnist_m": RunConfig("mnist_m", addr=14, therm_size=4, therm_kind="log",
                         act_kind="b-log", act_thr=0, act_c=4,
                         he_set="HE_1", p=1 << 12, quant_kind="lin", quant_bits=4,
                         feature_count=784, class_count=10),
    "mnist_l": RunConfig("mnist_l", addr=16, therm_size=4, therm_kind="log",
                         act_kind="b-log", act_thr=0, act_c=4,
                         he_set="HE_1", p=1 << 13, quant_kind="lin", quant_bits=4,
                         feature_count=784, class_count=10),
    "wisconsin": RunConfig("wisconsin", addr=10, therm_size=5, therm_kind="lin",
                           act_kind="log", act_thr=0, act_c=4,
                           he_set="HE_0", p=1 << 9, quant_kind="none",
                           feature_count=30, class_count=2, balance=True),
}


def named_config(name: str) -> RunConfig:
    try:
        return _NAMED_CONFIGS[name]
    except KeyError:
        raise KeyError(f"unknown config {name!r}; choose from "
                       f"{sorted(_NAMED_CONFIGS)}") from None


def config_names() -> list[str]:
    return sorted(_NAMED_CONFIGS)


def load_config(name_or_path: str) -> RunConfig:
    """Named config, or a JSON file for custom runs."""
    if name_or_path in _NAMED_CONFIGS:
        return _NAMED_CONFIGS[name_or_path]
    try:
        with open(name_or_path) as f:
            return RunConfig.from_json(f.read())
    except FileNotFoundError:
        raise KeyError(f"{name_or_path!r} is neither a named config "
                       f"({sorted(_NAMED_CONFIGS)}) nor a config file") from None


def custom_config(base: str, **overrides) -> RunConfig:
    return replace(named_config(base), name=f"{base}-custom", **overrides)
