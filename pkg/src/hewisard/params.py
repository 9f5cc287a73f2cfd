"""TFHE parameter sets.

The ciphertext modulus is fixed at q = 2^64 throughout (wrapping uint64
arithmetic); parameter sets only vary the ring dimension, noise rate and
gadget decompositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

Q_BITS = 64
Q = 1 << Q_BITS


@dataclass(frozen=True)
class GadgetSpec:
    """Signed gadget decomposition: `levels` digits in base 2^base_log.

    Digits are centered in [-beta/2, beta/2). Digit t (0-based) carries the
    gadget power q / beta^(t+1).
    """

    levels: int
    base_log: int

    def __post_init__(self):
        if self.levels < 1 or self.base_log < 1:
            raise ValueError("gadget levels and base_log must be positive")
        if self.levels * self.base_log > Q_BITS:
            raise ValueError("gadget spans more than 64 bits")

    @property
    def base(self) -> int:
        return 1 << self.base_log

    @property
    def tail_bits(self) -> int:
        # bits of q dropped by the decomposition (rounding error < 2^tail_bits)
        return Q_BITS - self.levels * self.base_log

    def power(self, t: int) -> int:
        # gadget power of digit t: q / beta^(t+1)
        return 1 << (Q_BITS - (t + 1) * self.base_log)


@dataclass(frozen=True)
class HeParams:
    """One TFHE instantiation: ring dimension, noise rate, gadgets, plaintext modulus."""

    name: str
    degree_log: int
    sigma_rel: float            # sigma / q for fresh RLWE/RGSW noise
    gadget: GadgetSpec          # external-product decomposition (ell, beta)
    gadget_ks: GadgetSpec       # packing key-switch decomposition (ell_KS, beta_KS)
    p: int                      # plaintext modulus, power of two dividing q
    insecure: bool = False      # explicit flag for toy parameter sets
    exact_mul: bool = False     # force exact (schoolbook) products everywhere

    def __post_init__(self):
        if self.p < 2 or self.p & (self.p - 1):
            raise ValueError("plaintext modulus must be a power of two >= 2")
        if self.p > Q:
            raise ValueError("plaintext modulus does not divide q")
        if self.degree_log < 2 or self.degree_log > 16:
            raise ValueError("unsupported ring dimension")

    @property
    def n(self) -> int:
        return 1 << self.degree_log

    @property
    def sigma(self) -> float:
        return self.sigma_rel * float(Q)

    @property
    def delta(self) -> int:
        # message scale q/p
        return Q // self.p

    def with_p(self, p: int) -> "HeParams":
        return replace(self, p=p)


_SIGMA_REL = 1.1 * 2.0 ** -51

# Production sets. HE_0 / HE_1 share N and sigma/q and differ in the
# decomposition parameters; the plaintext modulus is supplied per model.
_NAMED = {
    "HE_0": dict(degree_log=11, sigma_rel=_SIGMA_REL,
                 gadget=GadgetSpec(1, 23), gadget_ks=GadgetSpec(2, 15)),
    "HE_1": dict(degree_log=11, sigma_rel=_SIGMA_REL,
                 gadget=GadgetSpec(2, 15), gadget_ks=GadgetSpec(3, 11)),
    # Zero-noise toy sets with a full-precision gadget: every operation is
    # exact mod 2^64, which lets tests assert bit-exact oracle equality.
    "INSECURE_64": dict(degree_log=6, sigma_rel=0.0,
                        gadget=GadgetSpec(2, 32), gadget_ks=GadgetSpec(2, 32),
                        insecure=True, exact_mul=True),
    "INSECURE_256": dict(degree_log=8, sigma_rel=0.0,
                         gadget=GadgetSpec(2, 32), gadget_ks=GadgetSpec(2, 32),
                         insecure=True, exact_mul=True),
}


def named_params(name: str, p: int) -> HeParams:
    """Instantiate a named parameter set with plaintext modulus `p`."""
    try:
        kw = _NAMED[name]
    except KeyError:
        raise KeyError(f"unknown parameter set {name!r}; "
                       f"choose from {sorted(_NAMED)}") from None
    return HeParams(name=name, p=p, **kw)


def param_set_names() -> list[str]:
    return sorted(_NAMED)
