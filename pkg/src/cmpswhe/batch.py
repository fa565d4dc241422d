"""CRT lane packing: many small plaintexts ride in one large plaintext.

The lane moduli belong to the client only. A packed value ``X`` satisfies
``X mod B_new_i = x_i``; blind results are decrypted, rounded to an exact
integer, and only then split back into lanes.

Lane values are non-negative. Signed quantities use an offset: add a
constant before packing and subtract it after unpacking (see
:func:`offset_pack`).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from math import prod

import numpy as np

from .errors import FormatError, LaneOverflowError
from .keys import Envelope, PublicKey
from .modmath import ModulusSet, capacity_check, next_primes

PACK_FILE_MAGIC = "cmpswhe-packing"
PACK_FILE_VERSION = "v1"
DEFAULT_HEADROOM = 2


@dataclass(frozen=True)
class PackingKey:
    lane_moduli: tuple[int, ...]
    lane_bound: int

    def __post_init__(self):
        object.__setattr__(self, "lane_moduli", tuple(int(b) for b in self.lane_moduli))
        mset = ModulusSet(self.lane_moduli)  # raises on composite / repeated lanes
        object.__setattr__(self, "_mset", mset)
        if not 0 <= self.lane_bound < min(self.lane_moduli):
            raise ValueError(
                f"lane bound {self.lane_bound} must be below every lane modulus"
            )

    @property
    def k(self) -> int:
        return len(self.lane_moduli)

    @property
    def product(self) -> int:
        return self._mset.product

    @property
    def mset(self) -> ModulusSet:
        return self._mset


def pack(values, pkey: PackingKey) -> int:
    values = [int(v) for v in values]
    if len(values) != pkey.k:
        raise LaneOverflowError(f"{len(values)} values for {pkey.k} lanes")
    for v, b in zip(values, pkey.lane_moduli):
        if not 0 <= v < b:
            raise LaneOverflowError(f"lane value {v} outside [0, {b})")
    return pkey.mset.reconstruct(values)


def unpack(x: int, pkey: PackingKey) -> list[int]:
    x = int(x) % pkey.product
    return [x % b for b in pkey.lane_moduli]


def pack_array(values: np.ndarray, pkey: PackingKey) -> np.ndarray:
    """Pack the last axis (length ``k``) of an integer array; object result."""
    values = np.asarray(values)
    if values.shape[-1] != pkey.k:
        raise LaneOverflowError(f"last axis has {values.shape[-1]} values for {pkey.k} lanes")
    lanes = np.array(pkey.lane_moduli, dtype=object)
    obj = values.astype(object)
    if (obj < 0).any() or (obj >= lanes).any():
        raise LaneOverflowError("lane value outside its lane modulus")
    return pkey.mset.reconstruct_array(obj)


def unpack_array(x: np.ndarray, pkey: PackingKey) -> np.ndarray:
    """Inverse of :func:`pack_array`; returns int64 lanes on a new last axis."""
    x = np.asarray(x, dtype=object)[..., None]
    lanes = np.array(pkey.lane_moduli, dtype=object)
    return (x % lanes).astype(np.int64)


def offset_pack(values: np.ndarray, offset: int, pkey: PackingKey) -> np.ndarray:
    return pack_array(np.asarray(values, dtype=np.int64) + offset, pkey)


def offset_unpack(x: np.ndarray, offset: int, pkey: PackingKey) -> np.ndarray:
    return unpack_array(x, pkey) - offset


@dataclass(frozen=True)
class LanePlan:
    """Outcome of :func:`plan_lanes`.

    ``key`` is ``None`` when the envelope is infeasible for the given public
    key; ``required_a`` and ``required_n`` then say what would be needed.
    """

    feasible: bool
    key: PackingKey | None
    packed_bound: int
    required_a: int
    required_n: int
    message: str

    def __bool__(self):
        return self.feasible


def _noise_bound(packed_bound: int, max_ops: int, max_order: int, eta_max: int, a: int):
    # worst-case deviation of a product of max_order noisy factors, summed max_ops times
    eps = Fraction(eta_max, a)
    return max_ops * ((packed_bound + eps) ** max_order - packed_bound**max_order)


def plan_lanes(
    k: int,
    lane_bound: int,
    envelope: tuple[int, int],
    pk: PublicKey,
    eta_max: int | None = None,
    headroom: int = DEFAULT_HEADROOM,
) -> LanePlan:
    """Choose lane moduli and check the packed computation fits ``pk``.

    ``envelope`` is ``(max_ops, max_order)``. Lanes are the ``k`` smallest
    primes above ``lane_bound * headroom``. Two conditions must hold:
    capacity, ``2 * w * (a * prod(lanes))**t < B_s`` (doubled for signed
    intermediates), and noise, the worst-case rounding error of the packed
    result must stay below 1/2. ``eta_max`` defaults to the largest value a
    valid private key may use, ``a / 2**30``.
    """
    if k < 1:
        raise ValueError("need at least one lane")
    max_ops, max_order = envelope
    lanes = next_primes(lane_bound * headroom, k)
    packed = prod(lanes)
    a = pk.a
    eta = eta_max if eta_max is not None else max(a >> 30, 1)

    # smallest power-of-two amplification that rounds the packed result exactly
    req_a = max(a, 1)
    if _noise_bound(packed, max_ops, max_order, eta, req_a) >= 0.5:
        req_a = 1 << max(eta.bit_length(), 1)
        while _noise_bound(packed, max_ops, max_order, eta, req_a) >= 0.5:
            req_a <<= 1
        req_a = max(req_a, a)
    need = 2 * max_ops * (req_a * packed) ** max_order
    # count moduli as if each were only as large as the smallest one
    min_modulus = min(pk.mset.moduli)
    req_n, cap = 1, min_modulus
    while cap <= need:
        cap *= min_modulus
        req_n += 1

    noise_ok = req_a <= a
    capacity_ok = capacity_check(a, packed, max_order, 2 * max_ops, pk.mset)
    if noise_ok and capacity_ok:
        key = PackingKey(tuple(lanes), lane_bound)
        msg = f"{k} lanes above {lane_bound * headroom}: packed bound {packed.bit_length()} bits"
        return LanePlan(True, key, packed, req_a, req_n, msg)
    msg = (
        f"infeasible for this key: requires a >= 2**{req_a.bit_length() - 1} "
        f"(have 2**{a.bit_length() - 1}) and N >= {req_n} moduli (have {pk.N})"
    )
    return LanePlan(False, None, packed, req_a, req_n, msg)


def packed_envelope(pkey: PackingKey, max_order: int = 1, max_terms: int = 2) -> Envelope:
    """Envelope for encrypting packed values under a main key."""
    return Envelope(max_p=pkey.product - 1, max_order=max_order, max_terms=max_terms)


def serialize_packing_key(pkey: PackingKey) -> str:
    lines = [
        f"{PACK_FILE_MAGIC} {PACK_FILE_VERSION}",
        "kind=packing",
        "lanes=" + ",".join(str(b) for b in pkey.lane_moduli),
        f"lane_bound={pkey.lane_bound}",
    ]
    return "\n".join(lines) + "\n"


def parse_packing_key(text: str) -> PackingKey:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"{PACK_FILE_MAGIC} {PACK_FILE_VERSION}":
        raise FormatError("not a packing key file")
    fields = dict(ln.split("=", 1) for ln in lines[1:] if "=" in ln)
    if fields.get("kind") != "packing" or not {"lanes", "lane_bound"} <= fields.keys():
        raise FormatError("packing key file is missing fields")
    try:
        if not re.fullmatch(r"\d+(,\d+)*", fields["lanes"]):
            raise ValueError("lanes must be decimal")
        lanes = tuple(int(v) for v in fields["lanes"].split(","))
        bound = int(fields["lane_bound"])
        return PackingKey(lanes, bound)
    except ValueError as exc:
        raise FormatError(f"invalid packing key: {exc}") from exc

