"""Key derivation from a user key and timestamp, and key files.

The position template and the modulus indices are read as 6-bit chunks of
AES-128-ECB blocks: the timestamp block encrypted under the user key gives
``C1`` (template), and ``C2 = AES(C1)`` gives the modulus indices. When a
stream needs more than the 21 whole chunks one block holds, the chain keeps
going (``C_{k+1} = AES(C_k)``); the modulus stream starts right after the
blocks consumed by the template.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from math import ceil

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import CapacityError, KeyDerivationError, KeyFormatError, ParameterError
from .modmath import ModulusSet, capacity_check, gen_prime_pool

CHUNK_BITS = 6
CHUNKS_PER_BLOCK = 128 // CHUNK_BITS  # 21, the last 2 bits are dropped
MAX_CHAIN_BLOCKS = 64
MIN_AMPLIFICATION_RATIO_BITS = 30
KEY_FILE_MAGIC = "cmpswhe-key"
KEY_FILE_VERSION = "v1"


@dataclass(frozen=True)
class Envelope:
    """Declared operating envelope: plaintext bound, order and term count."""

    max_p: int = 65535
    max_order: int = 4
    max_terms: int = 16

    def admits(self, a: int, mset: ModulusSet) -> bool:
        return capacity_check(a, self.max_p, self.max_order, self.max_terms, mset)


@dataclass(frozen=True)
class KeyParams:
    """Key-generation parameters.

    ``a`` and ``eta_max`` default to values derived from ``start_bits``:
    ``eta_max = 2**(start_bits + 1)`` (just above every pool prime) and
    ``a = eta_max * 2**38``.
    """

    n: int = 64
    N: int = 20
    M: int = 64
    start_bits: int = 61
    a: int | None = None
    eta_max: int | None = None
    envelope: Envelope = field(default_factory=Envelope)

    def __post_init__(self):
        if self.eta_max is None:
            object.__setattr__(self, "eta_max", 2 ** (self.start_bits + 1))
        if self.a is None:
            object.__setattr__(self, "a", self.eta_max * 2**38)
        if not self.n > self.N >= 1:
            raise ParameterError(f"pool size n={self.n} must exceed modulus count N={self.N}")
        if self.N > 2**CHUNK_BITS:
            raise ParameterError(f"N={self.N} exceeds the 64 indices a 6-bit chunk can address")
        if self.M < 2:
            raise ParameterError("M must be at least 2")
        if self.start_bits < 2:
            raise ParameterError("start_bits must be >= 2")


@dataclass(frozen=True)
class PublicKey:
    a: int
    mset: ModulusSet
    m_slots: int
    envelope: Envelope = field(default_factory=Envelope)

    def __post_init__(self):
        if self.a < 1:
            raise ParameterError("amplification factor must be positive")
        if self.m_slots < 2:
            raise ParameterError("M must be at least 2")
        if not self.envelope.admits(self.a, self.mset):
            raise CapacityError(
                f"envelope {self.envelope} does not fit the modulus product",
                required=self.envelope.max_terms
                * (self.a * self.envelope.max_p) ** self.envelope.max_order,
                available=self.mset.product,
            )

    @property
    def N(self) -> int:
        return len(self.mset)

    @property
    def fingerprint(self) -> str:
        return self.mset.fingerprint

    def with_envelope(self, envelope: Envelope) -> PublicKey:
        return replace(self, envelope=envelope)


@dataclass(frozen=True)
class PrivateKey:
    pk: PublicKey
    template: tuple[int, ...]
    eta_max: int
    timestamp: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "template", tuple(int(s) for s in self.template))
        if len(self.template) != self.pk.N:
            raise ParameterError(
                f"template has {len(self.template)} entries for {self.pk.N} moduli"
            )
        if any(not 0 <= s < self.pk.m_slots for s in self.template):
            raise ParameterError(f"template entries must lie in [0, {self.pk.m_slots})")
        if self.eta_max < 1:
            raise ParameterError("eta_max must be positive")

    @property
    def a(self) -> int:
        return self.pk.a

    @property
    def mset(self) -> ModulusSet:
        return self.pk.mset

    @property
    def m_slots(self) -> int:
        return self.pk.m_slots

    def with_envelope(self, envelope: Envelope) -> PrivateKey:
        return replace(self, pk=self.pk.with_envelope(envelope))

    def validate(self) -> None:
        """Enforce the parameter-setting rules on top of the structural ones.

        Randomization must outgrow every modulus (``eta_max > max(b_i)``),
        amplification must dwarf it (``a >= 2**30 * eta_max``), and the
        envelope must fit (checked when the public key was built).
        """
        biggest = max(self.mset.moduli)
        if not self.eta_max > biggest:
            raise ParameterError(
                f"eta_max={self.eta_max} must exceed the largest modulus {biggest}"
            )
        if self.a < self.eta_max << MIN_AMPLIFICATION_RATIO_BITS:
            raise ParameterError(
                f"a={self.a} must be at least 2**{MIN_AMPLIFICATION_RATIO_BITS} * eta_max"
            )


def _aes_ecb(user_key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(user_key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def block_chunks(block: bytes) -> list[int]:
    """The 21 whole 6-bit chunks of a 16-byte block, most significant first."""
    value = int.from_bytes(block, "big")
    return [
        (value >> (128 - CHUNK_BITS * (k + 1))) & (2**CHUNK_BITS - 1)
        for k in range(CHUNKS_PER_BLOCK)
    ]


def timestamp_block(timestamp: int) -> bytes:
    if not 0 <= timestamp < 2**64:
        raise ParameterError("timestamp must fit an unsigned 64-bit integer")
    return timestamp.to_bytes(16, "big")


def _check_user_key(user_key: bytes) -> bytes:
    user_key = bytes(user_key)
    if len(user_key) != 16:
        raise ParameterError(f"user key must be 16 bytes, got {len(user_key)}")
    return user_key


def derive_template(user_key: bytes, timestamp: int, N: int, M: int) -> tuple[tuple[int, ...], bytes]:
    """Position template and the last template block of the AES chain."""
    user_key = _check_user_key(user_key)
    block = _aes_ecb(user_key, timestamp_block(timestamp))
    chunks = block_chunks(block)
    for _ in range(ceil(N / CHUNKS_PER_BLOCK) - 1):
        block = _aes_ecb(user_key, block)
        chunks += block_chunks(block)
    return tuple(c % M for c in chunks[:N]), block


def derive_keys(user_key: bytes, timestamp: int, params: KeyParams | None = None):
    """Derive ``(PublicKey, PrivateKey)`` deterministically."""
    params = params or KeyParams()
    user_key = _check_user_key(user_key)
    template, block = derive_template(user_key, timestamp, params.N, params.M)

    chosen: list[int] = []
    for _ in range(MAX_CHAIN_BLOCKS):
        block = _aes_ecb(user_key, block)
        for chunk in block_chunks(block):
            idx = chunk % params.n
            if idx not in chosen:
                chosen.append(idx)
                if len(chosen) == params.N:
                    break
        if len(chosen) == params.N:
            break
    else:
        raise KeyDerivationError(
            f"found only {len(chosen)} distinct modulus indices in {MAX_CHAIN_BLOCKS} blocks"
        )

    pool = gen_prime_pool(params.start_bits, params.n)
    mset = ModulusSet([pool[i] for i in chosen], check=False)
    pk = PublicKey(a=params.a, mset=mset, m_slots=params.M, envelope=params.envelope)
    sk = PrivateKey(pk=pk, template=template, eta_max=params.eta_max, timestamp=timestamp)
    sk.validate()
    return pk, sk


# ---------------------------------------------------------------- key files

def _csv(values) -> str:
    return ",".join(str(v) for v in values)


def serialize_keys(key: PublicKey | PrivateKey) -> str:
    if isinstance(key, PrivateKey):
        pk, kind = key.pk, "private"
    elif isinstance(key, PublicKey):
        pk, kind = key, "public"
    else:
        raise TypeError(f"not a key: {type(key).__name__}")
    lines = [
        f"{KEY_FILE_MAGIC} {KEY_FILE_VERSION}",
        f"kind={kind}",
        f"a={pk.a}",
        f"moduli={_csv(pk.mset.moduli)}",
        f"m_slots={pk.m_slots}",
        f"max_p={pk.envelope.max_p}",
        f"max_order={pk.envelope.max_order}",
        f"max_terms={pk.envelope.max_terms}",
    ]
    if kind == "private":
        lines.append(f"template={_csv(key.template)}")
        lines.append(f"eta_max={key.eta_max}")
        if key.timestamp is not None:
            lines.append(f"timestamp={key.timestamp}")
    return "\n".join(lines) + "\n"


_INT = re.compile(r"-?\d+\Z")


def _parse_int(name, text):
    if not _INT.match(text):
        raise KeyFormatError(f"field {name!r} is not a decimal integer: {text!r}")
    return int(text)


def _parse_list(name, text):
    return tuple(_parse_int(name, part) for part in text.split(","))


def parse_keys(text: str, strict: bool = True) -> PublicKey | PrivateKey:
    """Parse a key file.

    Structural invariants (prime, distinct moduli; template range; envelope
    capacity) are always enforced. ``strict`` additionally applies the
    randomization/amplification rules to private keys; turn it off only for
    hand-built demonstration keys.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise KeyFormatError("empty key file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != KEY_FILE_MAGIC:
        raise KeyFormatError(f"not a key file (header {lines[0]!r})")
    if head[1] != KEY_FILE_VERSION:
        raise KeyFormatError(f"unsupported key file version {head[1]!r}")
    fields = {}
    for ln in lines[1:]:
        name, sep, value = ln.partition("=")
        if not sep:
            raise KeyFormatError(f"malformed line {ln!r}")
        if name in fields:
            raise KeyFormatError(f"duplicate field {name!r}")
        fields[name] = value

    kind = fields.pop("kind", None)
    public_fields = {"a", "moduli", "m_slots", "max_p", "max_order", "max_terms"}
    private_fields = {"template", "eta_max"}
    if kind == "public":
        expected, optional = public_fields, set()
    elif kind == "private":
        expected, optional = public_fields | private_fields, {"timestamp"}
    else:
        raise KeyFormatError(f"unknown key kind {kind!r}")
    missing = expected - fields.keys()
    extra = fields.keys() - expected - optional
    if missing:
        raise KeyFormatError(f"missing fields: {sorted(missing)}")
    if extra:
        raise KeyFormatError(f"unexpected fields: {sorted(extra)}")

    try:
        mset = ModulusSet(_parse_list("moduli", fields["moduli"]))
        envelope = Envelope(
            max_p=_parse_int("max_p", fields["max_p"]),
            max_order=_parse_int("max_order", fields["max_order"]),
            max_terms=_parse_int("max_terms", fields["max_terms"]),
        )
        pk = PublicKey(
            a=_parse_int("a", fields["a"]),
            mset=mset,
            m_slots=_parse_int("m_slots", fields["m_slots"]),
            envelope=envelope,
        )
        if kind == "public":
            return pk
        timestamp = fields.get("timestamp")
        sk = PrivateKey(
            pk=pk,
            template=_parse_list("template", fields["template"]),
            eta_max=_parse_int("eta_max", fields["eta_max"]),
            timestamp=None if timestamp is None else _parse_int("timestamp", timestamp),
        )
        if strict:
            sk.validate()
        return sk
    except (ValueError, CapacityError) as exc:
        if isinstance(exc, KeyFormatError):
            raise
        raise KeyFormatError(f"invalid key: {exc}") from exc
