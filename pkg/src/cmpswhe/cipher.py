"""Ciphertexts, encryption and decryption.

A :class:`Ciphertext` holds residues shaped ``(*batch, N, M)``: one ``N x M``
matrix per plaintext, so a whole frame can be one ciphertext array. Row
``i`` lives modulo ``b_i``. Public-key ciphertexts repeat the same residue in
every slot of a row and are stored with a single slot column that broadcasts.

Randomness comes from any :class:`random.Random` instance. The default is
:class:`random.SystemRandom` (OS entropy); pass ``random.Random(seed)`` for
reproducible runs.
"""
from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from .errors import CapacityError, FormatError, ModulusMismatchError, OrderError
from .keys import PrivateKey, PublicKey
from .modmath import centered

CT_FILE_MAGIC = "cmpswhe-ct"
CT_FILE_VERSION = "v1"

_system_random = random.SystemRandom()


def default_rng() -> random.Random:
    return _system_random


def draw_below(rng: random.Random | None, n: int, shape=()) -> np.ndarray:
    """Uniform integers in ``[0, n)``; int64 array when ``n <= 2**63``."""
    rng = rng or _system_random
    shape = tuple(shape)
    size = int(np.prod(shape, dtype=np.int64))
    if n <= 0:
        raise ValueError("upper bound must be positive")
    if n > 2**63:
        out = np.empty(size, dtype=object)
        for k in range(size):
            out[k] = rng.randrange(n)
        return out.reshape(shape)
    if n == 1:
        return np.zeros(shape, dtype=np.int64)
    mask = (1 << (n - 1).bit_length()) - 1
    out = np.empty(0, dtype=np.uint64)
    need = size
    while need > 0:
        # rejection sampling keeps the draw exactly uniform
        batch = need + need // 2 + 16
        raw = np.frombuffer(rng.randbytes(8 * batch), dtype=np.uint64) & np.uint64(mask)
        raw = raw[raw < np.uint64(n)]
        out = np.concatenate([out, raw[:need]])
        need = size - out.size
    return out.astype(np.int64).reshape(shape)


class Ciphertext:
    """An array of CMP-SWHE ciphertexts sharing one public key and order."""

    __slots__ = ("residues", "order", "pk")

    def __init__(self, residues: np.ndarray, order: int, pk: PublicKey):
        residues = np.asarray(residues)
        if residues.ndim < 2 or residues.shape[-2] != pk.N:
            raise ValueError(f"residue array {residues.shape} does not match N={pk.N}")
        if residues.shape[-1] not in (1, pk.m_slots):
            raise ValueError(f"residue array {residues.shape} does not match M={pk.m_slots}")
        if order < 1:
            raise OrderError("order must be >= 1")
        if residues.dtype != pk.mset.dtype:
            residues = residues.astype(pk.mset.dtype)
        self.residues = residues
        self.order = int(order)
        self.pk = pk

    @property
    def shape(self) -> tuple[int, ...]:
        return self.residues.shape[:-2]

    @property
    def slot_uniform(self) -> bool:
        return self.residues.shape[-1] == 1

    @property
    def mset_id(self) -> str:
        return self.pk.fingerprint

    def __len__(self):
        if not self.shape:
            raise TypeError("scalar ciphertext has no length")
        return self.shape[0]

    def __getitem__(self, idx) -> Ciphertext:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Ciphertext(self.residues[idx + (Ellipsis, slice(None), slice(None))], self.order, self.pk)

    def reshape(self, *shape) -> Ciphertext:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Ciphertext(self.residues.reshape(tuple(shape) + self.residues.shape[-2:]), self.order, self.pk)

    def matrix(self) -> np.ndarray:
        """Residues expanded to the full ``(*batch, N, M)`` slot layout."""
        full = self.shape + (self.pk.N, self.pk.m_slots)
        return np.broadcast_to(self.residues, full)

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (
            self.order == other.order
            and self.pk.mset == other.pk.mset
            and self.shape == other.shape
            and bool(np.array_equal(self.matrix(), other.matrix()))
        )

    __hash__ = None

    def __repr__(self):
        kind = "public" if self.slot_uniform else "private"
        return (
            f"Ciphertext(shape={self.shape}, N={self.pk.N}, M={self.pk.m_slots}, "
            f"order={self.order}, {kind})"
        )

    @staticmethod
    def stack(items) -> Ciphertext:
        items = list(items)
        first = items[0]
        for ct in items[1:]:
            check_same_group(first, ct)
            if ct.order != first.order:
                raise OrderError("cannot stack ciphertexts of different order")
        width = max(ct.residues.shape[-1] for ct in items)
        arrays = [np.broadcast_to(ct.residues, ct.residues.shape[:-1] + (width,)) for ct in items]
        return Ciphertext(np.stack(arrays), first.order, first.pk)


def check_same_group(x: Ciphertext, y: Ciphertext) -> None:
    if x.pk.mset != y.pk.mset or x.pk.a != y.pk.a:
        raise ModulusMismatchError(
            f"ciphertexts belong to different modulus groups ({x.mset_id} vs {y.mset_id})"
        )


def _as_plain_array(p) -> np.ndarray:
    arr = np.asarray(p, dtype=object)
    return np.vectorize(int, otypes=[object])(arr) if arr.size else arr


def _check_envelope(p: np.ndarray, pk: PublicKey) -> None:
    if p.size and max(abs(int(v)) for v in p.flat) > pk.envelope.max_p:
        raise CapacityError(
            f"plaintext magnitude exceeds the envelope bound {pk.envelope.max_p}",
            required=max(abs(int(v)) for v in p.flat),
            available=pk.envelope.max_p,
        )


def _project(a: int, values: np.ndarray, noise: np.ndarray, pk: PublicKey) -> np.ndarray:
    """``(a * values + noise) mod b_i`` for every modulus; new trailing axis N.

    Works modulo each prime separately so the int64 path never overflows.
    """
    mods = pk.mset.column[:, 0]
    dtype = pk.mset.dtype
    a_mod = np.array([a % b for b in pk.mset.moduli], dtype=object).astype(dtype)
    v = np.asarray(values)[..., None] % mods
    e = np.asarray(noise)[..., None] % mods
    return ((a_mod * v.astype(dtype)) % mods + e.astype(dtype)) % mods


def encrypt_private(p, sk: PrivateKey, rng: random.Random | None = None, eta=None) -> Ciphertext:
    """Client-side encryption of a plaintext or array of plaintexts.

    The true residue of ``a*p + eta`` goes to slot ``s_i`` of row ``i``; the
    other ``M-1`` slots of every row hold residues of ``M-1`` independent
    decoys ``a*R_j + eta_j``. ``eta`` may be given explicitly (scalar or
    array) to reproduce a known encryption.
    """
    pk = sk.pk
    plain = _as_plain_array(p)
    _check_envelope(plain, pk)
    shape = plain.shape
    if eta is None:
        eta = draw_below(rng, sk.eta_max, shape)
    else:
        eta = np.broadcast_to(_as_plain_array(eta), shape)
    true_res = _project(pk.a, plain, eta, pk)  # (*shape, N)

    M, N = pk.m_slots, pk.N
    decoys = draw_below(rng, pk.envelope.max_p + 1, shape + (M - 1,))
    decoy_eta = draw_below(rng, sk.eta_max, shape + (M - 1,))
    decoy_res = _project(pk.a, decoys, decoy_eta, pk)  # (*shape, M-1, N)
    decoy_res = np.swapaxes(decoy_res, -1, -2)  # (*shape, N, M-1)

    template = np.array(sk.template).reshape(N, 1)
    slots = np.arange(M).reshape(1, M)
    # slot j of row i takes decoy j (before the true slot) or j-1 (after it)
    gather = np.where(slots < template, slots, np.maximum(slots - 1, 0))
    gather = np.broadcast_to(gather, shape + (N, M))
    full = np.take_along_axis(decoy_res, gather, axis=-1)
    full = np.where(slots == template, true_res[..., None], full)
    return Ciphertext(full, 1, pk)


def encrypt_public(p, pk: PublicKey) -> Ciphertext:
    """Server-side encryption: ``a*p`` with no randomization, every slot equal."""
    plain = _as_plain_array(p)
    _check_envelope(plain, pk)
    res = _project(pk.a, plain, np.zeros(plain.shape, dtype=np.int64), pk)
    return Ciphertext(res[..., None], 1, pk)


def _check_key(ct: Ciphertext, sk: PrivateKey) -> None:
    if ct.pk.mset != sk.mset or ct.pk.a != sk.a:
        raise ModulusMismatchError(
            f"ciphertext group {ct.mset_id} does not match key group {sk.mset.fingerprint}"
        )
    if sk.a**ct.order >= sk.mset.product:
        raise OrderError(
            f"order {ct.order} leaves no room: a**t exceeds the modulus product"
        )


def _centered_values(ct: Ciphertext, sk: PrivateKey, template=None) -> np.ndarray:
    template = sk.template if template is None else template
    res = ct.residues
    if ct.slot_uniform:
        picked = res[..., 0]
    else:
        idx = np.broadcast_to(np.array(template).reshape(-1, 1), res.shape[:-1] + (1,))
        picked = np.take_along_axis(res, idx, axis=-1)[..., 0]
    total = sk.mset.reconstruct_array(picked)
    product = sk.mset.product
    return np.vectorize(lambda v: centered(int(v), product), otypes=[object])(total)


def _unwrap(arr: np.ndarray):
    return arr.item() if arr.ndim == 0 else arr


def round_quotient(num: int, den: int, mode: str = "nearest") -> int:
    if mode == "floor":
        return num // den
    if mode == "nearest":
        return (2 * num + den) // (2 * den)
    raise ValueError(f"unknown rounding mode {mode!r}")


def decrypt(ct: Ciphertext, sk: PrivateKey, mode: str = "nearest"):
    """Decrypt to integers; returns an int or an object array of ints."""
    if mode not in ("floor", "nearest"):
        raise ValueError(f"unknown rounding mode {mode!r}")
    _check_key(ct, sk)
    den = sk.a**ct.order
    values = _centered_values(ct, sk)
    out = np.vectorize(lambda v: round_quotient(int(v), den, mode), otypes=[object])(values)
    return _unwrap(out)


def decrypt_raw(ct: Ciphertext, sk: PrivateKey):
    """Exact decryption: centered CRT value over ``a**t`` as a Fraction."""
    _check_key(ct, sk)
    den = sk.a**ct.order
    values = _centered_values(ct, sk)
    out = np.vectorize(lambda v: Fraction(int(v), den), otypes=[object])(values)
    return _unwrap(out)


def decrypt_with_template(ct: Ciphertext, sk: PrivateKey, template, mode: str = "nearest"):
    """Decrypt reading an arbitrary slot selection instead of the key's template."""
    _check_key(ct, sk)
    den = sk.a**ct.order
    values = _centered_values(ct, sk, template=tuple(template))
    out = np.vectorize(lambda v: round_quotient(int(v), den, mode), otypes=[object])(values)
    return _unwrap(out)


# ----------------------------------------------------------- ciphertext files

def serialize_ciphertext(ct: Ciphertext) -> str:
    if ct.shape:
        raise ValueError("only scalar ciphertexts are written to files")
    pk = ct.pk
    lines = [
        f"{CT_FILE_MAGIC} {CT_FILE_VERSION} N={pk.N} M={pk.m_slots} "
        f"order={ct.order} mset={pk.fingerprint}"
    ]
    for row in ct.matrix():
        lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_ciphertext(text: str, pk: PublicKey) -> Ciphertext:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty ciphertext file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != CT_FILE_MAGIC:
        raise FormatError(f"not a ciphertext file (header {lines[0]!r})")
    if head[1] != CT_FILE_VERSION:
        raise FormatError(f"unsupported ciphertext version {head[1]!r}")
    try:
        meta = dict(item.split("=", 1) for item in head[2:])
        N, M, order = int(meta["N"]), int(meta["M"]), int(meta["order"])
        fingerprint = meta["mset"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed ciphertext header {lines[0]!r}") from exc
    if fingerprint != pk.fingerprint:
        raise ModulusMismatchError(
            f"ciphertext modulus group {fingerprint} does not match key {pk.fingerprint}"
        )
    if N != pk.N or M != pk.m_slots:
        raise FormatError(f"ciphertext is {N}x{M}, key expects {pk.N}x{pk.m_slots}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != N:
        raise FormatError(f"expected {N} residue rows, found {len(body)}")
    rows = []
    for i, (ln, b) in enumerate(zip(body, pk.mset.moduli)):
        try:
            row = [int(tok) for tok in ln.split()]
        except ValueError as exc:
            raise FormatError(f"row {i} is not decimal residues") from exc
        if len(row) != M:
            raise FormatError(f"row {i} has {len(row)} entries, expected {M}")
        if any(not 0 <= v < b for v in row):
            raise FormatError(f"row {i} has a residue outside [0, {b})")
        rows.append(row)
    residues = np.array(rows, dtype=object)
    if all(len(set(row)) == 1 for row in rows):
        residues = residues[:, :1]
    return Ciphertext(residues, order, pk)
