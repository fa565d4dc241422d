"""Modular arithmetic, CRT reconstruction and the modulus pool.

Everything here works on plain Python integers. :class:`ModulusSet` also
caches numpy views of its moduli so the cipher layer can run residue
arithmetic on whole arrays at once.
"""
from __future__ import annotations

import hashlib
from functools import cached_property, lru_cache
from math import prod

import numpy as np

from .errors import DimensionError, NonInvertibleError

# Miller-Rabin with the first 13 primes is exact below 3.3e24, which covers
# every 64-bit modulus; above that the extra bases make it a strong
# probable-prime check.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_EXTRA = (43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)
_MR_DETERMINISTIC = 3317044064679887385961981

# residues fit machine words when every product of two stays below 2**63
_INT64_LIMIT = 2**63


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    bases = _MR_BASES if n < _MR_DETERMINISTIC else _MR_BASES + _MR_EXTRA
    for base in bases:
        x = pow(base, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def mod_inverse(x: int, m: int) -> int:
    """Return the inverse of ``x`` modulo ``m`` in ``[1, m)``."""
    if x % m == 0:
        raise NonInvertibleError(f"{x} is not invertible modulo {m}")
    try:
        return pow(x, -1, m)
    except ValueError as exc:
        raise NonInvertibleError(f"{x} is not invertible modulo {m}") from exc


def centered(value: int, modulus: int) -> int:
    """Map ``value`` in ``[0, modulus)`` to the representative in ``(-modulus/2, modulus/2]``."""
    return value - modulus if 2 * value > modulus else value


@lru_cache(maxsize=64)
def _prime_pool(start_bits: int, count: int) -> tuple[int, ...]:
    primes = []
    n = 1 << start_bits
    while len(primes) < count:
        if is_prime(n):
            primes.append(n)
        n += 1
    return tuple(primes)


def gen_prime_pool(start_bits: int, count: int) -> list[int]:
    """The ``count`` smallest primes that are ``>= 2**start_bits``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return list(_prime_pool(start_bits, count))


def next_primes(above: int, count: int) -> list[int]:
    """The ``count`` smallest primes strictly greater than ``above``."""
    out = []
    n = above + 1
    while len(out) < count:
        if is_prime(n):
            out.append(n)
        n += 1
    return out


class ModulusSet:
    """An ordered group of distinct primes with cached CRT weights.

    ``crt_weights[i]`` is ``B_i * (B_i^-1 mod b_i)`` where ``B_i = B_s / b_i``,
    so a value is rebuilt as ``sum(r_i * crt_weights[i]) mod B_s``.
    """

    __slots__ = ("moduli", "product", "crt_weights", "__dict__")

    def __init__(self, moduli, check=True):
        moduli = tuple(int(b) for b in moduli)
        if not moduli:
            raise ValueError("a modulus set needs at least one modulus")
        if check:
            if len(set(moduli)) != len(moduli):
                raise ValueError(f"moduli are not pairwise distinct: {moduli}")
            bad = [b for b in moduli if not is_prime(b)]
            if bad:
                raise ValueError(f"moduli are not prime: {bad}")
        self.moduli = moduli
        self.product = prod(moduli)
        weights = []
        for b in moduli:
            big = self.product // b
            weights.append(big * mod_inverse(big, b))
        self.crt_weights = tuple(weights)

    def __len__(self):
        return len(self.moduli)

    def __iter__(self):
        return iter(self.moduli)

    def __eq__(self, other):
        return isinstance(other, ModulusSet) and self.moduli == other.moduli

    def __hash__(self):
        return hash(self.moduli)

    def __repr__(self):
        return f"ModulusSet({list(self.moduli)})"

    @cached_property
    def fingerprint(self) -> str:
        text = ",".join(map(str, self.moduli)).encode()
        return hashlib.sha256(text).hexdigest()[:16]

    @cached_property
    def dtype(self):
        """int64 when residue products fit a machine word, else object."""
        return np.int64 if max(self.moduli) ** 2 < _INT64_LIMIT else object

    @cached_property
    def column(self) -> np.ndarray:
        """Moduli as an ``(N, 1)`` array, for broadcasting over slots."""
        col = np.array(self.moduli, dtype=object).reshape(-1, 1)
        return col.astype(self.dtype)

    @cached_property
    def weights_array(self) -> np.ndarray:
        return np.array(self.crt_weights, dtype=object)

    def reconstruct(self, residues) -> int:
        return crt_reconstruct(residues, self)

    def reconstruct_array(self, residues: np.ndarray) -> np.ndarray:
        """CRT over the last axis of an ``(..., N)`` array; returns object ints."""
        if residues.shape[-1] != len(self.moduli):
            raise DimensionError(
                f"expected {len(self.moduli)} residues per value, got {residues.shape[-1]}"
            )
        total = (residues.astype(object) * self.weights_array).sum(axis=-1)
        return total % self.product


def crt_reconstruct(residues, mset: ModulusSet) -> int:
    residues = list(residues)
    if len(residues) != len(mset.moduli):
        raise DimensionError(
            f"{len(residues)} residues for {len(mset.moduli)} moduli"
        )
    total = sum(int(r) * w for r, w in zip(residues, mset.crt_weights))
    return total % mset.product


def capacity_check(a: int, max_p: int, t: int, w: int, mset: ModulusSet) -> bool:
    """True iff ``w * (a * max_p) ** t < B_s``."""
    return w * (a * max_p) ** t < mset.product
