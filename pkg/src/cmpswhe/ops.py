"""Blind arithmetic on ciphertexts.

All operations act element-wise on residues, row ``i`` modulo ``b_i``, and
broadcast over batch axes. Operands of different order are brought to the
higher order first by multiplying with powers of ``a``.
"""
from __future__ import annotations

import numpy as np

from .cipher import Ciphertext, check_same_group, encrypt_public
from .errors import CapacityError, OrderError
from .keys import PublicKey


def _mods(pk: PublicKey):
    return pk.mset.column


def homogenize(ct: Ciphertext, target_order: int, pk: PublicKey | None = None) -> Ciphertext:
    pk = pk or ct.pk
    if target_order < ct.order:
        raise OrderError(f"cannot lower order {ct.order} to {target_order}")
    if target_order == ct.order:
        return ct
    if pk.a ** target_order >= pk.mset.product:
        raise CapacityError(
            f"order {target_order} exceeds the modulus capacity",
            required=pk.a**target_order,
            available=pk.mset.product,
        )
    shift = target_order - ct.order
    mods = _mods(pk)
    factor = np.array([pow(pk.a, shift, b) for b in pk.mset.moduli], dtype=object)
    factor = factor.astype(pk.mset.dtype).reshape(-1, 1)
    return Ciphertext((ct.residues * factor) % mods, target_order, pk)


def _check_order(order: int, pk: PublicKey) -> None:
    if pk.a**order >= pk.mset.product:
        raise CapacityError(
            f"order {order} exceeds the modulus capacity",
            required=pk.a**order,
            available=pk.mset.product,
        )


def blind_add(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    return blind_binop("add", x, y)


def blind_sub(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    return blind_binop("sub", x, y)


def blind_mul(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    return blind_binop("mul", x, y)


def blind_binop(op: str, x: Ciphertext, y: Ciphertext) -> Ciphertext:
    """Element-wise ``add``, ``sub`` or ``mul`` of two ciphertext arrays."""
    check_same_group(x, y)
    pk = x.pk
    mods = _mods(pk)
    if op == "mul":
        order = x.order + y.order
        _check_order(order, pk)
        return Ciphertext((x.residues * y.residues) % mods, order, pk)
    if op not in ("add", "sub"):
        raise ValueError(f"unknown blind operation {op!r}")
    order = max(x.order, y.order)
    x, y = homogenize(x, order), homogenize(y, order)
    if op == "add":
        res = (x.residues + y.residues) % mods
    else:
        res = (x.residues - y.residues + mods) % mods
    return Ciphertext(res, order, pk)


def blind_neg(x: Ciphertext) -> Ciphertext:
    mods = _mods(x.pk)
    return Ciphertext((mods - x.residues) % mods, x.order, x.pk)


def blind_pow(x: Ciphertext, k: int) -> Ciphertext:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"exponent must be a positive integer, got {k!r}")
    k = int(k)
    order = x.order * k
    _check_order(order, x.pk)
    mods = _mods(x.pk)
    base = x.residues
    result = None
    # square-and-multiply keeps every product inside the residue word size
    while k:
        if k & 1:
            result = base if result is None else (result * base) % mods
        k >>= 1
        if k:
            base = (base * base) % mods
    return Ciphertext(result, order, x.pk)


def semiblind(op: str, x: Ciphertext, c, pk: PublicKey | None = None) -> Ciphertext:
    """Blind operation with a plaintext operand, encrypted under the public key."""
    pk = pk or x.pk
    return blind_binop(op, x, encrypt_public(c, pk))


def blind_sum(x: Ciphertext, axis: int = 0) -> Ciphertext:
    """Sum a ciphertext array over one batch axis (repeated blind addition)."""
    ndim = len(x.shape)
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for batch shape {x.shape}")
    axis %= ndim
    mods = _mods(x.pk)
    total = x.residues.sum(axis=axis) % mods
    return Ciphertext(total, x.order, x.pk)


def blind_cumsum(x: Ciphertext, axis: int = 0) -> Ciphertext:
    """Running sums along one batch axis; used for blind integral images."""
    ndim = len(x.shape)
    axis %= ndim
    mods = _mods(x.pk)
    res = x.residues
    if res.dtype != object and res.shape[axis] * int(mods.max()) >= 2**63:
        res = res.astype(object)
    return Ciphertext(np.cumsum(res, axis=axis) % mods, x.order, x.pk)


def blind_square(x: Ciphertext) -> Ciphertext:
    return blind_binop("mul", x, x)
