"""The small worked example: ``a = 33``, moduli ``{19, 29, 31}``, ``M = 3``.

``x = 68`` and ``y = 78`` are encrypted with ``eta = 10`` and ``eta = 7``,
giving amplified values 2254 and 2581. ``FIGURE_X`` and ``FIGURE_Y`` are the
two published ciphertext matrices, printed one slot per row and one modulus
per column; :func:`figure_ciphertexts` transposes them into the library's
modulus-per-row layout.
"""
from __future__ import annotations

import numpy as np

from .cipher import Ciphertext
from .keys import Envelope, PrivateKey, PublicKey
from .modmath import ModulusSet

A = 33
MODULI = (19, 29, 31)
TEMPLATE = (0, 1, 2)
M_SLOTS = 3
X, Y = 68, 78
ETA_X, ETA_Y = 10, 7
ETA_MAX = 11
ENVELOPE = Envelope(max_p=100, max_order=1, max_terms=2)

FIGURE_X = ((12, 8, 26), (15, 21, 1), (8, 19, 22))
FIGURE_Y = ((16, 26, 20), (14, 0, 9), (6, 13, 8))


def worked_keys() -> tuple[PublicKey, PrivateKey]:
    """The toy keys; they fail :meth:`PrivateKey.validate` by design."""
    pk = PublicKey(A, ModulusSet(MODULI), M_SLOTS, ENVELOPE)
    return pk, PrivateKey(pk, TEMPLATE, ETA_MAX)


def figure_ciphertexts(pk: PublicKey) -> tuple[Ciphertext, Ciphertext]:
    x = Ciphertext(np.array(FIGURE_X, dtype=np.int64).T, 1, pk)
    y = Ciphertext(np.array(FIGURE_Y, dtype=np.int64).T, 1, pk)
    return x, y
