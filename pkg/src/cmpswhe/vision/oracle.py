"""The comparison-oracle role.

An :class:`OracleSession` holds the private key and answers only
threshold bits, argmin indices and (for rescaling) fresh ciphertexts. Every
answer is appended to ``transcript`` so callers can audit what crossed the
boundary between the compute role and the oracle.
"""
from __future__ import annotations

import threading

import numpy as np

from ..cipher import Ciphertext, decrypt, encrypt_private, round_quotient
from ..errors import ModulusMismatchError
from ..keys import PrivateKey


class OracleSession:
    def __init__(self, sk: PrivateKey, rng=None):
        self._sk = sk
        self._rng = rng
        self._lock = threading.Lock()
        self.transcript: list[tuple[str, object]] = []

    @property
    def public_key(self):
        return self._sk.pk

    def _check(self, ct: Ciphertext) -> None:
        if ct.pk.mset != self._sk.mset or ct.pk.a != self._sk.a:
            raise ModulusMismatchError("ciphertext was not produced under the session key")

    def _values(self, ct: Ciphertext) -> np.ndarray:
        return np.asarray(decrypt(ct, self._sk, "nearest"), dtype=object)

    def greater(self, ct: Ciphertext, threshold: int):
        """1 where the decrypted value exceeds ``threshold``, else 0."""
        with self._lock:
            self._check(ct)
            bits = (self._values(ct) > threshold).astype(np.int8)
            self.transcript.extend(("bit", int(b)) for b in bits.reshape(-1))
            return int(bits) if bits.ndim == 0 else bits

    def argmin(self, ct: Ciphertext, axis: int = 0):
        """Index of the smallest decrypted value along a batch axis (first on ties)."""
        with self._lock:
            self._check(ct)
            values = self._values(ct)
            idx = np.argmin(values.astype(object), axis=axis)
            idx = np.asarray(idx, dtype=np.int64)
            self.transcript.extend(("argmin", int(i)) for i in idx.reshape(-1))
            return int(idx) if idx.ndim == 0 else idx

    def rescale(self, ct: Ciphertext, magnification: int) -> Ciphertext:
        """Divide by ``magnification`` (nearest) and re-encrypt at order 1."""
        with self._lock:
            self._check(ct)
            values = self._values(ct)
            scaled = np.vectorize(lambda v: round_quotient(int(v), magnification), otypes=[object])(values)
            fresh = encrypt_private(scaled, self._sk, self._rng)
            self.transcript.append(("ciphertext", fresh.shape))
            return fresh


def threshold_oracle(session: OracleSession, ct: Ciphertext, threshold: int):
    return session.greater(ct, threshold)
