"""Grayscale frames, binary PGM files and encrypted frames."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..batch import PackingKey, offset_pack, offset_unpack
from ..cipher import Ciphertext, decrypt, encrypt_private
from ..errors import DimensionError, FormatError
from ..keys import PrivateKey


@dataclass(frozen=True, eq=False)
class Frame:
    width: int
    height: int
    data: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != (self.height, self.width):
            raise DimensionError(
                f"frame data {data.shape} does not match {self.height}x{self.width}"
            )
        if data.size and (data.min() < 0 or data.max() > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        object.__setattr__(self, "data", data.astype(np.uint8))

    @classmethod
    def from_array(cls, arr) -> Frame:
        arr = np.asarray(arr)
        return cls(arr.shape[1], arr.shape[0], arr)

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.data, other.data)

    __hash__ = None


_PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+")


def _pgm_tokens(raw: bytes, count: int):
    """Read ``count`` whitespace-separated header integers after the magic."""
    if not raw.startswith(b"P5"):
        raise FormatError("not a binary PGM (P5) file")
    pos = 2
    values = []
    while len(values) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        m = re.match(rb"\d+", raw[pos:])
        if not m:
            raise FormatError("malformed PGM header")
        values.append(int(m.group()))
        pos += m.end()
    # exactly one whitespace byte separates the header from the raster
    return values, pos + 1


def read_pgm(path_or_bytes) -> Frame:
    raw = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    (width, height, maxval), start = _pgm_tokens(raw, 3)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    body = raw[start:start + width * height]
    if len(body) != width * height:
        raise FormatError("truncated PGM raster")
    data = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return Frame(width, height, data.copy())


def pgm_bytes(frame: Frame) -> bytes:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode()
    return header + np.ascontiguousarray(frame.data, dtype=np.uint8).tobytes()


def write_pgm(path, frame: Frame) -> None:
    Path(path).write_bytes(pgm_bytes(frame))


def mask_frame(mask: np.ndarray) -> Frame:
    """A {0, 255} frame from a boolean mask."""
    return Frame.from_array(np.where(np.asarray(mask, dtype=bool), 255, 0))


@dataclass(frozen=True, eq=False)
class EncFrame:
    """An encrypted frame.

    With ``lanes=None`` ``cells`` has batch shape ``(height, width)``, one
    ciphertext per pixel. Otherwise it has batch shape ``(tiles,)``: each
    tile packs ``lanes`` consecutive row-major pixels.
    """

    width: int
    height: int
    cells: Ciphertext
    lanes: int | None = None

    def __post_init__(self):
        if self.lanes is None:
            if self.cells.shape != (self.height, self.width):
                raise DimensionError(
                    f"cells {self.cells.shape} do not match {self.height}x{self.width}"
                )
        elif self.cells.shape != (_tiles(self.width * self.height, self.lanes),):
            raise DimensionError("packed cells do not match the frame size")

    @property
    def order(self) -> int:
        return self.cells.order

    def with_cells(self, cells: Ciphertext) -> EncFrame:
        return EncFrame(self.width, self.height, cells, self.lanes)


def _tiles(n: int, k: int) -> int:
    return -(-n // k)


def check_same_size(a, b) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(
            f"frame sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def encrypt_frame(frame: Frame, sk: PrivateKey, rng=None) -> EncFrame:
    """Encrypt each pixel independently, with fresh randomization per pixel."""
    cells = encrypt_private(frame.data.astype(np.int64), sk, rng)
    return EncFrame(frame.width, frame.height, cells)


def decrypt_frame(ef: EncFrame, sk: PrivateKey, mode: str = "nearest") -> np.ndarray:
    if ef.lanes is not None:
        raise ValueError("packed frames are unpacked with decrypt_packed")
    return np.asarray(decrypt(ef.cells, sk, mode), dtype=object).reshape(ef.height, ef.width)


def encrypt_frame_packed(frame: Frame, sk: PrivateKey, pkey: PackingKey, offset: int = 0, rng=None) -> EncFrame:
    """Pack ``pkey.k`` pixels per tile (plus ``offset``) and encrypt the tiles.

    ``sk`` must carry an envelope wide enough for packed values; see
    :func:`cmpswhe.batch.packed_envelope`.
    """
    k = pkey.k
    flat = frame.data.reshape(-1).astype(np.int64)
    pad = _tiles(flat.size, k) * k - flat.size
    flat = np.concatenate([flat, np.zeros(pad, dtype=np.int64)])
    packed = offset_pack(flat.reshape(-1, k), offset, pkey)
    cells = encrypt_private(packed, sk, rng)
    return EncFrame(frame.width, frame.height, cells, lanes=k)


def decrypt_packed(ef: EncFrame, sk: PrivateKey, pkey: PackingKey, offset: int = 0) -> np.ndarray:
    """Decrypt packed tiles, round to exact integers, then split the lanes."""
    values = np.asarray(decrypt(ef.cells, sk, "nearest"), dtype=object).reshape(-1)
    lanes = offset_unpack(values, offset, pkey).reshape(-1)
    return lanes[: ef.width * ef.height].reshape(ef.height, ef.width)
