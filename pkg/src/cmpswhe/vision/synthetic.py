"""Deterministic synthetic scenes for the pipeline equivalence suite."""
from __future__ import annotations

import numpy as np

from .detect import Cascade, Rect, Stage, Stump
from .frames import Frame

PATTERN_SIZE = 8
BRIGHT, DARK = 220, 30


def _clip(arr) -> Frame:
    return Frame.from_array(np.clip(arr, 0, 255))


def _square(arr, x, y, size, value):
    arr[y:y + size, x:x + size] = value
    return arr


def fgdiff_pair(seed: int, size: int = 16):
    """Two frames of a textured scene with a bright square that moves."""
    rng = np.random.default_rng(seed)
    base = rng.integers(40, 200, (size, size))
    side = int(rng.integers(3, 6))
    x0, y0 = rng.integers(0, size - side - 2, 2)
    dx, dy = rng.integers(1, 3, 2)
    prev = _square(base + rng.integers(-3, 4, base.shape), x0, y0, side, 240)
    cur = _square(base + rng.integers(-3, 4, base.shape), x0 + dx, y0 + dy, side, 240)
    return _clip(prev), _clip(cur)


def bg_sequence(seed: int, size: int = 16, frames: int = 4):
    """A static noisy scene crossed by a moving square."""
    rng = np.random.default_rng(seed)
    base = rng.integers(40, 200, (size, size))
    side = int(rng.integers(3, 5))
    x, y = (int(v) for v in rng.integers(0, size // 2, 2))
    out = [_clip(base + rng.integers(-3, 4, base.shape))]
    for _ in range(frames - 1):
        x = min(x + int(rng.integers(1, 3)), size - side)
        y = min(y + int(rng.integers(0, 2)), size - side)
        out.append(_clip(_square(base + rng.integers(-3, 4, base.shape), x, y, side, 250)))
    return out


def flow_pair(seed: int, size: int = 16):
    """A random texture shifted by one pixel in a random direction, plus points."""
    rng = np.random.default_rng(seed)
    tex = rng.integers(0, 256, (size + 2, size + 2))
    dx, dy = (int(v) for v in rng.integers(-1, 2, 2))
    prev = tex[1:-1, 1:-1]
    cur = tex[1 - dy:size + 1 - dy, 1 - dx:size + 1 - dx]
    points = [(int(x), int(y)) for x, y in rng.integers(0, size, (6, 2))]
    return _clip(prev), _clip(cur), points, (dx, dy)


def shifted_block(size: int = 12, x: int = 4, y: int = 4):
    """A bright 3x3 block on black, moved right by one pixel."""
    prev = np.zeros((size, size), dtype=np.int64)
    cur = prev.copy()
    prev[y - 1:y + 2, x - 2:x + 1] = 200
    cur[y - 1:y + 2, x - 1:x + 2] = 200
    return Frame.from_array(prev), Frame.from_array(cur), (x, y)


def place_pattern(arr, x, y):
    half = PATTERN_SIZE // 2
    arr[y:y + half, x:x + PATTERN_SIZE] = BRIGHT
    arr[y + half:y + PATTERN_SIZE, x:x + PATTERN_SIZE] = DARK
    return arr


def detect_image(seed: int, size: int = 24, patterns: int = 2):
    """Noise in [90, 130] with bright-top/dark-bottom patterns at random spots."""
    rng = np.random.default_rng(seed)
    arr = rng.integers(90, 131, (size, size))
    spots = []
    for _ in range(patterns):
        x, y = (int(v) for v in rng.integers(0, size - PATTERN_SIZE + 1, 2))
        place_pattern(arr, x, y)
        spots.append((x, y))
    return _clip(arr), spots


def toy_cascade() -> Cascade:
    """Two stages tuned to fire on an exact 8x8 bright-over-dark pattern.

    Stage one thresholds top-minus-bottom at 6000 (the pattern gives 6080 and
    every one-pixel misalignment at most 5520 on a [90, 130] background);
    stage two checks that the top half alone is bright.
    """
    top = Rect(0, 0, 8, 4, 1)
    bottom = Rect(0, 4, 8, 4, -1)
    edge = Stump((top, bottom), threshold=6000, left=0, right=1)
    bright = Stump((Rect(0, 0, 8, 4, 1),), threshold=32 * 180, left=0, right=1)
    return Cascade(8, 8, (Stage(1, (edge,)), Stage(1, (bright,))))


def suite(pipeline: str, count: int = 10):
    """``count`` seeded cases for one pipeline."""
    makers = {
        "fgdiff": fgdiff_pair,
        "bgdiff": bg_sequence,
        "flow": flow_pair,
        "detect": detect_image,
    }
    if pipeline not in makers:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    return [makers[pipeline](seed) for seed in range(count)]
