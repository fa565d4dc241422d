"""Blind integral images, haar features and cascade detection.

Cascade files are plain text::

    cascade v1
    window <w> <h>
    stage threshold=<int>
    stump threshold=<int> left=<int> right=<int>
    rect <x> <y> <w> <h> <weight>
    ...

A ``stump`` line opens a weak classifier and the following ``rect`` lines
(one to three) belong to it; a ``stage`` line opens a strong classifier.
Blank lines and lines starting with ``#`` are ignored. A stump votes
``right`` when its feature exceeds ``threshold`` and ``left`` otherwise; a
stage passes when the sum of votes is at least its threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cipher import Ciphertext, encrypt_public
from ..errors import CapacityError, FormatError
from ..keys import PublicKey
from ..ops import blind_add, blind_cumsum, blind_sub, blind_sum, semiblind
from .frames import EncFrame, Frame
from .oracle import OracleSession

CASCADE_MAGIC = "cascade v1"
MAX_RECTS = 3


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int
    weight: int


@dataclass(frozen=True)
class Stump:
    rects: tuple[Rect, ...]
    threshold: int
    left: int
    right: int


@dataclass(frozen=True)
class Stage:
    threshold: int
    stumps: tuple[Stump, ...] = ()


@dataclass(frozen=True)
class Cascade:
    width: int
    height: int
    stages: tuple[Stage, ...] = field(default=())

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise FormatError("detection window must be at least 1x1")
        for stage in self.stages:
            for stump in stage.stumps:
                if not 1 <= len(stump.rects) <= MAX_RECTS:
                    raise FormatError(f"a stump needs 1 to {MAX_RECTS} rectangles")
                for r in stump.rects:
                    check_rect(r, self.width, self.height)


def check_rect(r: Rect, width: int, height: int) -> None:
    if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0 or r.x + r.w > width or r.y + r.h > height:
        raise FormatError(f"rectangle {r} lies outside the {width}x{height} window")


def _kv(tokens, keys, lineno):
    out = {}
    for tok in tokens:
        k, sep, v = tok.partition("=")
        if not sep or k not in keys or k in out:
            raise FormatError(f"line {lineno}: unexpected field {tok!r}")
        try:
            out[k] = int(v)
        except ValueError:
            raise FormatError(f"line {lineno}: {k} must be an integer") from None
    if set(out) != set(keys):
        raise FormatError(f"line {lineno}: expected fields {', '.join(keys)}")
    return out


def parse_cascade(text: str) -> Cascade:
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0][1] != CASCADE_MAGIC:
        raise FormatError(f"cascade file must start with {CASCADE_MAGIC!r}")
    if len(lines) < 2 or lines[1][1].split()[0] != "window":
        raise FormatError("second line must be 'window <w> <h>'")
    parts = lines[1][1].split()
    try:
        width, height = int(parts[1]), int(parts[2])
        if len(parts) != 3:
            raise ValueError
    except (ValueError, IndexError):
        raise FormatError("malformed window line") from None

    stages: list[tuple[int, list]] = []
    for lineno, ln in lines[2:]:
        kind, *rest = ln.split()
        if kind == "stage":
            stages.append((_kv(rest, ("threshold",), lineno)["threshold"], []))
        elif kind == "stump":
            if not stages:
                raise FormatError(f"line {lineno}: stump before any stage")
            stages[-1][1].append([_kv(rest, ("threshold", "left", "right"), lineno), []])
        elif kind == "rect":
            if not stages or not stages[-1][1]:
                raise FormatError(f"line {lineno}: rect before any stump")
            try:
                x, y, w, h, weight = (int(v) for v in rest)
            except ValueError:
                raise FormatError(f"line {lineno}: rect needs five integers") from None
            stages[-1][1][-1][1].append(Rect(x, y, w, h, weight))
        else:
            raise FormatError(f"line {lineno}: unknown record {kind!r}")
    built = tuple(
        Stage(thr, tuple(Stump(tuple(rects), **fields) for fields, rects in stumps))
        for thr, stumps in stages
    )
    return Cascade(width, height, built)


def serialize_cascade(c: Cascade) -> str:
    out = [CASCADE_MAGIC, f"window {c.width} {c.height}"]
    for stage in c.stages:
        out.append(f"stage threshold={stage.threshold}")
        for s in stage.stumps:
            out.append(f"stump threshold={s.threshold} left={s.left} right={s.right}")
            out.extend(f"rect {r.x} {r.y} {r.w} {r.h} {r.weight}" for r in s.rects)
    return "\n".join(out) + "\n"


# --------------------------------------------------------------- integral

def integral_blind(ef: EncFrame) -> EncFrame:
    """Blind 2-D prefix sums; additions only, order unchanged."""
    if ef.lanes is not None:
        raise ValueError("integral images need unpacked frames")
    return ef.with_cells(blind_cumsum(blind_cumsum(ef.cells, axis=0), axis=1))


def integral_plain(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.int64).cumsum(axis=0).cumsum(axis=1)


def _pad_integral(cells: Ciphertext) -> Ciphertext:
    # a zero row and column on the top/left; zero residues encrypt 0 exactly
    # (np.pad would fill object arrays with numpy ints, which overflow)
    res = cells.residues
    out = np.zeros((res.shape[0] + 1, res.shape[1] + 1) + res.shape[2:], dtype=res.dtype)
    out[1:, 1:] = res
    return Ciphertext(out, cells.order, cells.pk)


def _corners(rect: Rect, ox: np.ndarray, oy: np.ndarray):
    """Index arrays into the padded integral for the four corners of ``rect``."""
    x0, y0 = ox + rect.x, oy + rect.y
    x1, y1 = x0 + rect.w, y0 + rect.h
    return (y1, x1), (y0, x1), (y1, x0), (y0, x0)


def _origins(origins):
    if origins is None:
        return np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), True
    arr = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1], False


def _check_inside(rects, ox, oy, width, height):
    for x, y in zip(ox, oy):
        for r in rects:
            if x + r.x < 0 or y + r.y < 0 or x + r.x + r.w > width or y + r.y + r.h > height:
                raise FormatError(f"rectangle {r} at origin ({x}, {y}) lies outside the frame")


def haar_blind(ii: EncFrame, rects, origins=None) -> Ciphertext:
    """Weighted rectangle sums from a blind integral image.

    ``rects`` are relative to each origin in ``origins`` (an iterable of
    ``(x, y)``); with ``origins=None`` they are absolute and a scalar
    ciphertext is returned. Each rectangle sum is the four-corner
    combination, multiplied semi-blind by its weight; the result has order
    ``ii.order + 1``.
    """
    ox, oy, scalar = _origins(origins)
    _check_inside(rects, ox, oy, ii.width, ii.height)
    padded = _pad_integral(ii.cells)
    pk = ii.cells.pk
    terms = []
    for r in rects:
        d, b, c, a = _corners(r, ox, oy)
        # D - B - C + A, as D + A - (B + C)
        s = blind_sub(blind_add(padded[d], padded[a]), blind_add(padded[b], padded[c]))
        terms.append(semiblind("mul", s, r.weight, pk))
    total = blind_sum(Ciphertext.stack(terms), axis=0)
    return total[0] if scalar else total


def haar_plain(ii: np.ndarray, rects, origins=None) -> np.ndarray:
    ox, oy, scalar = _origins(origins)
    _check_inside(rects, ox, oy, ii.shape[1], ii.shape[0])
    padded = np.pad(np.asarray(ii, dtype=object), [(1, 0), (1, 0)])
    total = np.zeros(ox.shape, dtype=object)
    for r in rects:
        d, b, c, a = _corners(r, ox, oy)
        total = total + r.weight * (padded[d] - padded[b] - padded[c] + padded[a])
    return total[0] if scalar else total


# ---------------------------------------------------------------- cascade

def check_cascade_budget(c: Cascade, pk: PublicKey, frame_max: int = 255) -> None:
    """Raise :class:`CapacityError` if votes or features could overflow ``pk``."""
    for stage in c.stages:
        votes = sum(max(abs(s.left), abs(s.right)) for s in stage.stumps)
        if votes > pk.envelope.max_p:
            raise CapacityError(
                f"stage vote sum up to {votes} exceeds the envelope bound {pk.envelope.max_p}",
                required=votes,
                available=pk.envelope.max_p,
            )
        for s in stage.stumps:
            feature = sum(abs(r.weight) * r.w * r.h * frame_max for r in s.rects)
            need = 2 * pk.a**2 * (feature + 1)
            if need >= pk.mset.product:
                raise CapacityError(
                    "haar feature bound exceeds the modulus capacity",
                    required=need,
                    available=pk.mset.product,
                )


def window_origins(width: int, height: int, c: Cascade, step: int = 1):
    if c.width > width or c.height > height:
        raise FormatError(f"{c.width}x{c.height} window does not fit a {width}x{height} frame")
    return [(x, y) for y in range(0, height - c.height + 1, step) for x in range(0, width - c.width + 1, step)]


def cascade_blind(ef: EncFrame, c: Cascade, session: OracleSession, step: int = 1):
    """Detection boxes ``(x, y, w, h)`` from a blind cascade sweep.

    Stump verdicts come from the oracle as bits; the compute role turns them
    into public encryptions of ``left``/``right`` and sums them blind. Only
    windows that pass a stage are evaluated in the next one.
    """
    pk = ef.cells.pk
    check_cascade_budget(c, pk)
    alive = window_origins(ef.width, ef.height, c, step)
    ii = integral_blind(ef)
    for stage in c.stages:
        if not alive:
            break
        total = encrypt_public(np.zeros(len(alive), dtype=np.int64), pk)
        for stump in stage.stumps:
            feature = haar_blind(ii, stump.rects, alive)
            bits = np.atleast_1d(session.greater(feature, stump.threshold))
            votes = np.where(bits == 1, stump.right, stump.left)
            total = blind_add(total, encrypt_public(votes, pk))
        passed = np.atleast_1d(session.greater(total, stage.threshold - 1))
        alive = [o for o, ok in zip(alive, passed) if ok]
    return [(x, y, c.width, c.height) for x, y in alive]


def cascade_plain(frame: Frame, c: Cascade, step: int = 1):
    alive = window_origins(frame.width, frame.height, c, step)
    ii = integral_plain(frame.data)
    for stage in c.stages:
        if not alive:
            break
        total = np.zeros(len(alive), dtype=object)
        for stump in stage.stumps:
            feature = haar_plain(ii, stump.rects, alive)
            total = total + np.where(feature > stump.threshold, stump.right, stump.left)
        alive = [o for o, t in zip(alive, total) if t >= stage.threshold]
    return [(x, y, c.width, c.height) for x, y in alive]


def downscale(frame: Frame, factor: int) -> Frame:
    """Block-average downsampling by an integer factor (client-side pyramids)."""
    if factor == 1:
        return frame
    h, w = frame.height // factor, frame.width // factor
    blocks = frame.data[: h * factor, : w * factor].astype(np.int64)
    blocks = blocks.reshape(h, factor, w, factor).sum(axis=(1, 3))
    return Frame(w, h, blocks // (factor * factor))


def cascade_multiscale(frame: Frame, c: Cascade, detect, scales=(1,)):
    """Run ``detect(frame_at_scale)`` per scale; boxes mapped back to full size."""
    boxes = []
    for s in scales:
        small = downscale(frame, s)
        if small.width < c.width or small.height < c.height:
            continue
        boxes.extend((x * s, y * s, w * s, h * s) for x, y, w, h in detect(small))
    return boxes
