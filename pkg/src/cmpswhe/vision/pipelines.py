"""Blind frame difference, background difference and window-matching flow.

Each blind function runs in the compute role: it sees only ciphertexts and
the public key, and asks an :class:`OracleSession` for comparison bits or
argmin indices. Every blind pipeline has a plaintext twin (``*_plain``) used
as the reference output.

Differences are squared before thresholding because the blind arithmetic
has no absolute value; a threshold ``T`` on ``|d|`` becomes ``T**2`` on
``d**2``.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import DimensionError
from ..keys import PrivateKey
from ..ops import blind_square, blind_sub, blind_sum
from .frames import EncFrame, Frame, check_same_size, encrypt_frame
from .oracle import OracleSession

# (0, 0) first so that ties resolve to "no motion"
FLOW_OFFSETS = [(0, 0)] + [
    (dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dx, dy) != (0, 0)
]
WINDOW = [(wx, wy) for wy in (-1, 0, 1) for wx in (-1, 0, 1)]
BORDER = 2


# ------------------------------------------------------------ differences

def frame_delta_blind(prev: EncFrame, cur: EncFrame) -> EncFrame:
    """Blind ``cur - prev`` per pixel (or per packed tile)."""
    check_same_size(prev, cur)
    if prev.lanes != cur.lanes:
        raise DimensionError("frames use different packing")
    return cur.with_cells(blind_sub(cur.cells, prev.cells))


def frame_diff_blind(prev: EncFrame, cur: EncFrame) -> EncFrame:
    """Blind ``(cur - prev)**2`` per pixel; result order 2."""
    if prev.lanes is not None or cur.lanes is not None:
        raise ValueError("squared differences need unpacked frames")
    delta = frame_delta_blind(prev, cur)
    return delta.with_cells(blind_square(delta.cells))


bg_diff_blind = frame_diff_blind


def diff_mask_blind(diff: EncFrame, threshold: int, session: OracleSession) -> np.ndarray:
    """Oracle threshold of a squared-difference frame at ``threshold**2``."""
    bits = session.greater(diff.cells, threshold * threshold)
    return np.asarray(bits, dtype=bool).reshape(diff.height, diff.width)


def frame_diff_mask_plain(prev: Frame, cur: Frame, threshold: int) -> np.ndarray:
    check_same_size(prev, cur)
    d = cur.data.astype(np.int64) - prev.data.astype(np.int64)
    return np.abs(d) > threshold


def frame_diff_mask(prev: Frame, cur: Frame, threshold: int, sk: PrivateKey, session: OracleSession, rng=None) -> np.ndarray:
    """Client encrypts both frames, compute role differences, oracle thresholds."""
    enc_prev = encrypt_frame(prev, sk, rng)
    enc_cur = encrypt_frame(cur, sk, rng)
    return diff_mask_blind(frame_diff_blind(enc_prev, enc_cur), threshold, session)


# ------------------------------------------------------------- background

def update_background(bg: Frame, cur: Frame, alpha_num: int, alpha_den: int) -> Frame:
    """Client-side running average, floored:
    ``(alpha_num*cur + (alpha_den-alpha_num)*bg) // alpha_den``."""
    check_same_size(bg, cur)
    if alpha_den <= 0 or not 0 <= alpha_num <= alpha_den:
        raise ValueError(f"need 0 <= alpha_num <= alpha_den, got {alpha_num}/{alpha_den}")
    mixed = alpha_num * cur.data.astype(np.int64) + (alpha_den - alpha_num) * bg.data.astype(np.int64)
    return Frame(bg.width, bg.height, mixed // alpha_den)


def bg_masks_blind(frames, threshold: int, alpha: tuple[int, int], sk: PrivateKey, session: OracleSession, rng=None):
    """Foreground masks for ``frames[1:]`` against a running background.

    The background starts as ``frames[0]`` and is updated on the client after
    each frame.
    """
    bg = frames[0]
    masks = []
    for cur in frames[1:]:
        diff = bg_diff_blind(encrypt_frame(bg, sk, rng), encrypt_frame(cur, sk, rng))
        masks.append(diff_mask_blind(diff, threshold, session))
        bg = update_background(bg, cur, *alpha)
    return masks


def bg_masks_plain(frames, threshold: int, alpha: tuple[int, int]):
    bg = frames[0]
    masks = []
    for cur in frames[1:]:
        masks.append(frame_diff_mask_plain(bg, cur, threshold))
        bg = update_background(bg, cur, *alpha)
    return masks


# ----------------------------------------------------------- optical flow

def select_points(mask: np.ndarray, stride: int = 4) -> list[tuple[int, int]]:
    """Feature points from a foreground mask.

    The centroid of every 4-connected component, plus every mask pixel whose
    coordinates are both multiples of ``stride``. Returned sorted, as
    ``(x, y)``.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    points = set()
    for y0, x0 in zip(*np.nonzero(mask)):
        if seen[y0, x0]:
            continue
        seen[y0, x0] = True
        queue, xs, ys = deque([(y0, x0)]), [], []
        while queue:
            y, x = queue.popleft()
            ys.append(y)
            xs.append(x)
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
        points.add((int(round(np.mean(xs))), int(round(np.mean(ys)))))
    ys, xs = np.nonzero(mask)
    keep = (xs % stride == 0) & (ys % stride == 0)
    points.update(zip(xs[keep].tolist(), ys[keep].tolist()))
    return sorted(points)


def split_points(points, width: int, height: int):
    """Separate points usable for 3x3 matching from those too close to the border."""
    ok, rejected = [], []
    for x, y in points:
        if BORDER <= x < width - BORDER and BORDER <= y < height - BORDER:
            ok.append((int(x), int(y)))
        else:
            rejected.append((int(x), int(y)))
    return ok, rejected


def _window_indices(points):
    # cur window: (P, 9 offsets, 9 cells); prev window shifted by the offset
    px = np.array([p[0] for p in points]).reshape(-1, 1, 1)
    py = np.array([p[1] for p in points]).reshape(-1, 1, 1)
    ox = np.array([d[0] for d in FLOW_OFFSETS]).reshape(1, -1, 1)
    oy = np.array([d[1] for d in FLOW_OFFSETS]).reshape(1, -1, 1)
    wx = np.array([c[0] for c in WINDOW]).reshape(1, 1, -1)
    wy = np.array([c[1] for c in WINDOW]).reshape(1, 1, -1)
    cur_x, cur_y = np.broadcast_arrays(px + wx + 0 * ox, py + wy + 0 * oy)
    return (cur_y, cur_x), (py + oy + wy, px + ox + wx)


def _displacement(offset_index: int) -> tuple[int, int]:
    # the window at p in cur came from p + d in prev, so motion is -d
    dx, dy = FLOW_OFFSETS[offset_index]
    return (-dx, -dy)


def optical_flow_blind(prev: EncFrame, cur: EncFrame, points, session: OracleSession):
    """Per-point displacement in {-1, 0, 1}^2 by blind 3x3 SSD matching.

    Returns ``(flows, rejected)``: ``flows`` maps each usable ``(x, y)`` to its
    ``(dx, dy)``; ``rejected`` lists points within 2 pixels of the border.
    """
    check_same_size(prev, cur)
    ok, rejected = split_points(points, cur.width, cur.height)
    if not ok:
        return {}, rejected
    cur_idx, prev_idx = _window_indices(ok)
    diff = blind_sub(cur.cells[cur_idx], prev.cells[prev_idx])  # (P, 9, 9)
    ssd = blind_sum(blind_square(diff), axis=2)  # (P, 9), order 2
    best = np.atleast_1d(session.argmin(ssd, axis=1))
    return {p: _displacement(int(i)) for p, i in zip(ok, best)}, rejected


def optical_flow_plain(prev: Frame, cur: Frame, points):
    check_same_size(prev, cur)
    ok, rejected = split_points(points, cur.width, cur.height)
    if not ok:
        return {}, rejected
    cur_idx, prev_idx = _window_indices(ok)
    c = cur.data.astype(np.int64)[cur_idx]
    p = prev.data.astype(np.int64)[prev_idx]
    ssd = ((c - p) ** 2).sum(axis=2)
    best = np.argmin(ssd, axis=1)
    return {pt: _displacement(int(i)) for pt, i in zip(ok, best)}, rejected


def flow_session(prev: Frame, cur: Frame, points, sk: PrivateKey, session: OracleSession, rng=None):
    return optical_flow_blind(encrypt_frame(prev, sk, rng), encrypt_frame(cur, sk, rng), points, session)
