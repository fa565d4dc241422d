"""Batch-size benchmark of the frame-difference kernel.

The kernel packs ``k`` pixels per plaintext. It encrypts ``cur + 256`` and
``prev`` and subtracts them blind. The client decrypts, unpacks and
removes the offset. The mask ``|d| > T`` is then taken on the client.
Batch size 1 runs the same kernel with a single lane. The ``unbatched``
path encrypts raw pixels one ciphertext each.

Timings are the median of ``runs`` repetitions after ``warmup`` discarded
ones.
"""
from __future__ import annotations

import csv
import io
import random
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .batch import PackingKey, packed_envelope, plan_lanes
from .keys import PrivateKey
from .vision.frames import Frame, decrypt_frame, decrypt_packed, encrypt_frame, encrypt_frame_packed
from .vision.pipelines import frame_delta_blind

OFFSET = 256
LANE_BOUND = 2 * OFFSET - 1
BENCH_FIELDS = ("path", "batch", "elements", "encrypt_ms", "eval_ms", "decrypt_ms", "total_ms", "per_element_us")


def packing_for(batch: int, sk: PrivateKey) -> tuple[PackingKey, PrivateKey]:
    """Lanes for ``batch`` pixels per tile and a key whose envelope admits them."""
    plan = plan_lanes(batch, LANE_BOUND, (2, 1), sk.pk, eta_max=sk.eta_max)
    if not plan:
        raise ValueError(plan.message)
    return plan.key, sk.with_envelope(packed_envelope(plan.key))


def fgdiff_packed(prev: Frame, cur: Frame, threshold: int, sk: PrivateKey, pkey: PackingKey, rng=None, timings=None):
    """Packed frame-difference kernel; returns the client-side mask."""
    t0 = time.perf_counter()
    enc_prev = encrypt_frame_packed(prev, sk, pkey, 0, rng)
    enc_cur = encrypt_frame_packed(cur, sk, pkey, OFFSET, rng)
    t1 = time.perf_counter()
    delta = frame_delta_blind(enc_prev, enc_cur)
    t2 = time.perf_counter()
    d = decrypt_packed(delta, sk, pkey, OFFSET)
    mask = np.abs(d) > threshold
    t3 = time.perf_counter()
    if timings is not None:
        timings.append((t1 - t0, t2 - t1, t3 - t2))
    return mask


def fgdiff_unbatched(prev: Frame, cur: Frame, threshold: int, sk: PrivateKey, rng=None, timings=None):
    t0 = time.perf_counter()
    enc_prev = encrypt_frame(prev, sk, rng)
    enc_cur = encrypt_frame(cur, sk, rng)
    t1 = time.perf_counter()
    delta = frame_delta_blind(enc_prev, enc_cur)
    t2 = time.perf_counter()
    d = decrypt_frame(delta, sk).astype(np.int64)
    mask = np.abs(d) > threshold
    t3 = time.perf_counter()
    if timings is not None:
        timings.append((t1 - t0, t2 - t1, t3 - t2))
    return mask


@dataclass(frozen=True)
class BenchRow:
    path: str
    batch: int
    elements: int
    encrypt_ms: float
    eval_ms: float
    decrypt_ms: float

    @property
    def total_ms(self) -> float:
        return round(self.encrypt_ms + self.eval_ms + self.decrypt_ms, 3)

    @property
    def per_element_us(self) -> float:
        return round(1000 * self.total_ms / self.elements, 3)


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in self.rows:
            w.writerow([r.path, r.batch, r.elements, f"{r.encrypt_ms:.3f}", f"{r.eval_ms:.3f}",
                        f"{r.decrypt_ms:.3f}", f"{r.total_ms:.3f}", f"{r.per_element_us:.3f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> BenchReport:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != BENCH_FIELDS:
            raise ValueError("not a bench report")
        rows = []
        for rec in reader:
            row = BenchRow(rec["path"], int(rec["batch"]), int(rec["elements"]),
                           float(rec["encrypt_ms"]), float(rec["eval_ms"]), float(rec["decrypt_ms"]))
            if f"{row.total_ms:.3f}" != rec["total_ms"] or f"{row.per_element_us:.3f}" != rec["per_element_us"]:
                raise ValueError("derived columns do not match the timings")
            rows.append(row)
        return cls(tuple(rows))

    def row(self, path: str, batch: int) -> BenchRow:
        return next(r for r in self.rows if r.path == path and r.batch == batch)


def bench_frames(size: int = 64, seed: int = 0):
    rng = np.random.default_rng(seed)
    prev = rng.integers(0, 256, (size, size))
    cur = np.clip(prev + rng.integers(-40, 41, (size, size)), 0, 255)
    return Frame.from_array(prev), Frame.from_array(cur)


def _median_row(path, batch, elements, timings) -> BenchRow:
    enc, ev, dec = (statistics.median(t[i] for t in timings) * 1000 for i in range(3))
    return BenchRow(path, batch, elements, round(enc, 3), round(ev, 3), round(dec, 3))


def run_bench(sk: PrivateKey, batch_sizes=(1, 16), size: int = 64, runs: int = 5, warmup: int = 1,
              threshold: int = 20, seed: int = 0, unbatched: bool = False) -> BenchReport:
    """Time the kernel per batch size; every run's mask is checked against plaintext."""
    prev, cur = bench_frames(size, seed)
    expected = np.abs(cur.data.astype(np.int64) - prev.data.astype(np.int64)) > threshold
    rng = random.Random(seed)
    rows = []
    jobs = [("packed", b) for b in batch_sizes] + ([("unbatched", 1)] if unbatched else [])
    for path, batch in jobs:
        timings: list = []
        if path == "packed":
            pkey, bsk = packing_for(batch, sk)
            kernel = lambda t: fgdiff_packed(prev, cur, threshold, bsk, pkey, rng, t)  # noqa: E731
        else:
            kernel = lambda t: fgdiff_unbatched(prev, cur, threshold, sk, rng, t)  # noqa: E731
        for i in range(warmup + runs):
            mask = kernel(timings if i >= warmup else None)
            if not np.array_equal(mask, expected):
                raise AssertionError(f"{path} batch {batch}: mask differs from plaintext")
        rows.append(_median_row(path, batch, size * size, timings))
    return BenchReport(tuple(rows))
