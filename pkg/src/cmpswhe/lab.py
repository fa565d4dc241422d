"""Error lab: how amplification, multiplication depth and multiplier
imbalance affect the decryption error of blind products.

Each cell encrypts the factors ``trials`` times with fresh noise, multiplies
them blind, and records the mean of ``decrypt_raw - product`` and of the
error ratio. Products whose amplified value would wrap the modulus product
are reported as ``overflow`` instead.

The lab uses its own small keys so that overflow is reachable and errors
are visible; they are not meant for encryption.
"""
from __future__ import annotations

import csv
import io
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import prod

import numpy as np

from .cipher import decrypt_raw, encrypt_private
from .keys import Envelope, PrivateKey, PublicKey
from .modmath import ModulusSet, gen_prime_pool
from .ops import blind_mul

AMPLIFICATION = {
    "factors": (4000, 2500),
    "a": (10**7, 10**6, 10**5, 10**4),
    "prime_bits": 17,
    "N": 4,
}
DEPTH = {
    "chains": (
        (10,) * 7,
        (100,) + (10,) * 5,
        (1000,) + (10,) * 4,
        (10000,) + (10,) * 3,
        (100000, 10, 10),
        (1000000, 10),
    ),
    "a": 2**24,
    "prime_bits": 16,
    "N": 11,
}
IMBALANCE = {
    "pairs": ((10000, 1000), (20000, 500), (50000, 200), (100000, 100), (200000, 50)),
    "a": 10**6,
    "prime_bits": 17,
    "N": 4,
}
SWEEPS = ("amplification", "depth", "imbalance")
FIELDS = ("sweep", "config", "product", "result", "error", "error_ratio")


def lab_key(a: int, prime_bits: int, N: int, max_p: int = 10**6) -> PrivateKey:
    """A relaxed key: small moduli, ``eta_max`` just above them, ``M = 2``."""
    mset = ModulusSet(gen_prime_pool(prime_bits, N))
    pk = PublicKey(a, mset, 2, Envelope(max_p=max_p, max_order=1, max_terms=1))
    return PrivateKey(pk, (0,) * N, 2 ** (prime_bits + 1))


@dataclass(frozen=True)
class Cell:
    sweep: str
    config: str
    product: int
    error: Fraction | None  # mean over trials; None on overflow
    ratio: Fraction | None

    @property
    def overflow(self) -> bool:
        return self.error is None

    def row(self) -> dict:
        if self.overflow:
            return dict(sweep=self.sweep, config=self.config, product=self.product,
                        result="overflow", error="", error_ratio="")
        return dict(
            sweep=self.sweep,
            config=self.config,
            product=self.product,
            result=f"{float(self.product + self.error):.6f}",
            error=f"{float(self.error):.6g}",
            error_ratio=f"{float(self.ratio):.6g}",
        )


def _overflows(sk: PrivateKey, factors) -> bool:
    # every noisy factor is below (x + 1) * a
    bound = prod((x + 1) * sk.a for x in factors)
    return 2 * bound >= sk.mset.product


def run_cell(sweep: str, config: str, factors, sk: PrivateKey, trials: int, rng: random.Random) -> Cell:
    truth = prod(factors)
    if _overflows(sk, factors):
        return Cell(sweep, config, truth, None, None)
    cts = [encrypt_private(np.full(trials, x, dtype=object), sk, rng) for x in factors]
    raw = decrypt_raw(reduce(blind_mul, cts), sk)
    errors = [abs(Fraction(v) - truth) for v in np.atleast_1d(raw)]
    mean = sum(errors, Fraction(0)) / trials
    return Cell(sweep, config, truth, mean, mean / truth)


def run_sweep(sweep: str, seed: int, trials: int = 64) -> list[Cell]:
    rng = random.Random(f"{sweep}:{seed}")
    if sweep == "amplification":
        cfg = AMPLIFICATION
        return [
            run_cell(sweep, f"a={a}", cfg["factors"], lab_key(a, cfg["prime_bits"], cfg["N"]), trials, rng)
            for a in cfg["a"]
        ]
    if sweep == "depth":
        cfg = DEPTH
        sk = lab_key(cfg["a"], cfg["prime_bits"], cfg["N"])
        return [
            run_cell(sweep, f"{'*'.join(map(str, ch))} ({len(ch) - 1})", ch, sk, trials, rng)
            for ch in cfg["chains"]
        ]
    if sweep == "imbalance":
        cfg = IMBALANCE
        sk = lab_key(cfg["a"], cfg["prime_bits"], cfg["N"])
        return [run_cell(sweep, f"{x}*{y}", (x, y), sk, trials, rng) for x, y in cfg["pairs"]]
    raise ValueError(f"unknown sweep {sweep!r}; choose from {', '.join(SWEEPS)}")


def is_monotone(sweep: str, cells: list[Cell]) -> bool:
    """The trend each sweep should show, checked on non-overflow cells.

    Rows are listed so that the error ratio should strictly increase for
    ``amplification`` (decreasing ``a``) and ``imbalance``, and strictly
    decrease down the ``depth`` table (fewer multiplications).
    """
    ratios = [c.ratio for c in cells if not c.overflow]
    pairs = list(zip(ratios, ratios[1:]))
    if sweep == "depth":
        return all(x > y for x, y in pairs)
    return all(x < y for x, y in pairs)


@dataclass(frozen=True)
class LabResult:
    sweep: str
    runs: tuple[tuple[Cell, ...], ...]

    @property
    def monotone_runs(self) -> int:
        return sum(is_monotone(self.sweep, list(r)) for r in self.runs)

    @property
    def passed(self) -> bool:
        return 2 * self.monotone_runs > len(self.runs)


def _sweep_job(args):
    sweep, seed, trials = args
    return tuple(run_sweep(sweep, seed, trials))


def run_lab(sweeps=SWEEPS, reps: int = 5, trials: int = 64, seed: int = 0, workers: int = 1) -> list[LabResult]:
    jobs = [(s, seed + r, trials) for s in sweeps for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_sweep_job, jobs))
    else:
        runs = [_sweep_job(j) for j in jobs]
    out = []
    for i, s in enumerate(sweeps):
        out.append(LabResult(s, tuple(runs[i * reps:(i + 1) * reps])))
    return out


def report_csv(results: list[LabResult]) -> str:
    """First repetition of each sweep as CSV, then one trend line per sweep."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        for cell in res.runs[0]:
            writer.writerow(cell.row())
    for res in results:
        verdict = "pass" if res.passed else "FAIL"
        buf.write(f"# trend {res.sweep}: monotone in {res.monotone_runs}/{len(res.runs)} runs: {verdict}\n")
    return buf.getvalue()
