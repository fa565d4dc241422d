import csv
import io
import random
from fractions import Fraction
from math import prod

import pytest

from cmpswhe.lab import AMPLIFICATION, DEPTH, IMBALANCE, Cell, is_monotone, lab_key, report_csv, run_cell, run_lab, run_sweep


def analytic_bound(factors, a, eta_max):
    # every noisy factor lies in [x, x + eta_max/a)
    return prod(Fraction(x) + Fraction(eta_max, a) for x in factors) - prod(factors)


def test_lab_key_shape():
    sk = lab_key(10**6, 17, 4)
    assert sk.pk.N == 4 and sk.m_slots == 2
    assert all(2**17 <= b < 2**18 for b in sk.mset.moduli)
    assert sk.eta_max > max(sk.mset.moduli)


def test_amplification_overflow_boundary():
    x, y = AMPLIFICATION["factors"]
    sk_big, sk_ok = lab_key(10**7, 17, 4), lab_key(10**6, 17, 4)
    assert (x + 1) * (y + 1) * 10**14 * 2 >= sk_big.mset.product
    assert (x + 1) * (y + 1) * 10**12 * 2 < sk_ok.mset.product
    cells = run_sweep("amplification", 0, trials=8)
    assert [c.overflow for c in cells] == [True, False, False, False]


@pytest.mark.parametrize("sweep", ["amplification", "depth", "imbalance"])
def test_cells_respect_error_envelope(sweep):
    configs = {
        "amplification": [(AMPLIFICATION["factors"], a, 17, 4) for a in AMPLIFICATION["a"]],
        "depth": [(ch, DEPTH["a"], 16, 11) for ch in DEPTH["chains"]],
        "imbalance": [(p, IMBALANCE["a"], 17, 4) for p in IMBALANCE["pairs"]],
    }[sweep]
    cells = run_sweep(sweep, 1, trials=16)
    assert len(cells) == len(configs)
    for cell, (factors, a, bits, n) in zip(cells, configs):
        assert cell.product == prod(factors)
        if cell.overflow:
            continue
        sk = lab_key(a, bits, n)
        assert 0 <= cell.error < analytic_bound(factors, a, sk.eta_max)
        assert cell.ratio == cell.error / cell.product


def test_all_products_equal_ten_million():
    rows = [AMPLIFICATION["factors"], *DEPTH["chains"], *IMBALANCE["pairs"]]
    assert {prod(r) for r in rows} == {10**7}


def test_run_cell_is_reproducible():
    sk = lab_key(10**6, 17, 4)
    a = run_cell("imbalance", "x", (300, 20), sk, 8, random.Random(5))
    b = run_cell("imbalance", "x", (300, 20), sk, 8, random.Random(5))
    assert a == b


def _cells(ratios):
    return [Cell("s", str(i), 1, None if r is None else Fraction(r), None if r is None else Fraction(r))
            for i, r in enumerate(ratios)]


@pytest.mark.parametrize(
    "sweep, ratios, expected",
    [
        ("amplification", [None, 1, 2, 3], True),
        ("amplification", [1, 3, 2], False),
        ("imbalance", [1, 1, 2], False),
        ("depth", [None, 5, 4, 1], True),
        ("depth", [5, 6], False),
    ],
)
def test_is_monotone(sweep, ratios, expected):
    assert is_monotone(sweep, _cells(ratios)) is expected


def test_unknown_sweep():
    with pytest.raises(ValueError):
        run_sweep("width", 0)


def test_report_format():
    results = run_lab(reps=3, trials=8)
    text = report_csv(results)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert len(rows) == 4 + 6 + 5
    assert rows[0]["result"] == "overflow" and rows[0]["error"] == ""
    trends = [ln for ln in text.splitlines() if ln.startswith("# trend")]
    assert len(trends) == 3
    assert all("/3 runs" in ln for ln in trends)


def test_workers_do_not_change_results():
    assert run_lab(reps=2, trials=4, workers=2) == run_lab(reps=2, trials=4, workers=1)
