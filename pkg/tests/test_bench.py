import random

import numpy as np
import pytest

from cmpswhe.bench import (
    OFFSET,
    BenchReport,
    BenchRow,
    bench_frames,
    fgdiff_packed,
    fgdiff_unbatched,
    packing_for,
    run_bench,
)


@pytest.mark.parametrize("batch", [1, 3, 16])
def test_packed_kernel_matches_plaintext(sk, batch):
    prev, cur = bench_frames(size=9, seed=batch)
    expected = np.abs(cur.data.astype(int) - prev.data.astype(int)) > 20
    pkey, bsk = packing_for(batch, sk)
    assert pkey.k == batch
    assert all(b > 2 * (2 * OFFSET - 1) for b in pkey.lane_moduli)
    timings = []
    mask = fgdiff_packed(prev, cur, 20, bsk, pkey, random.Random(0), timings)
    assert np.array_equal(mask, expected)
    assert len(timings) == 1 and all(t >= 0 for t in timings[0])


def test_unbatched_kernel_matches_plaintext(fast_keys):
    prev, cur = bench_frames(size=8, seed=1)
    expected = np.abs(cur.data.astype(int) - prev.data.astype(int)) > 20
    assert np.array_equal(fgdiff_unbatched(prev, cur, 20, fast_keys[1], random.Random(0)), expected)


def test_run_bench_small(sk):
    report = run_bench(sk, batch_sizes=(1, 4), size=8, runs=1, warmup=0, unbatched=True)
    assert [(r.path, r.batch) for r in report.rows] == [("packed", 1), ("packed", 4), ("unbatched", 1)]
    assert all(r.elements == 64 for r in report.rows)


def test_report_csv_roundtrip():
    rows = (BenchRow("packed", 1, 4096, 10.5, 2.25, 0.125), BenchRow("packed", 16, 4096, 1.0, 0.2, 0.01))
    report = BenchReport(rows)
    text = report.to_csv()
    assert text.splitlines()[1] == "packed,1,4096,10.500,2.250,0.125,12.875,3.143"
    assert BenchReport.from_csv(text) == report


def test_report_rejects_inconsistent_columns():
    text = BenchReport((BenchRow("packed", 1, 10, 1.0, 1.0, 1.0),)).to_csv()
    with pytest.raises(ValueError):
        BenchReport.from_csv(text.replace(",3.000,", ",4.000,"))
    with pytest.raises(ValueError):
        BenchReport.from_csv("a,b\n1,2\n")
