import random
import time

import pytest
from hypothesis import HealthCheck, settings

from cmpswhe import fixtures
from cmpswhe.inference import inference_keys
from cmpswhe.keys import derive_keys

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

USER_KEY = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
TIMESTAMP = 1_700_000_000


@pytest.fixture(scope="session")
def default_keys():
    return derive_keys(USER_KEY, TIMESTAMP)


@pytest.fixture(scope="session")
def pk(default_keys):
    return default_keys[0]


@pytest.fixture(scope="session")
def sk(default_keys):
    return default_keys[1]


@pytest.fixture(scope="session")
def fast_keys():
    return inference_keys()


@pytest.fixture(scope="session")
def worked():
    return fixtures.worked_keys()


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture(scope="session")
def bench_report(sk):
    """One 64x64 benchmark shared by the scaling tests; ``(report, seconds)``."""
    from cmpswhe.bench import run_bench

    t0 = time.perf_counter()
    report = run_bench(sk, batch_sizes=(1, 4, 16), size=64, runs=3, warmup=1)
    return report, time.perf_counter() - t0


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    """Record and print one acceptance line; returns ``record(n, ok, detail)``."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[n] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
