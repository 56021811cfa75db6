import time

import pytest

from risemf import simulator as sim
from risemf.model import Conditioning, NetworkParams

SEED = 20240601

# criterion number -> list of (check, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record():
    """Record one acceptance sub-check; the criterion line is printed at the end of the run."""

    def _record(criterion: int, check: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
        print(f"criterion {criterion} / {check}: {'PASS' if passed else 'FAIL'} ({detail})")
        return bool(passed)

    return _record


@pytest.fixture(scope="session")
def default_run():
    """1e5 trials at the defaults with t_bu = 100 m, uplink included; returns (result, seconds)."""
    t0 = time.perf_counter()
    res = sim.simulate(NetworkParams(), 100_000, seed=SEED, conditioning=Conditioning.fixed(100.0))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def discrete_run():
    """3e4 trials at the defaults with the multi-lobe interferer pattern."""
    return sim.simulate(NetworkParams(), 30_000, seed=SEED + 1, pattern="discrete")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        ok = all(c[1] for c in checks)
        failed = [f"{c[0]}: {c[2]}" for c in checks if not c[1]]
        tail = "; ".join(failed) if failed else f"{len(checks)} checks"
        tr.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {tail}")
        for check, passed, detail in checks:
            tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {check}: {detail}")
