import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE = {}
_STATE = {"acceptance_collected": False}


def pytest_collection_modifyitems(items):
    _STATE["acceptance_collected"] = any(i.module.__name__.endswith("test_acceptance") for i in items)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion result and assert it."""

    def record(number, title, ok, detail, elapsed, limit):
        in_time = elapsed < limit
        passed = bool(ok) and in_time
        ACCEPTANCE[number] = (title, passed, f"{detail}; {elapsed:.2f}s (limit {limit:g}s)")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
        assert in_time, f"criterion {number} ({title}) exceeded its runtime: {elapsed:.2f}s >= {limit}s"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _STATE["acceptance_collected"]:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 15):
        if k in ACCEPTANCE:
            title, ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d} FAIL  (not recorded: test errored or was not run)")
