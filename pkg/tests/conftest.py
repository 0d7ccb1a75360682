import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tke_forge.ingest import CADENCE_S, COLUMNS, ClusterDataset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_dataset(n=50, seed=0, name="B1", t0=0.0, phase=None):
    rng = np.random.default_rng(seed)
    t = t0 + np.arange(n) * CADENCE_S
    wind = rng.normal([2.0, 0.5, 0.0], 0.7, (n, 3))
    temps = 20 + 5 * rng.standard_normal((n, 8))
    return ClusterDataset(name, np.column_stack([t, wind, temps]), (f"{name}.csv",), phase)


def csv_text(rows, header=COLUMNS):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (PASS/FAIL, title, seconds); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, dt = ACCEPTANCE[n]
        terminalreporter.write_line(f"{status} criterion {n:>2}: {title} ({dt:.2f} s)")
