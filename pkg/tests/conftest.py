import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "ci", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("ci")

from ctpm.dataset import Dataset  # noqa: E402


def make_dataset(n=40, dx=3, dy=2, seed=0, outcomes=("q", "r", "c", "m"), rate=0.5):
    rng = np.random.default_rng(seed)
    t = (rng.uniform(size=n) < rate).astype(int)
    t[0], t[1] = 1, 0
    return Dataset(
        subject_ids=[f"s{i}" for i in range(n)],
        candidate_ids=[f"c{i}" for i in range(n)],
        x=rng.normal(size=(n, dx)),
        y=rng.normal(size=(n, dy)),
        treatment=t,
        intensity=rng.uniform(size=n),
        outcomes={k: rng.normal(size=n) + t for k in outcomes},
    )


@pytest.fixture
def small_dataset():
    return make_dataset()


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
