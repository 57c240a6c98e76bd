from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from fedgwc.datagen import FederationSpec, GroupSpec, make_federation

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_federation():
    spec = FederationSpec(
        K=12, C=3, d=4,
        groups=(GroupSpec(6, 100.0, "clean"), GroupSpec(6, 0.5, "noisy")),
        samples_per_client=40, seed=7,
    )
    return make_federation(spec)
