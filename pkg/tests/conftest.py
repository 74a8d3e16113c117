import json
from pathlib import Path

import numpy as np
import pytest

from qres.config import RobustnessSettings

ROOT = Path(__file__).resolve().parents[1]
INSTANCES = ROOT / "instances"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def fast():
    """Few restarts and samples: enough for the qubit instances used in unit tests."""
    return RobustnessSettings(restarts=3, samples=2000)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running see-saw or qutrit checks")


def pytest_terminal_summary(terminalreporter):
    import sys

    summary = getattr(sys.modules.get("test_acceptance"), "SUMMARY", None)
    if summary:
        terminalreporter.section("acceptance criteria")
        for n in sorted(summary):
            terminalreporter.write_line(summary[n])
