from pathlib import Path

import pytest

from tests._report import RESULTS

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def s0_path() -> Path:
    return ROOT / "scenarios" / "s0.toml"


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
