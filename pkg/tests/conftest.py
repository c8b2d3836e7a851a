import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("default", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("default")

GOLDEN = Path(__file__).resolve().parent / "golden"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
