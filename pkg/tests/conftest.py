import os
from pathlib import Path

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the assertion is left to the caller."""

    def report(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return report


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory) -> Path:
    """Where acceptance sweeps write; set BRMDD_ACCEPTANCE_DIR to keep and resume them."""
    env = os.environ.get("BRMDD_ACCEPTANCE_DIR")
    if env:
        path = Path(env)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("acceptance")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("BRMDD_FULLSCALE") == "1":
        return
    skip = pytest.mark.skip(reason="set BRMDD_FULLSCALE=1 to run")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
