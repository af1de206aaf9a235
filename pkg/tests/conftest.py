from __future__ import annotations

import pytest

from aqgate import synthgen

# (criterion name, passed, detail) records filled in by the acceptance tests
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def default_snapshot():
    """Full-size generated dataset; shared because generation is not free."""
    return synthgen.generate_snapshot(synthgen.GenConfig())


@pytest.fixture(scope="session")
def dataset_schemas(default_snapshot):
    return default_snapshot.schemas()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
