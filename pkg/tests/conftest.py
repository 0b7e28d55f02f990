from importlib.resources import files

import pytest
from hypothesis import settings

from optic.bgp import parse_rib
from optic.engine import parse_events
from optic.graph import parse_topology

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = files("optic") / "data"


@pytest.fixture
def example_topology():
    return parse_topology((DATA / "fig2.topo").read_text(), "fig2.topo")


@pytest.fixture
def example_rib(example_topology):
    return parse_rib((DATA / "fig2.rib").read_text(), example_topology, "fig2.rib")


@pytest.fixture
def example_events(example_topology):
    return parse_events((DATA / "fig2.scenario").read_text(), example_topology, "fig2.scenario")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
