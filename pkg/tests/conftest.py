import pytest

from hetnet_eicic.layout import build_layout
from hetnet_eicic.traffic import ServiceArea


@pytest.fixture(scope="session")
def layout():
    return build_layout()


@pytest.fixture(scope="session")
def area(layout):
    return ServiceArea(layout)


ACCEPTANCE = []  # (criterion, passed, detail) in execution order


@pytest.fixture
def verdict():
    def record(n: int, passed: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert passed, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
