from __future__ import annotations

import pytest

from shmf.bessel_core import build_basis


@pytest.fixture(scope="session")
def basis32():
    return build_basis(32)


@pytest.fixture(scope="session")
def basis64():
    return build_basis(64)


@pytest.fixture(scope="session")
def basis128():
    return build_basis(128)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
