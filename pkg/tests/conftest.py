from __future__ import annotations

import pytest

from cubecurrents import build_system, new_unit_cube

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def system2():
    """N = 2, plane (1,2) three times."""
    return build_system(new_unit_cube(2, 5), [(1, 2)] * 3)


@pytest.fixture(scope="session")
def system3d():
    """N = 3, planes (1,2) then (1,3)."""
    return build_system(new_unit_cube(3, 5), [(1, 2), (1, 3)])


@pytest.fixture
def record_acceptance():
    def record(k: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[k] = (ok, detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
