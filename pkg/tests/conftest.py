import os

import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    line = f"{name} {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    _ACCEPTANCE.append((name, passed, detail))


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'} {detail}")


def full_scale_enabled() -> bool:
    return os.environ.get("LOADPLASTICITY_FULL_SCALE", "") not in ("", "0")
