"""Collects the acceptance verdicts and prints one line per criterion."""

import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


class Verdict:
    def __init__(self, number: int):
        self.number = number
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        passed = exc_type is None
        detail = self.detail or (f"{exc_type.__name__}: {exc}".splitlines()[0] if exc_type else "")
        _VERDICTS[self.number] = (passed, detail)
        line = f"criterion {self.number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return False


@pytest.fixture
def verdict(request):
    return Verdict


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        passed, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
