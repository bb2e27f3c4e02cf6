"""Collects acceptance verdicts and prints them at the end of the run."""

from collections import OrderedDict

import pytest

_VERDICTS = []


class Verdicts:
    def record(self, criterion: int, part: str, ok: bool, detail: str = "") -> bool:
        _VERDICTS.append((criterion, part, ok, detail))
        print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok

    def not_run(self, criterion: int, reason: str) -> None:
        _VERDICTS.append((criterion, "optional", None, reason))


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, part, ok, detail in _VERDICTS:
        status = "NOT RUN" if ok is None else ("PASS" if ok else "FAIL")
        tr.write_line(f"  criterion {criterion} [{part}]: {status} {detail}".rstrip())
    parts = OrderedDict()
    for criterion, _, ok, _ in sorted(_VERDICTS, key=lambda v: v[0]):
        parts.setdefault(criterion, []).append(ok)
    for criterion, oks in parts.items():
        ran = [ok for ok in oks if ok is not None]
        status = "NOT RUN" if not ran else ("PASS" if all(ran) else "FAIL")
        tr.write_line(f"criterion {criterion}: {status}")
