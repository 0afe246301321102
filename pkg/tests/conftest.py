"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import re

import pytest

_OUTCOMES: dict[int, tuple[str, str]] = {}
_NAME = re.compile(r"test_criterion_(\d+)_")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    match = _NAME.match(item.name)
    if match is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if rep.when == "setup":
            detail = f"setup error: {call.excinfo.value!r}" if call.excinfo else "setup error"
        _OUTCOMES[int(match.group(1))] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        verdict, detail = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
