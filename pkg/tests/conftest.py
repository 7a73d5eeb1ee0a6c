"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    failed = report.failed or (report.when == "call" and report.skipped)
    entry = _OUTCOMES.setdefault(number, [report.criterion_title, True, ""])
    if failed:
        entry[1] = False
        entry[2] = report.when
    if report.when == "call":
        entry.append(report.capstdout.strip())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion, rep.criterion_title = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, ok, when, *details = _OUTCOMES[number]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}"
        detail = " | ".join(d for d in details if d)
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
