from __future__ import annotations

import pytest

_CRITERIA: dict[str, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            status = "SKIP"
            if isinstance(report.longrepr, tuple):
                detail = report.longrepr[2]
        else:
            status = "PASS" if report.passed else "FAIL"
        _CRITERIA[f"{number}:{item.name}"] = (status, f"{number:>2}. {title}", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.split(":")[0]), k)):
        status, title, detail = _CRITERIA[key]
        line = f"[{status}] {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the criterion report."""

    def record(text: str) -> None:
        request.node.user_properties.append(("detail", text))

    return record
