import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    measured = dict(item.user_properties).get("measured", "")
    _CRITERIA[number] = (title, report.passed, measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, measured = _CRITERIA[number]
        line = f"{'PASS' if passed else 'FAIL'}  {number:2d}. {title}"
        terminalreporter.write_line(f"{line}: {measured}" if measured else line)
