import pytest

_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call" or item.get_closest_marker("acceptance") is None:
        return
    props = dict(item.user_properties)
    label = props.get("criterion", item.name)
    detail = props.get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    _LINES.append(f"[{status}] {label}" + (f": {detail}" if detail else ""))
    for note in props.get("info", ()):
        _LINES.append(f"       info: {note}")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _LINES:
        terminalreporter.write_line(line)
