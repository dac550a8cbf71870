import pytest


@pytest.fixture(scope="session")
def criteria_log(request):
    lines = getattr(request.config, "_qc_criteria", None)
    if lines is None:
        lines = request.config._qc_criteria = []

    def record(number, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_qc_criteria", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
