import pytest

# criterion id -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        print(f"{key} {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k[1:].split()[0].split("-")[0]), k)):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<14} {'PASS' if passed else 'FAIL'}  {detail}")
