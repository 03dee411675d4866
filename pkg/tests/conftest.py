import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion."""
    def record(number, detail):
        ACCEPTANCE[number] = [detail, None]
    yield record
    for number, entry in ACCEPTANCE.items():
        if entry[1] is None:
            failed = getattr(request.node, "rep_call", None)
            entry[1] = failed is not None and failed.passed


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        detail, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
