import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a named check under an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        _CRITERIA.setdefault(number, []).append((bool(ok), detail))
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        detail = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
