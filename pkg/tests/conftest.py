import pytest

CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints every recorded line."""

    def record(name: str, passed: bool, detail: str) -> bool:
        CRITERIA[name] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda n: int(n.split()[1]) if n.split()[1].isdigit() else 99):
        passed, detail = CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
