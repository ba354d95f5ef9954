import pytest

_OUTCOMES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_OUTCOMES] = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the per-criterion summary."""
    outcomes = request.config.stash[_OUTCOMES]

    def record(number: int, passed: bool, detail: str) -> bool:
        prev = outcomes.get(number)
        if prev is not None:
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}"
        outcomes[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = config.stash.get(_OUTCOMES, {})
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        passed, detail = outcomes[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
