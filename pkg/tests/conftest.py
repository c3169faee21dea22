import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Collect one pass/fail line per acceptance criterion for the terminal summary.

    ``companion=True`` records an extra diagnostic line under the criterion
    without counting it as the criterion's verdict.
    """

    def record(number, ok, detail, companion=False):
        tag = "  companion" if companion else "CRITERION"
        line = f"{tag} {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, companion, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, _, line in sorted(ACCEPTANCE_LINES, key=lambda r: (r[0], r[1])):
            terminalreporter.write_line(line)
