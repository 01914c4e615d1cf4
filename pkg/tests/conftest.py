import re

import matplotlib
import pytest

matplotlib.use("Agg")

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Reporter for acceptance criteria: ``report(ok, detail)`` records one PASS/FAIL line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})
    number = int(re.search(r"criterion_(\d+)", request.node.name).group(1))

    def report(ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        lines[number] = line
        print(line)
        return ok

    yield report
    if number not in lines:
        lines[number] = f"criterion {number}: FAIL | did not complete (see traceback)"


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
