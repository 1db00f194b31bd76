import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running check, enabled with ORGMARL_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ORGMARL_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set ORGMARL_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE_LINES = {}


def record_acceptance(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
