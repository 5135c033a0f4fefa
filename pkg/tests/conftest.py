import time

SESSION_START = time.perf_counter()
ACCEPTANCE_LINES: list[str] = []


def pytest_collection_modifyitems(session, config, items):
    # the end-to-end criterion measures the whole run, so it goes last
    last = [it for it in items if it.name == "test_criterion_9_determinism_and_suite"]
    items[:] = [it for it in items if it not in last] + last


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
