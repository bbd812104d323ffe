import pytest

RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[RESULTS] = {}


@pytest.fixture
def criterion(request):
    """``report(n, passed, detail)`` records the one-line verdict for criterion ``n``."""
    results = request.config.stash[RESULTS]

    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        results[number] = line
        print(line)
        return passed

    return report


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" or not rep.failed:
        return
    results = item.config.stash[RESULTS]
    n = marker.args[0]
    if n not in results or " PASS " in results[n]:
        results[n] = f"criterion {n}: FAIL  {item.name} raised {call.excinfo.typename}"


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(RESULTS, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
