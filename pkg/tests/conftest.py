import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from nodal_blowup.stationary import ProblemParams, knodal_solution
from nodal_blowup.spectrum import first_eigenpair

settings.register_profile(
    "repo", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

ORACLE_FILE = Path(__file__).parent / "oracles" / "frozen.json"


@pytest.fixture(scope="session")
def oracles():
    return json.loads(ORACLE_FILE.read_text())


@pytest.fixture(scope="session")
def solution_cache():
    cache = {}

    def get(n, p, k=2, n_nodes=2049):
        key = (n, p, k, n_nodes)
        if key not in cache:
            sol = knodal_solution(ProblemParams(n, p, k), n_nodes=n_nodes)
            cache[key] = (sol, first_eigenpair(sol))
        return cache[key]

    return get


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance check, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def check(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
