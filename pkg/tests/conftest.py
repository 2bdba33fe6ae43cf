import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from backbone.core import BipartiteGraph

settings.register_profile("default", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_bipartite(rng, n_left, n_right, density):
    mask = rng.random((n_left, n_right)) < density
    r, c = np.nonzero(mask)
    return BipartiteGraph(tuple(f"L{i}" for i in range(n_left)), tuple(f"R{a}" for a in range(n_right)), r, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "xfailed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome, props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(lines, key=lambda t: int(t[0][1:])):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'} {crit} {detail}")
