import functools

import numpy as np
import pytest

from bprk import IntegrationFailure, IntegratorConfig, builtin, get_problem, integrate

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_run(problem, method, problem_params=(), **cfg):
    """Integrate once per distinct configuration; failures return the partial trace."""
    prob = get_problem(problem, **dict(problem_params))
    try:
        return integrate(prob, builtin(method), IntegratorConfig(**cfg))
    except IntegrationFailure as exc:
        return exc.trace


@pytest.fixture(scope="session")
def run_cached():
    return cached_run


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
