import numpy as np
import pytest

from sbvp.grid import build_grid
from sbvp.problem import (
    ProblemSpec,
    ball_domain,
    constant_rhs,
    ellipse_domain,
    quadratic_product_rhs,
    zero_rhs,
)
from sbvp.solver import continuation_solve

from oracles import RHO_HYP

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def hyperboloid_problem():
    return ProblemSpec(ball_domain(1.0), ball_domain(RHO_HYP), zero_rhs(), "minkowski")


def sphere_problem():
    return ProblemSpec(ball_domain(1.0), ball_domain(1.0), zero_rhs(), "euclidean")


def constant_problem(f):
    return ProblemSpec(ball_domain(1.0), ball_domain(RHO_HYP), constant_rhs(f), "minkowski")


def product_problem(eps=0.2):
    return ProblemSpec(ball_domain(1.0), ball_domain(RHO_HYP), quadratic_product_rhs(eps),
                       "minkowski")


def ellipse_problem():
    return ProblemSpec(ball_domain(1.0), ellipse_domain(0.6, 0.4, center=[0.1, 0.05]),
                       constant_rhs(0.1), "minkowski")


class Solves:
    """Session cache of solved problems keyed by (name, n_r, n_t)."""

    def __init__(self):
        self._cache = {}

    def get(self, name, n_r=33, n_t=64, **kw):
        key = (name, n_r, n_t, tuple(sorted(kw.items())))
        if key not in self._cache:
            prob = PROBLEMS[name](**kw)
            grid = build_grid(prob.source, n_r, n_t)
            state, trace = continuation_solve(prob, grid)
            self._cache[key] = (prob, grid, state, trace)
        return self._cache[key]


PROBLEMS = {
    "hyperboloid": hyperboloid_problem,
    "sphere": sphere_problem,
    "constant": constant_problem,
    "product": product_problem,
    "ellipse": ellipse_problem,
}


@pytest.fixture(scope="session")
def solves():
    return Solves()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
