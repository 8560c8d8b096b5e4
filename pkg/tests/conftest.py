"""Shared fixtures: each domain is solved once per test session."""

from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from lexcvar.domains.registry import build_domain
from lexcvar.execution import Solutions
from lexcvar.mdp import Mdp, RandomSource
from lexcvar.solvers import (
    build_cost_grid,
    build_ygrid,
    cvar_value_iteration,
    estimate_var,
    solve_constrained_ev,
    solve_expected_value,
    solve_worst_case,
)

DEFAULT_ALPHAS = (0.02, 0.2)
EPISODES = 20_000


@dataclass
class Pipeline:
    mdp: Mdp
    shift: float
    ev: object
    worst: object
    cvar: object
    lex: dict = field(default_factory=dict)

    def solutions(self, alpha=None) -> Solutions:
        if alpha is None:
            return Solutions(ev=self.ev)
        return Solutions(ev=self.ev, cvar=self.cvar, lex=self.lex[alpha], alpha=alpha)


_CACHE: dict = {}


def pipeline(name: str, alphas=DEFAULT_ALPHAS, var_episodes: int = EPISODES) -> Pipeline:
    key = (name, tuple(alphas), var_episodes)
    if key not in _CACHE:
        mdp, shift = build_domain(name)
        ev = solve_expected_value(mdp)
        worst = solve_worst_case(mdp)
        cvar = cvar_value_iteration(mdp, build_ygrid(), worst)
        pipe = Pipeline(mdp, shift, ev, worst, cvar)
        for j, a in enumerate(alphas):
            var = estimate_var(mdp, cvar, a, var_episodes, RandomSource(11, 100 + j))
            pipe.lex[a] = solve_constrained_ev(mdp, worst, var, build_cost_grid(var.value))
        _CACHE[key] = pipe
    return _CACHE[key]


@pytest.fixture(scope="session")
def desk():
    return pipeline("desk", alphas=(0.1,), var_episodes=10_000)


@pytest.fixture(scope="session")
def betting():
    return pipeline("betting")


@pytest.fixture(scope="session")
def dst():
    return pipeline("dst")


@pytest.fixture(scope="session")
def inventory():
    return pipeline("inventory")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
