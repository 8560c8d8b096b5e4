"""Episode execution for the expected-value, CVaR-worst-case and
CVaR-expected-value strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, RandomSource
from .solvers.cvar import XI_TOL, CvarSolution, _response, greedy_pair
from .solvers.ev import ValueTable
from .solvers.lex import ENABLE_TOL, LexSolution, lex_pair

STRATEGIES = ("ev", "cvar-wc", "cvar-ev")
STEP_LIMIT = 10**6


class StepLimitError(RuntimeError):
    pass


class MissingSolutionError(ValueError):
    pass


class SwitchSafetyError(AssertionError):
    """A switched episode ended above the VaR threshold."""


@dataclass(frozen=True)
class EpisodeRecord:
    total_cost: float
    switched: bool
    switch_step: int | None
    final_y: float
    steps: int
    xi_product: float = 1.0  # product of realised perturbation factors
    max_violation: float = 0.0  # worst adversary-constraint breach seen


@dataclass
class Solutions:
    ev: ValueTable | None = None
    cvar: CvarSolution | None = None
    lex: LexSolution | None = None
    alpha: float | None = None

    def require(self, strategy: str) -> None:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        if strategy == "ev" and self.ev is None:
            raise MissingSolutionError("strategy 'ev' needs an expected-value table")
        if strategy in ("cvar-wc", "cvar-ev"):
            if self.cvar is None or self.alpha is None:
                raise MissingSolutionError(f"strategy {strategy!r} needs a CVaR solution and alpha")
        if strategy == "cvar-ev" and self.lex is None:
            raise MissingSolutionError("strategy 'cvar-ev' needs the constrained expected-value solution")


def execute_episode(
    mdp: Mdp,
    strategy: str,
    solutions: Solutions,
    rng: np.random.Generator,
    xi_tol: float = XI_TOL,
    step_limit: int = STEP_LIMIT,
    check: bool = False,
    trace: list | None = None,
) -> EpisodeRecord:
    """Run one episode.

    The CVaR strategies carry ``(s, y)``: after each action the adversary's
    best response at the current budget is recomputed and ``y`` becomes the
    budget it assigns to the realised successor.  Once that factor falls
    below ``xi_tol`` the budget is exhausted; ``cvar-wc`` then follows the
    worst-case policy while ``cvar-ev`` switches to the constrained
    expected-cost policy, provided the accumulated cost still admits an
    enabled action there.

    If ``trace`` is a list, one ``(state, y, c, action, switched)`` tuple is
    appended per decision.
    """
    solutions.require(strategy)
    cm = mdp.compiled
    goal = cm.goal_mask
    cum = cm.cum_prob
    i = cm.initial
    c = 0.0
    y = float(solutions.alpha) if strategy != "ev" else 1.0
    xi_prod = 1.0
    switched = False
    switch_step = None
    worst_violation = 0.0
    if strategy != "ev":
        cvar = solutions.cvar
        worst = cvar.worst
    lex = solutions.lex
    steps = 0
    while not goal[i]:
        if steps >= step_limit:
            raise StepLimitError(f"episode exceeded {step_limit} steps")
        resp = None
        if strategy == "ev":
            p = int(solutions.ev.pair[i])
        elif switched:
            p = lex_pair(lex, i, c)
        elif y <= 0.0:
            p = int(worst.pair[i])
        else:
            p = greedy_pair(cvar, i, y)
            _, resp = _response(cvar, i, p - int(cm.state_first_pair[i]), y)
            if check:
                worst_violation = max(worst_violation, resp.violation(y))
        if trace is not None:
            trace.append((cm.states[i], y, c, cm.pair_action[p], switched))
        n = cm.n_succ[p]
        k = 0 if n == 1 else min(int(np.searchsorted(cum[p, :n], rng.random(), side="right")), n - 1)
        c += cm.pair_cost[p]
        nxt = int(cm.succ[p, k])
        steps += 1
        if resp is not None:
            xi = resp.xi[k]
            if xi < xi_tol:
                y = 0.0
                xi_prod = 0.0
            else:
                y = float(resp.budgets[k])
                xi_prod *= xi
        i = nxt
        if goal[i]:
            break
        if strategy == "cvar-ev" and not switched and y <= 0.0:
            if c + worst.v_worst[i] <= lex.threshold + ENABLE_TOL:
                switched = True
                switch_step = steps
    if switched and c > lex.threshold + ENABLE_TOL:
        raise SwitchSafetyError(f"switched episode cost {c} exceeds VaR {lex.threshold}")
    return EpisodeRecord(c, switched, switch_step, y, steps, xi_prod, worst_violation)


def run_episodes(
    mdp: Mdp,
    strategy: str,
    solutions: Solutions,
    n_episodes: int,
    source: RandomSource,
    **kwargs,
) -> list[EpisodeRecord]:
    """Episodes ``0..n-1``, each on its own substream of ``source``."""
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    return [execute_episode(mdp, strategy, solutions, source.episode(e), **kwargs) for e in range(n_episodes)]
