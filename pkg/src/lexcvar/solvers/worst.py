"""Minimax worst-case value iteration: every transition lands on the worst
supported successor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import SUPPORT_TOL, Mdp
from .ev import ConvergenceError


@dataclass(frozen=True, eq=False)
class WorstCaseSolution:
    mdp: Mdp
    v_worst: np.ndarray  # per state
    q_worst: np.ndarray  # per compiled pair
    pair: np.ndarray  # greedy pair per state, -1 at goals
    sweeps: int

    def value(self, s) -> float:
        return float(self.v_worst[self.mdp.compiled.index[s]])

    def q(self, s, a) -> float:
        cm = self.mdp.compiled
        return float(self.q_worst[cm.pair_of[(cm.index[s], a)]])

    def action(self, s):
        p = self.pair[self.mdp.compiled.index[s]]
        return None if p < 0 else self.mdp.compiled.pair_action[p]

    @property
    def policy(self) -> dict:
        cm = self.mdp.compiled
        return {cm.states[i]: cm.pair_action[self.pair[i]] for i in cm.decision}


def worst_backup(cm, values: np.ndarray) -> np.ndarray:
    succ_vals = np.where(cm.prob >= SUPPORT_TOL, values[cm.succ], -np.inf)
    return cm.pair_cost + succ_vals.max(axis=1)


def solve_worst_case(mdp: Mdp, epsilon: float = 1e-6, max_sweeps: int = 10_000) -> WorstCaseSolution:
    cm = mdp.compiled
    v = np.zeros(cm.n_states)
    for sweep in range(1, max_sweeps + 1):
        vmin, _ = cm.reduce_min(worst_backup(cm, v))
        new = np.zeros_like(v)
        new[cm.decision] = vmin
        delta = np.max(np.abs(new - v)) if len(v) else 0.0
        v = new
        if delta < epsilon:
            break
    else:
        raise ConvergenceError(
            f"no finite worst-case policy: minimax iteration still moving after {max_sweeps} sweeps"
        )
    q = worst_backup(cm, v)
    _, first = cm.reduce_min(q)
    pair = np.full(cm.n_states, -1, dtype=np.intp)
    pair[cm.decision] = first
    return WorstCaseSolution(mdp, v, q, pair, sweep)
