"""Expected-cost value iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import Mdp


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ValueTable:
    mdp: Mdp
    values: np.ndarray  # indexed like mdp.states
    pair: np.ndarray  # greedy pair index per state, -1 at goals
    sweeps: int

    def value(self, s) -> float:
        return float(self.values[self.mdp.compiled.index[s]])

    def action(self, s):
        p = self.pair[self.mdp.compiled.index[s]]
        if p < 0:
            return None
        return self.mdp.compiled.pair_action[p]

    @property
    def policy(self) -> dict:
        cm = self.mdp.compiled
        return {cm.states[i]: cm.pair_action[self.pair[i]] for i in cm.decision}


def expected_backup(cm, values: np.ndarray) -> np.ndarray:
    return cm.pair_cost + np.einsum("pk,pk->p", cm.prob, values[cm.succ])


def solve_expected_value(mdp: Mdp, epsilon: float = 1e-6, max_sweeps: int = 100_000) -> ValueTable:
    """Synchronous Bellman sweeps from zero until the sup-norm change drops
    below ``epsilon``; greedy ties go to the lowest action index."""
    cm = mdp.compiled
    v = np.zeros(cm.n_states)
    for sweep in range(1, max_sweeps + 1):
        q = expected_backup(cm, v)
        vmin, _ = cm.reduce_min(q)
        new = np.zeros_like(v)
        new[cm.decision] = vmin
        delta = np.max(np.abs(new - v)) if len(v) else 0.0
        v = new
        if delta < epsilon:
            break
    else:
        raise ConvergenceError(f"expected-value iteration did not converge in {max_sweeps} sweeps")
    _, first = cm.reduce_min(expected_backup(cm, v))
    pair = np.full(cm.n_states, -1, dtype=np.intp)
    pair[cm.decision] = first
    return ValueTable(mdp, v, pair, sweep)
