"""Expected-cost optimisation restricted to actions that can never push the
total cost above a VaR threshold.

The augmented state is (s, c) with c the cost accumulated so far.  Action a
is enabled at (s, c) when ``c + Q_worst(s, a) <= VaR``; state s is feasible
at c exactly when ``c <= VaR - V_worst(s)``.  Values live on a uniform cost
grid plus one extra knot per state at that feasibility boundary, so the
lookup never interpolates across the jump to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..mdp import Mdp
from .ev import ConvergenceError
from .worst import WorstCaseSolution

ENABLE_TOL = 1e-9
_CHUNK = 2048


class SwitchContractError(RuntimeError):
    """Raised when the switch policy is queried above the VaR threshold."""


class InfeasibleRootError(RuntimeError):
    pass


@dataclass(frozen=True)
class VarEstimate:
    value: float
    alpha: float
    episodes: int
    convention: str = "lower"
    margin: bool = False


@dataclass(frozen=True)
class CostGrid:
    points: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0]) if len(self.points) > 1 else 1.0

    def __len__(self) -> int:
        return len(self.points)


def build_cost_grid(var: float, n_points: int = 100) -> CostGrid:
    if n_points < 2:
        raise ValueError("a cost grid needs at least 2 points")
    if not var >= 0:
        raise ValueError(f"VaR must be nonnegative, got {var}")
    if var == 0:
        return CostGrid(np.zeros(1))
    pts = np.linspace(0.0, var, n_points)
    pts[-1] = var
    return CostGrid(pts)


def exact_cost_grid(var: float) -> CostGrid:
    """Integer cost axis ``0, 1, ..., floor(var)`` (plus ``var`` if fractional)."""
    pts = np.arange(0.0, math.floor(var + ENABLE_TOL) + 1.0)
    if var - pts[-1] > ENABLE_TOL:
        pts = np.append(pts, var)
    return CostGrid(pts)


def is_integral_model(mdp: Mdp) -> bool:
    costs = np.asarray(list(mdp.costs.values()), dtype=float)
    return bool(np.all(costs == np.round(costs)))


@dataclass(eq=False)
class LexSolution:
    mdp: Mdp
    var: VarEstimate
    grid: CostGrid
    values: np.ndarray  # (n_states, n_grid) on the uniform knots
    boundary: np.ndarray  # per state, value at c = VaR - V_worst(s)
    worst: WorstCaseSolution
    sweeps: int = 0

    @property
    def threshold(self) -> float:
        return self.var.value

    @property
    def bound(self) -> np.ndarray:
        """Largest feasible accumulated cost per state."""
        return self.threshold - self.worst.v_worst

    def lookup(self, s_idx: np.ndarray, c: np.ndarray) -> np.ndarray:
        return _lookup(self.mdp.compiled, self.grid.points, self.values, self.boundary, self.bound, s_idx, c)

    def value(self, s, c: float) -> float:
        i = self.mdp.compiled.index[s]
        return float(self.lookup(np.array([i]), np.array([float(c)]))[0])


def _lookup(cm, pts, values, boundary, bound, s_idx, c):
    s_idx = np.asarray(s_idx)
    c = np.asarray(c, dtype=float)
    out = np.full(np.broadcast(s_idx, c).shape, np.inf)
    s_idx, c = np.broadcast_arrays(s_idx, c)
    goal = cm.goal_mask[s_idx]
    out[goal] = 0.0
    b = bound[s_idx]
    feas = ~goal & (c <= b + ENABLE_TOL)
    if not feas.any():
        return out
    si = s_idx[feas]
    cc = np.minimum(c[feas], b[feas])
    bb = b[feas]
    n = len(pts)
    if n == 1:
        out[feas] = np.where(bb - pts[0] > ENABLE_TOL, boundary[si], values[si, 0])
        return out
    h = pts[1] - pts[0]
    i = np.clip(np.floor(cc / h).astype(np.intp), 0, n - 2)
    cl = pts[i]
    cr = pts[i + 1]
    inside = cr <= bb + ENABLE_TOL
    right_c = np.where(inside, cr, bb)
    right_v = np.where(inside, values[si, np.minimum(i + 1, n - 1)], boundary[si])
    left_v = values[si, i]
    width = right_c - cl
    frac = np.clip(np.where(width > 1e-12, (cc - cl) / np.where(width > 1e-12, width, 1.0), 0.0), 0.0, 1.0)
    with np.errstate(invalid="ignore"):
        out[feas] = np.where(frac == 0.0, left_v, np.where(frac == 1.0, right_v, left_v + frac * (right_v - left_v)))
    return out


def enabled_mask(q_worst: np.ndarray, c, var: float) -> np.ndarray:
    return np.asarray(c) + q_worst <= var + ENABLE_TOL


def enabled_actions(mdp: Mdp, s, c: float, worst: WorstCaseSolution, var: float) -> list:
    """Actions whose worst-case completion keeps the total at or below ``var``."""
    cm = mdp.compiled
    i = cm.index[s]
    rows = cm.pairs_of_state(i)
    mask = enabled_mask(worst.q_worst[rows.start : rows.stop], c, var)
    return [cm.pair_action[p] for p, ok in zip(rows, mask) if ok]


def solve_constrained_ev(
    mdp: Mdp,
    worst: WorstCaseSolution,
    var: VarEstimate,
    grid: CostGrid | None = None,
    epsilon: float = 1e-6,
    max_sweeps: int = 10_000,
    require_root: bool = False,
) -> LexSolution:
    """Value iteration on the cost-augmented model.  Successor values are
    interpolated; cells without an enabled action are infinite.

    The policy is only consulted at switch cells, so ``(s0, 0)`` may well be
    infeasible (VaR below ``v_worst(s0)``).  ``require_root`` turns that case
    into an :class:`InfeasibleRootError`.
    """
    cm = mdp.compiled
    if grid is None:
        grid = build_cost_grid(var.value)
    pts = np.asarray(grid.points, dtype=float)
    n = len(pts)
    bound = var.value - worst.v_worst
    # cell costs: uniform knots followed by the per-state boundary knot
    cell_c = np.empty((cm.n_states, n + 1))
    cell_c[:, :n] = pts[None, :]
    cell_c[:, n] = np.maximum(bound, 0.0)
    feasible = cell_c <= bound[:, None] + ENABLE_TOL
    feasible[cm.goal_mask] = True
    values = np.where(feasible, 0.0, np.inf)

    for sweep in range(1, max_sweeps + 1):
        q = _q_cells(cm, worst, var.value, pts, values, bound, cell_c)
        vmin, _ = cm.reduce_min(q)
        new = values.copy()
        new[cm.decision] = vmin
        new[cm.goal_mask] = 0.0
        both_inf = np.isinf(new) & np.isinf(values)
        with np.errstate(invalid="ignore"):
            diff = np.where(both_inf, 0.0, np.abs(new - values))
        delta = float(np.nanmax(diff)) if diff.size else 0.0
        values = new
        if delta < epsilon:
            break
    else:
        raise ConvergenceError(f"constrained value iteration did not converge in {max_sweeps} sweeps")

    sol = LexSolution(mdp, var, CostGrid(pts), values[:, :n].copy(), values[:, n].copy(), worst, sweep)
    if require_root and not np.isfinite(sol.value(mdp.initial, 0.0)):
        raise InfeasibleRootError(
            f"no enabled action at the initial state: VaR {var.value} is below the "
            f"worst-case optimum {worst.value(mdp.initial)}"
        )
    return sol


def _q_cells(cm, worst, var, pts, values, bound, cell_c):
    n = len(pts)
    out = np.empty((cm.n_pairs, n + 1))
    knots = values[:, :n]
    bnd_v = values[:, n]
    for start in range(0, cm.n_pairs, _CHUNK):
        sl = slice(start, start + _CHUNK)
        c = cell_c[cm.pair_state[sl]]
        cost = cm.pair_cost[sl, None]
        enabled = c + worst.q_worst[sl, None] <= var + ENABLE_TOL
        nxt = c + cost
        acc = np.zeros_like(c)
        for k in range(cm.succ.shape[1]):
            p = cm.prob[sl, k][:, None]
            live = (p > 0) & enabled
            if not live.any():
                continue
            v = _lookup(cm, pts, knots, bnd_v, bound, np.broadcast_to(cm.succ[sl, k][:, None], c.shape), nxt)
            with np.errstate(invalid="ignore"):
                acc += np.where(live, p * v, 0.0)
        out[sl] = np.where(enabled, cost + acc, np.inf)
    return out


def lex_policy_action(sol: LexSolution, s, c: float):
    """Greedy switch-policy action at exact accumulated cost ``c``."""
    cm = sol.mdp.compiled
    i = cm.index[s]
    if cm.goal_mask[i]:
        return None
    return cm.pair_action[lex_pair(sol, i, c)]


def lex_pair(sol: LexSolution, i: int, c: float) -> int:
    if c > sol.threshold + ENABLE_TOL:
        raise SwitchContractError(f"accumulated cost {c} exceeds the VaR threshold {sol.threshold}")
    cm = sol.mdp.compiled
    first = int(cm.state_first_pair[i])
    n = int(cm.state_n_pairs[i])
    rows = slice(first, first + n)
    enabled = enabled_mask(sol.worst.q_worst[rows], c, sol.threshold)
    if not enabled.any():
        return int(sol.worst.pair[i])
    cost = cm.pair_cost[rows]
    vals = sol.lookup(cm.succ[rows], (c + cost)[:, None] * np.ones_like(cm.prob[rows]))
    with np.errstate(invalid="ignore"):
        q = cost + np.where(cm.prob[rows] > 0, cm.prob[rows] * vals, 0.0).sum(axis=1)
    q = np.where(enabled, q, np.inf)
    best = q.min()
    if not np.isfinite(best):
        return int(sol.worst.pair[i])
    return int(first + np.flatnonzero(q <= best + 1e-9)[0])


def reachable_cells(sol: LexSolution, start=None, c0: float = 0.0, limit: int = 10**6):
    """Exhaustively walk the augmented cells reachable under the switch policy
    from ``(start, c0)``.  Returns ``(n_cells, cells_without_enabled_action)``."""
    mdp = sol.mdp
    cm = mdp.compiled
    s0 = cm.index[mdp.initial if start is None else start]
    seen = set()
    stuck = []
    stack = [(s0, float(c0))]
    while stack:
        i, c = stack.pop()
        key = (i, round(c, 9))
        if key in seen:
            continue
        seen.add(key)
        if len(seen) > limit:
            raise RuntimeError("reachability limit exceeded")
        if cm.goal_mask[i]:
            continue
        rows = cm.pairs_of_state(i)
        if not enabled_mask(sol.worst.q_worst[rows.start : rows.stop], c, sol.threshold).any():
            stuck.append((cm.states[i], c))
            continue
        p = lex_pair(sol, i, c)
        nc = c + cm.pair_cost[p]
        for k in range(cm.n_succ[p]):
            if cm.prob[p, k] > 0:
                stack.append((int(cm.succ[p, k]), nc))
    return len(seen), stuck


def estimate_var(
    mdp: Mdp,
    cvar_sol,
    alpha: float,
    n_episodes: int = 20_000,
    rng=None,
    convention: str = "lower",
    margin: bool = False,
    step_limit: int = 10**6,
) -> VarEstimate:
    """Monte Carlo VaR of the CVaR-optimal policy executed without switching.

    ``rng`` is a :class:`~lexcvar.mdp.RandomSource`; each episode draws from
    its own substream.
    """
    # local import: execution depends on this module
    from ..evaluation import empirical_var
    from ..execution import Solutions, run_episodes
    from ..mdp import RandomSource

    if n_episodes < 1:
        raise ValueError("need at least one episode")
    source = rng if rng is not None else RandomSource(0)
    records = run_episodes(
        mdp, "cvar-wc", Solutions(cvar=cvar_sol, alpha=alpha), n_episodes, source, step_limit=step_limit
    )
    costs = np.array([r.total_cost for r in records])
    value = empirical_var(costs, alpha, convention, margin)
    return VarEstimate(value, float(alpha), int(n_episodes), convention, margin)
