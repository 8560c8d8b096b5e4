"""CVaR optimisation as a minimax game over (state, budget y).

The value table stores V(s, y) on a y-grid.  Between knots the map
t -> t * V(s, t) is linearly interpolated; because that map is concave the
adversary's per-step problem

    max  sum_j p_j * I_j(t_j)   s.t.  sum_j p_j * t_j = y,  0 <= t_j <= 1

is a separable concave piecewise-linear program.  It is solved exactly by
filling the budget with interpolation segments in decreasing slope order.
Sorting all segments of a (state, action) pair once gives the optimum as a
piecewise-linear function of y, which is what the sweeps evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mdp import Mdp
from .ev import ConvergenceError
from .worst import WorstCaseSolution

XI_TOL = 1e-6
_CHUNK = 4096


@dataclass(frozen=True)
class YGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts[0] != 0.0 or pts[-1] != 1.0 or np.any(np.diff(pts) <= 0):
            raise ValueError("y-grid must ascend strictly from 0 to 1")

    def __len__(self) -> int:
        return len(self.points)


def build_ygrid(n_points: int = 30, y_min: float = 1e-3) -> YGrid:
    """``0`` followed by ``n_points - 1`` log-spaced points from ``y_min`` to 1."""
    if n_points < 3:
        raise ValueError("a y-grid needs at least 3 points")
    if not 0 < y_min < 1:
        raise ValueError(f"y_min must lie in (0, 1), got {y_min}")
    pts = np.concatenate([[0.0], np.geomspace(y_min, 1.0, n_points - 1)])
    pts[-1] = 1.0
    return YGrid(pts)


@dataclass(frozen=True)
class PerturbationResponse:
    successors: tuple
    probs: np.ndarray
    xi: np.ndarray
    budgets: np.ndarray  # y * xi, the successor's residual budget

    def as_dict(self) -> dict:
        return dict(zip(self.successors, self.xi))

    def violation(self, y: float) -> float:
        """Largest breach of the perturbation constraints (0 when feasible)."""
        mass = abs(float(np.dot(self.xi, self.probs)) - 1.0)
        low = max(0.0, -float(self.xi.min()))
        high = max(0.0, float((self.xi - 1.0 / y).max())) if y > 0 else 0.0
        return max(mass, low, high)


class _Segments:
    """Sorted interpolation segments for a batch of pairs.

    ``bc``/``gc`` are cumulative budget and gain with a leading zero column;
    ``slope`` is sorted descending; ``owner`` maps a sorted segment back to
    its successor slot and ``width`` gives its length in t units.
    """

    def __init__(self, table_i: np.ndarray, grid: np.ndarray, succ: np.ndarray, prob: np.ndarray, n_succ: np.ndarray):
        n_pairs, width_k = succ.shape
        n_seg = len(grid) - 1
        dy = np.diff(grid)
        di = np.diff(table_i, axis=1)[succ]  # (P, K, n_seg)
        slope = di / dy
        real = np.arange(width_k)[None, :] < n_succ[:, None]
        slope = np.where(real[:, :, None], slope, -np.inf)
        budget = prob[:, :, None] * dy
        gain = prob[:, :, None] * di
        slope = slope.reshape(n_pairs, -1)
        order = np.argsort(-slope, axis=1, kind="stable")
        take = lambda a: np.take_along_axis(a.reshape(n_pairs, -1), order, axis=1)
        self.slope = take(slope)
        zeros = np.zeros((n_pairs, 1))
        self.bc = np.hstack([zeros, np.cumsum(take(budget), axis=1)])
        self.gc = np.hstack([zeros, np.cumsum(take(np.where(real[:, :, None], gain, 0.0)), axis=1)])
        self.owner = order // n_seg
        self.width = dy[order % n_seg]
        self.n_real = n_succ * n_seg

    def positions(self, ys: np.ndarray) -> np.ndarray:
        """Index of the segment being filled for each row and each budget in
        ``ys`` (shape (P, len(ys)))."""
        n_pairs, n_cols = self.slope.shape
        # rows live in [2r, 2r + 1], so one flat search serves every row
        offset = 2.0 * np.arange(n_pairs)[:, None]
        flat = (self.bc[:, 1:] + offset).ravel()
        targets = (np.asarray(ys)[None, :] + offset).ravel()
        pos = np.searchsorted(flat, targets, side="left").reshape(n_pairs, -1)
        pos -= (np.arange(n_pairs) * n_cols)[:, None]
        return np.minimum(pos, (self.n_real - 1)[:, None])

    def values(self, ys: np.ndarray) -> np.ndarray:
        """Optimal ``sum_j p_j I_j(t_j)`` for each row and budget."""
        pos = self.positions(ys)
        g = np.take_along_axis(self.gc, pos, axis=1)
        b = np.take_along_axis(self.bc, pos, axis=1)
        s = np.take_along_axis(self.slope, pos, axis=1)
        return g + (np.asarray(ys)[None, :] - b) * s

    def _pos_row(self, row: int, y: float) -> int:
        pos = int(np.searchsorted(self.bc[row, 1:], y, side="left"))
        return min(pos, int(self.n_real[row]) - 1)


@dataclass(eq=False)
class CvarSolution:
    mdp: Mdp
    grid: YGrid
    values: np.ndarray  # (n_states, n_grid); column 0 is the worst-case value
    pair: np.ndarray  # greedy pair per (state, grid point); -1 at goals
    worst: WorstCaseSolution
    sweeps: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def table_i(self) -> np.ndarray:
        if "I" not in self._cache:
            self._cache["I"] = self.values * self.grid.points[None, :]
        return self._cache["I"]

    def value(self, s, y_index: int) -> float:
        return float(self.values[self.mdp.compiled.index[s], y_index])

    def state_segments(self, i: int) -> _Segments:
        """Sorted segments for every action of state index ``i`` (cached)."""
        segs = self._cache.get(("seg", i))
        if segs is None:
            cm = self.mdp.compiled
            rows = np.asarray(cm.pairs_of_state(i))
            segs = _Segments(self.table_i, self.grid.points, cm.succ[rows], cm.prob[rows], cm.n_succ[rows])
            self._cache[("seg", i)] = segs
        return segs


def cvar_value_iteration(
    mdp: Mdp,
    grid: YGrid,
    worst: WorstCaseSolution,
    epsilon: float = 1e-6,
    max_sweeps: int = 10_000,
) -> CvarSolution:
    """Minimax value iteration over the budget-augmented game.

    The y = 0 column is pinned to the worst-case values; every other column is
    swept synchronously until the sup-norm change falls below ``epsilon``.
    """
    cm = mdp.compiled
    ys = grid.points
    n_y = len(ys)
    values = np.zeros((cm.n_states, n_y))
    values[:, 0] = worst.v_worst
    pair = np.full((cm.n_states, n_y), -1, dtype=np.intp)
    pair[:, 0] = worst.pair
    for sweep in range(1, max_sweeps + 1):
        q = _q_table(cm, values * ys[None, :], ys)
        vmin, first = cm.reduce_min(q)
        new = values.copy()
        new[cm.decision, 1:] = vmin
        new[cm.goal_mask, 1:] = 0.0
        delta = np.max(np.abs(new - values)) if values.size else 0.0
        values = new
        if delta < epsilon:
            break
    else:
        raise ConvergenceError(f"CVaR value iteration did not converge in {max_sweeps} sweeps")
    q = _q_table(cm, values * ys[None, :], ys)
    _, first = cm.reduce_min(q)
    pair[cm.decision, 1:] = first
    return CvarSolution(mdp, grid, values, pair, worst, sweep)


def _q_table(cm, table_i: np.ndarray, ys: np.ndarray) -> np.ndarray:
    pos_y = ys[1:]
    out = np.empty((cm.n_pairs, len(pos_y)))
    for start in range(0, cm.n_pairs, _CHUNK):
        sl = slice(start, start + _CHUNK)
        segs = _Segments(table_i, ys, cm.succ[sl], cm.prob[sl], cm.n_succ[sl])
        out[sl] = cm.pair_cost[sl, None] + segs.values(pos_y) / pos_y[None, :]
    return out


def _check_y(y: float) -> None:
    if not 0.0 <= y <= 1.0 + 1e-12:
        raise ValueError(f"y must lie in [0, 1], got {y}")


def query_value(sol: CvarSolution, s, y: float) -> float:
    """Interpolated V(s, y): the interpolated y*V divided by y, the worst-case
    value at y = 0, and the stored value at a knot."""
    _check_y(y)
    i = sol.mdp.compiled.index[s]
    if y == 0.0:
        return float(sol.values[i, 0])
    ys = sol.grid.points
    k = int(np.searchsorted(ys, y))
    if k < len(ys) and ys[k] == y:
        return float(sol.values[i, k])
    return float(np.interp(y, ys, sol.table_i[i]) / y)


def inner_adversary_max(sol: CvarSolution, s, y: float, a) -> tuple[float, PerturbationResponse]:
    """Adversary's best perturbation after action ``a`` at ``(s, y)``.

    Returns the perturbed expected continuation value and the multipliers.
    """
    _check_y(y)
    if y <= 0.0:
        raise ValueError("the adversary problem is defined for y > 0; y = 0 is the worst-case row")
    cm = sol.mdp.compiled
    i = cm.index[s]
    p = cm.pair_of[(i, a)]
    row = p - cm.state_first_pair[i]
    return _response(sol, i, row, min(y, 1.0))


def _response(sol: CvarSolution, i: int, row: int, y: float) -> tuple[float, PerturbationResponse]:
    cm = sol.mdp.compiled
    p = cm.state_first_pair[i] + row
    n = int(cm.n_succ[p])
    prob = cm.prob[p, :n]
    segs = sol.state_segments(i)
    pos = segs._pos_row(row, y)
    value = segs.gc[row, pos] + (y - segs.bc[row, pos]) * segs.slope[row, pos]
    t = np.zeros(n)
    np.add.at(t, segs.owner[row, :pos], segs.width[row, :pos])
    j = segs.owner[row, pos]
    t[j] += (y - segs.bc[row, pos]) / prob[j]
    t = np.clip(t, 0.0, 1.0)
    successors = tuple(cm.states[k] for k in cm.succ[p, :n])
    return float(value / y), PerturbationResponse(successors, prob, t / y, t)


def inner_adversary_lp(sol: CvarSolution, s, y: float, a) -> tuple[float, np.ndarray]:
    """Same problem as :func:`inner_adversary_max`, posed as a segment LP and
    handed to the HiGHS dual simplex.  Returns ``(value, xi)``."""
    from scipy.optimize import linprog

    cm = sol.mdp.compiled
    i = cm.index[s]
    p = cm.pair_of[(i, a)]
    n = int(cm.n_succ[p])
    prob = cm.prob[p, :n]
    ys = sol.grid.points
    dy = np.diff(ys)
    table = sol.table_i[cm.succ[p, :n]]
    slope = np.diff(table, axis=1) / dy  # (n, n_seg)
    c = -(prob[:, None] * slope).ravel()
    a_eq = np.repeat(prob, len(dy))[None, :]
    bounds = [(0.0, w) for _ in range(n) for w in dy]
    res = linprog(c, A_eq=a_eq, b_eq=[y], bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise AssertionError(f"segment LP failed: {res.message}")
    t = res.x.reshape(n, -1).sum(axis=1)
    return float(-res.fun / y), t / y


def cvar_greedy_action(sol: CvarSolution, s, y: float):
    """Action minimising the one-step backup at ``(s, y)``; ties go to the
    lowest action index.  At y = 0 this is the worst-case policy."""
    _check_y(y)
    cm = sol.mdp.compiled
    i = cm.index[s]
    if cm.goal_mask[i]:
        return None
    return cm.pair_action[greedy_pair(sol, i, y)]


def greedy_pair(sol: CvarSolution, i: int, y: float) -> int:
    cm = sol.mdp.compiled
    if y <= 0.0:
        return int(sol.worst.pair[i])
    y = min(y, 1.0)
    segs = sol.state_segments(i)
    first = cm.state_first_pair[i]
    n = cm.state_n_pairs[i]
    pos = np.minimum((segs.bc[:, 1:] < y).sum(axis=1), segs.n_real - 1)
    r = np.arange(n)
    val = segs.gc[r, pos] + (y - segs.bc[r, pos]) * segs.slope[r, pos]
    q = cm.pair_cost[first : first + n] + val / y
    best = q.min()
    return int(first + np.flatnonzero(q <= best + 1e-9)[0])
