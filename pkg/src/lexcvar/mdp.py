"""Stochastic shortest path MDP model, histories, sampling and brute-force oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .risk import DiscreteDistribution

State = Hashable
Action = Hashable

ROW_SUM_TOL = 1e-9
SUPPORT_TOL = 1e-12


class ModelError(ValueError):
    """Raised when an MDP, history or policy does not fit the model."""


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite SSP MDP.

    ``transitions`` and ``costs`` are keyed by ``(state, action)``.  Goal
    states need no entries; when present they must be zero-cost self-loops.
    """

    states: tuple
    actions: Mapping[State, tuple]
    transitions: Mapping[tuple, tuple]
    costs: Mapping[tuple, float]
    goals: frozenset
    initial: State
    name: str = "mdp"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.states == other.states
            and self.initial == other.initial
            and self.goals == other.goals
            and {s: tuple(a) for s, a in self.actions.items()}
            == {s: tuple(a) for s, a in other.actions.items()}
            and dict(self.transitions) == dict(other.transitions)
            and dict(self.costs) == dict(other.costs)
        )

    __hash__ = object.__hash__

    def is_goal(self, s: State) -> bool:
        return s in self.goals

    def successors(self, s: State, a: Action) -> tuple:
        try:
            return self.transitions[(s, a)]
        except KeyError:
            raise ModelError(f"no transitions for state {s!r}, action {a!r}") from None

    def cost(self, s: State, a: Action) -> float:
        try:
            return self.costs[(s, a)]
        except KeyError:
            raise ModelError(f"no cost for state {s!r}, action {a!r}") from None

    @cached_property
    def compiled(self) -> "CompiledMdp":
        return CompiledMdp(self)


def make_mdp(
    states: Iterable[State],
    transitions: Mapping[tuple, Sequence[tuple]],
    costs: Mapping[tuple, float],
    goals: Iterable[State],
    initial: State,
    actions: Mapping[State, Sequence[Action]] | None = None,
    name: str = "mdp",
) -> Mdp:
    """Build an :class:`Mdp`, deriving per-state action lists from the
    transition keys (in insertion order) when ``actions`` is not given."""
    states = tuple(states)
    goals = frozenset(goals)
    if actions is None:
        derived: dict = {s: [] for s in states}
        for s, a in transitions:
            if s in goals:
                continue
            derived.setdefault(s, []).append(a)
        actions = derived
    acts = {s: tuple(actions.get(s, ())) for s in states}
    trans = {k: tuple((sp, float(p)) for sp, p in v) for k, v in transitions.items()}
    cost = {k: float(v) for k, v in costs.items()}
    return Mdp(states, acts, trans, cost, goals, initial, name)


class CompiledMdp:
    """Array view of an :class:`Mdp` used by the vectorised solvers.

    Pairs (state, action) of non-goal states are laid out contiguously by
    state index; ``ptr[i]:ptr[i+1]`` spans the pairs of ``decision[i]``.
    Successor rows are padded to a common width with probability 0.
    """

    def __init__(self, mdp: Mdp):
        self.mdp = mdp
        self.states = mdp.states
        self.index = {s: i for i, s in enumerate(mdp.states)}
        self.n_states = len(mdp.states)
        self.goal_mask = np.zeros(self.n_states, dtype=bool)
        for g in mdp.goals:
            self.goal_mask[self.index[g]] = True
        self.initial = self.index[mdp.initial]

        decision, ptr, pair_state, pair_action, costs = [], [0], [], [], []
        rows = []
        for i, s in enumerate(mdp.states):
            if self.goal_mask[i]:
                continue
            decision.append(i)
            for a in mdp.actions[s]:
                pair_state.append(i)
                pair_action.append(a)
                costs.append(mdp.costs[(s, a)])
                rows.append(mdp.transitions[(s, a)])
            ptr.append(len(pair_state))
        self.decision = np.asarray(decision, dtype=np.intp)
        self.ptr = np.asarray(ptr, dtype=np.intp)
        self.pair_state = np.asarray(pair_state, dtype=np.intp)
        self.pair_action = pair_action
        self.pair_cost = np.asarray(costs, dtype=float)
        width = max((len(r) for r in rows), default=1)
        n_pairs = len(rows)
        self.succ = np.zeros((n_pairs, width), dtype=np.intp)
        self.prob = np.zeros((n_pairs, width), dtype=float)
        self.n_succ = np.zeros(n_pairs, dtype=np.intp)
        for p, row in enumerate(rows):
            self.n_succ[p] = len(row)
            for k, (sp, pr) in enumerate(row):
                self.succ[p, k] = self.index[sp]
                self.prob[p, k] = pr
        # pair index of (state index, action)
        self.pair_of = {}
        for p, (si, a) in enumerate(zip(pair_state, pair_action)):
            self.pair_of[(si, a)] = p
        self.state_first_pair = np.full(self.n_states, -1, dtype=np.intp)
        self.state_n_pairs = np.zeros(self.n_states, dtype=np.intp)
        for k, i in enumerate(decision):
            self.state_first_pair[i] = ptr[k]
            self.state_n_pairs[i] = ptr[k + 1] - ptr[k]
        self.cum_prob = np.cumsum(self.prob, axis=1)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_cost)

    def pairs_of_state(self, i: int) -> range:
        first = self.state_first_pair[i]
        return range(first, first + self.state_n_pairs[i])

    def reduce_min(self, q: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Per decision state: minimum of ``q`` over its pairs and the first
        pair (lowest action index) within ``tol`` of that minimum.

        ``q`` has pairs on axis 0; extra axes are reduced independently.
        """
        starts = self.ptr[:-1]
        vmin = np.minimum.reduceat(q, starts, axis=0)
        owner = np.repeat(np.arange(len(starts)), np.diff(self.ptr))
        near = q <= vmin[owner] + tol
        with np.errstate(invalid="ignore"):
            near |= np.isinf(q) & np.isinf(vmin[owner])
        idx = np.arange(len(q)).reshape((-1,) + (1,) * (q.ndim - 1))
        cand = np.where(near, idx, np.iinfo(np.intp).max)
        first = np.minimum.reduceat(cand, starts, axis=0)
        return vmin, first


@dataclass(frozen=True)
class History:
    """Alternating state/action sequence ``s0 a0 s1 a1 ... sn``."""

    steps: tuple  # ((state, action), ...)
    final: State

    @classmethod
    def from_path(cls, path: Sequence) -> "History":
        if len(path) % 2 != 1:
            raise ModelError("a history path must alternate states and actions and end with a state")
        steps = tuple((path[i], path[i + 1]) for i in range(0, len(path) - 1, 2))
        return cls(steps, path[-1])


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()
    unreachable_goal: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations and not self.unreachable_goal

    def messages(self) -> list[str]:
        out = list(self.violations)
        out += [f"goal unreachable from state {s!r}" for s in self.unreachable_goal]
        return out


def validate_mdp(mdp: Mdp) -> ValidationReport:
    """Check the model invariants and flag states that cannot reach a goal."""
    v: list[str] = []
    known = set(mdp.states)
    if len(known) != len(mdp.states):
        v.append("duplicate state identifiers")
    if mdp.initial not in known:
        v.append(f"initial state {mdp.initial!r} unknown")
    for g in mdp.goals:
        if g not in known:
            v.append(f"goal {g!r} unknown")
    for (s, a), row in mdp.transitions.items():
        if s not in known:
            v.append(f"transition from unknown state {s!r}")
            continue
        total = 0.0
        for sp, p in row:
            if sp not in known:
                v.append(f"({s!r}, {a!r}): unknown successor {sp!r}")
            if p < 0:
                v.append(f"({s!r}, {a!r}): negative probability {p}")
            elif not 0 < p <= 1:
                v.append(f"({s!r}, {a!r}): probability {p} outside (0, 1]")
            total += p
        if abs(total - 1.0) > ROW_SUM_TOL:
            v.append(f"({s!r}, {a!r}): row sum {total:.12g} != 1")
        c = mdp.costs.get((s, a))
        if c is None:
            v.append(f"({s!r}, {a!r}): missing cost")
        elif c < 0:
            v.append(f"({s!r}, {a!r}): negative cost {c}")
        if s in mdp.goals:
            if any(sp != s for sp, _ in row):
                v.append(f"goal {s!r} is not absorbing")
            if c:
                v.append(f"goal {s!r} has nonzero cost {c}")
    for s in mdp.states:
        if s in mdp.goals:
            continue
        acts = mdp.actions.get(s, ())
        if not acts:
            v.append(f"non-goal state {s!r} has no actions")
        for a in acts:
            if (s, a) not in mdp.transitions:
                v.append(f"({s!r}, {a!r}): action listed without transitions")

    # backward reachability from goals over the support graph
    preds: dict = {}
    for (s, a), row in mdp.transitions.items():
        for sp, p in row:
            if p > 0:
                preds.setdefault(sp, set()).add(s)
    reach = set(mdp.goals)
    stack = list(mdp.goals)
    while stack:
        for q in preds.get(stack.pop(), ()):
            if q not in reach:
                reach.add(q)
                stack.append(q)
    unreachable = tuple(s for s in mdp.states if s not in reach)
    return ValidationReport(tuple(v), unreachable)


def cumulative_cost(mdp: Mdp, h: History) -> float:
    total = 0.0
    nxt = [s for s, _ in h.steps[1:]] + [h.final]
    for (s, a), sp in zip(h.steps, nxt):
        row = mdp.successors(s, a)
        if not any(t == sp and p > 0 for t, p in row):
            raise ModelError(f"history step {s!r} -{a!r}-> {sp!r} has zero probability")
        total += mdp.cost(s, a)
    return total


class RandomSource:
    """Counter-based random streams: episode ``i`` of stream ``tag`` always
    gets the same generator, whatever order episodes run in."""

    def __init__(self, seed: int, tag: int = 0):
        self.seed = int(seed)
        self.tag = int(tag)

    def child(self, tag: int) -> "RandomSource":
        return RandomSource(self.seed, tag)

    def episode(self, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.tag, int(index)]))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.tag, 2**32 - 1]))


def sample_transition(mdp: Mdp, s: State, a: Action, rng: np.random.Generator) -> State:
    if s in mdp.goals and (s, a) not in mdp.transitions:
        return s  # absorbing
    row = mdp.successors(s, a)
    if len(row) == 1:
        return row[0][0]
    u = rng.random()
    acc = 0.0
    for sp, p in row:
        acc += p
        if u < acc:
            return sp
    return row[-1][0]


def enumerate_outcome_distribution(
    mdp: Mdp,
    policy: Mapping[State, Action],
    horizon: int,
    limit: int = 10**6,
) -> DiscreteDistribution:
    """Exact total-cost distribution of a stationary policy by walking every
    history up to ``horizon`` steps.  States missing from ``policy`` must have
    a single action."""

    def act(s):
        if s in policy:
            return policy[s]
        acts = mdp.actions[s]
        if len(acts) != 1:
            raise ModelError(f"policy leaves state {s!r} with {len(acts)} actions unspecified")
        return acts[0]

    atoms: dict[float, float] = {}
    frontier = [(mdp.initial, 0.0, 1.0)]
    visited = 0
    residual = 0.0
    for _ in range(horizon + 1):
        nxt = []
        for s, c, p in frontier:
            visited += 1
            if visited > limit:
                raise ModelError(f"enumeration limit of {limit} histories exceeded")
            if s in mdp.goals:
                atoms[c] = atoms.get(c, 0.0) + p
                continue
            a = act(s)
            cost = c + mdp.cost(s, a)
            for sp, q in mdp.successors(s, a):
                if q > 0:
                    nxt.append((sp, cost, p * q))
        frontier = nxt
    residual = sum(p for _, _, p in frontier)
    if residual > 1e-12:
        raise ModelError(f"probability mass {residual:.3g} has not reached a goal within {horizon} steps")
    return DiscreteDistribution.from_pairs(atoms.items())


def stationary_policies(mdp: Mdp) -> Iterable[dict]:
    """All deterministic stationary policies over states with a choice."""
    choice = [s for s in mdp.states if s not in mdp.goals and len(mdp.actions[s]) > 1]
    for combo in itertools.product(*(mdp.actions[s] for s in choice)):
        yield dict(zip(choice, combo))
