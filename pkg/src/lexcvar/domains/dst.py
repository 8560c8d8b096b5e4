"""Deep Sea Treasure gridworld with slippery eight-way moves and a horizon."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..mdp import Mdp, make_mdp

GOAL = "goal"
TIMEOUT = "timeout"
DIRECTIONS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
OFFSETS = {
    "N": (-1, 0), "NE": (-1, 1), "E": (0, 1), "SE": (1, 1),
    "S": (1, 0), "SW": (1, -1), "W": (0, -1), "NW": (-1, -1),
}


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class DstConfig:
    grid: tuple  # rows of glyphs
    treasures: dict = field(default_factory=dict)  # glyph -> reward
    horizon: int = 15
    step_cost: float = 5.0
    terminal_base: float = 500.0
    move_prob: float = 0.6
    slip_prob: float = 0.2

    def check(self) -> None:
        if abs(self.move_prob + 2 * self.slip_prob - 1.0) > 1e-9:
            raise LayoutError("move probability plus both slips must equal 1")
        if self.horizon < 1:
            raise LayoutError("horizon must be at least 1")
        width = len(self.grid[0]) if self.grid else 0
        starts = 0
        for r, row in enumerate(self.grid):
            if len(row) != width:
                raise LayoutError(f"row {r} has width {len(row)}, expected {width}")
            for ch in row:
                if ch == "S":
                    starts += 1
                elif ch.isalpha():
                    if ch not in self.treasures:
                        raise LayoutError(f"treasure {ch!r} has no value")
                elif ch not in ".#":
                    raise LayoutError(f"unknown glyph {ch!r} in row {r}")
        if starts != 1:
            raise LayoutError(f"layout needs exactly one start cell, found {starts}")
        for ch, r in self.treasures.items():
            if not 0 < r <= self.terminal_base:
                raise LayoutError(f"treasure {ch!r} value {r} outside (0, {self.terminal_base}]")

    @property
    def start(self) -> tuple:
        for r, row in enumerate(self.grid):
            if "S" in row:
                return r, row.index("S")
        raise LayoutError("no start cell")


def parse_layout(text: str, **overrides) -> DstConfig:
    """Grid lines, a blank line, then ``<glyph> <reward>`` lines.  Lines
    starting with ``"# "`` are comments."""
    grid, treasures = [], {}
    in_table = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        if line.startswith("# ") or line == "#":
            continue
        if not line:
            if grid:
                in_table = True
            continue
        if in_table:
            parts = line.split()
            if len(parts) != 2:
                raise LayoutError(f"line {lineno}: expected '<glyph> <reward>', got {line!r}")
            try:
                treasures[parts[0]] = float(parts[1])
            except ValueError:
                raise LayoutError(f"line {lineno}: bad reward {parts[1]!r}") from None
        else:
            grid.append(line)
    cfg = DstConfig(tuple(grid), treasures, **overrides)
    cfg.check()
    return cfg


def load_layout(path: str | Path | None = None, **overrides) -> DstConfig:
    if path is None:
        text = resources.files("lexcvar.domains").joinpath("data/dst_default.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_layout(text, **overrides)


def build_deep_sea_treasure(cfg: DstConfig | None = None) -> Mdp:
    """States ``(row, col, t)``; entering a treasure cell leads to
    ``("treasure", glyph)`` which pays ``terminal_base - r``; a move at
    ``t = horizon - 1`` that finds no treasure leads to ``"timeout"`` which
    pays ``terminal_base``."""
    cfg = cfg or load_layout()
    cfg.check()
    grid = cfg.grid
    n_rows, n_cols = len(grid), len(grid[0])

    def land(r, c, d):
        dr, dc = OFFSETS[d]
        nr, nc = r + dr, c + dc
        if 0 <= nr < n_rows and 0 <= nc < n_cols and grid[nr][nc] != "#":
            return nr, nc
        return r, c

    start = (*cfg.start, 0)
    transitions, costs = {}, {}
    seen = {start}
    order = [start]
    frontier = [start]
    treasure_states = set()
    while frontier:
        nxt = []
        for s in frontier:
            r, c, t = s
            for k, d in enumerate(DIRECTIONS):
                outcome: dict = {}
                for dd, q in ((d, cfg.move_prob),
                              (DIRECTIONS[(k - 1) % 8], cfg.slip_prob),
                              (DIRECTIONS[(k + 1) % 8], cfg.slip_prob)):
                    if q <= 0:
                        continue
                    nr, nc = land(r, c, dd)
                    glyph = grid[nr][nc]
                    if glyph.isalpha() and glyph != "S":
                        sp = ("treasure", glyph)
                        treasure_states.add(sp)
                    elif t + 1 >= cfg.horizon:
                        sp = TIMEOUT
                    else:
                        sp = (nr, nc, t + 1)
                    outcome[sp] = outcome.get(sp, 0.0) + q
                transitions[(s, d)] = list(outcome.items())
                costs[(s, d)] = cfg.step_cost
                for sp in outcome:
                    if isinstance(sp, tuple) and sp[0] != "treasure" and sp not in seen:
                        seen.add(sp)
                        nxt.append(sp)
                        order.append(sp)
        frontier = sorted(nxt)
    for sp in sorted(treasure_states):
        transitions[(sp, "collect")] = [(GOAL, 1.0)]
        costs[(sp, "collect")] = cfg.terminal_base - cfg.treasures[sp[1]]
    transitions[(TIMEOUT, "surface")] = [(GOAL, 1.0)]
    costs[(TIMEOUT, "surface")] = cfg.terminal_base
    states = order + sorted(treasure_states) + [TIMEOUT, GOAL]
    return make_mdp(states, transitions, costs, [GOAL], start, name="dst")
