"""Ten-stage inventory control with random-walk demand revealed after ordering."""

from __future__ import annotations

from dataclasses import dataclass

from ..mdp import Mdp, make_mdp

GOAL = "goal"


@dataclass(frozen=True)
class InventoryParams:
    stages: int = 10
    capacity: int = 20
    purchase_price: float = 1.0
    revenue: float = 3.0
    holding_price: float = 1.0
    initial_demand: int = 10
    initial_stock: int = 0
    demand_step: int = 5
    # raw episode cost minus this lands on the scale where 400 means zero net profit
    report_shift: float = 200.0

    def check(self) -> None:
        if self.capacity < 1 or self.stages < 1:
            raise ValueError("capacity and stages must be at least 1")
        values = (self.purchase_price, self.revenue, self.holding_price, self.initial_demand,
                  self.initial_stock, self.demand_step)
        if min(values) < 0:
            raise ValueError("inventory parameters must be nonnegative")
        if self.initial_demand > self.capacity or self.initial_stock > self.capacity:
            raise ValueError("initial demand and stock must not exceed capacity")

    @property
    def stage_offset(self) -> float:
        """Best single-stage profit; per-stage cost is this minus the profit."""
        return self.capacity * self.revenue


def stage_profit(p: InventoryParams, stock: int, order: int, demand: int) -> float:
    return (
        min(demand, stock + order) * p.revenue
        - order * p.purchase_price
        - max(stock + order - demand, 0) * p.holding_price
    )


def build_inventory_control(p: InventoryParams = InventoryParams()) -> Mdp:
    """Ordering states ``("order", stage, stock, last_demand)`` pay the
    purchase price; the stage's demand ``clamp(last + delta, 0, N)`` (delta
    uniform on ``-step..step``) is then drawn into a selling state
    ``("sell", stage, stock_after_order, demand)`` whose single action pays
    the rest of ``K - profit`` and moves to the next stage (or the goal).
    """
    p.check()
    n_cap = p.capacity
    start = ("order", 1, p.initial_stock, p.initial_demand)
    deltas = range(-p.demand_step, p.demand_step + 1)
    q = 1.0 / len(deltas)
    transitions, costs = {}, {}
    seen = {start}
    order_ = [start]
    frontier = [start]

    def visit(sp, nxt):
        if sp not in seen:
            seen.add(sp)
            nxt.append(sp)
            order_.append(sp)

    while frontier:
        nxt = []
        for s in frontier:
            if s[0] == "order":
                _, stage, stock, last = s
                demand_dist: dict = {}
                for dd in deltas:
                    d = min(max(last + dd, 0), n_cap)
                    demand_dist[d] = demand_dist.get(d, 0.0) + q
                for a in range(0, n_cap - stock + 1):
                    row = [(("sell", stage, stock + a, d), pr) for d, pr in sorted(demand_dist.items())]
                    transitions[(s, a)] = row
                    costs[(s, a)] = a * p.purchase_price
                    for sp, _ in row:
                        visit(sp, nxt)
            else:
                _, stage, level, d = s
                # K - profit minus the purchase already charged
                costs[(s, "sell")] = p.stage_offset - (
                    min(d, level) * p.revenue - max(level - d, 0) * p.holding_price
                )
                sp = GOAL if stage == p.stages else ("order", stage + 1, level - min(d, level), d)
                transitions[(s, "sell")] = [(sp, 1.0)]
                if sp != GOAL:
                    visit(sp, nxt)
        frontier = sorted(nxt)
    return make_mdp(order_ + [GOAL], transitions, costs, [GOAL], start, name="inventory")
