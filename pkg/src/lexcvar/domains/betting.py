"""Ten-stage betting game: bet up to 5 each stage, pay ``cap - money`` at the end."""

from __future__ import annotations

from dataclasses import dataclass

from ..mdp import Mdp, make_mdp

GOAL = "goal"


@dataclass(frozen=True)
class BettingParams:
    stages: int = 10
    initial_money: int = 5
    money_cap: int = 100
    bets: tuple = (0, 1, 2, 3, 4, 5)
    p_win: float = 0.7
    p_jackpot: float = 0.05
    p_lose: float = 0.25
    jackpot_multiplier: int = 10

    def check(self) -> None:
        if abs(self.p_win + self.p_jackpot + self.p_lose - 1.0) > 1e-9:
            raise ValueError("betting outcome probabilities must sum to 1")
        if min(self.bets) < 0 or self.initial_money < 0 or self.stages < 1:
            raise ValueError("bets, money and stages must be nonnegative (stages >= 1)")
        if not 0 <= self.initial_money <= self.money_cap:
            raise ValueError("initial money outside [0, cap]")


def build_betting_game(p: BettingParams = BettingParams()) -> Mdp:
    """States are ``(money, stage)``; stage ``p.stages`` holds the single
    ``"stop"`` action paying ``cap - money``."""
    p.check()
    cap = p.money_cap
    start = (p.initial_money, 0)
    transitions, costs = {}, {}
    seen = {start}
    frontier = [start]
    order = [start]
    while frontier:
        nxt = []
        for money, stage in frontier:
            s = (money, stage)
            if stage == p.stages:
                transitions[(s, "stop")] = [(GOAL, 1.0)]
                costs[(s, "stop")] = float(cap - money)
                continue
            for b in p.bets:
                if b > money:
                    continue
                outcomes: dict = {}
                for m, q in (
                    (min(money + b, cap), p.p_win),
                    (min(money + p.jackpot_multiplier * b, cap), p.p_jackpot),
                    (max(money - b, 0), p.p_lose),
                ):
                    if q > 0:
                        key = (m, stage + 1)
                        outcomes[key] = outcomes.get(key, 0.0) + q
                transitions[(s, b)] = sorted(outcomes.items())
                costs[(s, b)] = 0.0
                for sp in outcomes:
                    if sp not in seen:
                        seen.add(sp)
                        nxt.append(sp)
                        order.append(sp)
        frontier = sorted(nxt)
    return make_mdp(order + [GOAL], transitions, costs, [GOAL], start, name="betting")
