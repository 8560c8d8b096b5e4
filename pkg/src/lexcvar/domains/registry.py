"""Builtin domains by name, with their parameter handling and report shift."""

from __future__ import annotations

import dataclasses

from ..mdp import Mdp
from .betting import BettingParams, build_betting_game
from .desk import build_desk_instance
from .dst import build_deep_sea_treasure, load_layout
from .inventory import InventoryParams, build_inventory_control

BUILTIN_DOMAINS = ("desk", "betting", "inventory", "dst")


class DomainError(ValueError):
    pass


def _params(cls, params: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(params) - names)
    if unknown:
        raise DomainError(f"unknown parameter(s) {', '.join(unknown)}; expected among {sorted(names)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return cls(**kw)


def build_domain(name: str, params: dict | None = None) -> tuple[Mdp, float]:
    """Build a builtin domain.  Returns the model and the constant to subtract
    from total costs when reporting."""
    params = dict(params or {})
    if name == "desk":
        if params:
            raise DomainError("the desk instance takes no parameters")
        return build_desk_instance(), 0.0
    if name == "betting":
        return build_betting_game(_params(BettingParams, params)), 0.0
    if name == "inventory":
        p = _params(InventoryParams, params)
        return build_inventory_control(p), p.report_shift
    if name == "dst":
        layout = params.pop("layout", None)
        try:
            cfg = load_layout(layout, **params)
        except TypeError as exc:
            raise DomainError(str(exc)) from exc
        return build_deep_sea_treasure(cfg), 0.0
    raise DomainError(f"unknown domain {name!r}; expected one of {', '.join(BUILTIN_DOMAINS)}")
