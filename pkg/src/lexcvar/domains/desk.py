"""Six-state example with three stationary policies that differ only at s1."""

from __future__ import annotations

from ..mdp import Mdp, make_mdp


def build_desk_instance() -> Mdp:
    transitions = {
        ("s0", "a"): [("s1", 0.85), ("s2", 0.15)],
        ("s1", "c"): [("g", 0.9), ("s4", 0.1)],
        ("s1", "d"): [("g", 0.9), ("s3", 0.1)],
        ("s1", "e"): [("g", 1.0)],
        ("s2", "f"): [("g", 1.0)],
        ("s3", "h"): [("g", 1.0)],
        ("s4", "i"): [("g", 1.0)],
    }
    costs = {
        ("s0", "a"): 0.0,
        ("s1", "c"): 0.0,
        ("s1", "d"): 2.0,
        ("s1", "e"): 8.0,
        ("s2", "f"): 10.0,
        ("s3", "h"): 7.0,
        ("s4", "i"): 20.0,
    }
    return make_mdp(["s0", "s1", "s2", "s3", "s4", "g"], transitions, costs, ["g"], "s0", name="desk")
