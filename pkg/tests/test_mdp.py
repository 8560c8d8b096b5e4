import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lexcvar.domains import build_betting_game, build_desk_instance
from lexcvar.mdp import (
    History,
    ModelError,
    RandomSource,
    cumulative_cost,
    enumerate_outcome_distribution,
    make_mdp,
    sample_transition,
    stationary_policies,
    validate_mdp,
)


def tiny(row_total=1.0, reachable=True):
    succ = [("g", 0.5), ("x", row_total - 0.5)]
    trans = {("s", "a"): succ, ("x", "b"): [("x" if not reachable else "g", 1.0)]}
    costs = {("s", "a"): 1.0, ("x", "b"): 2.0}
    return make_mdp(["s", "x", "g"], trans, costs, ["g"], "s")


def test_betting_game_validates_clean():
    assert validate_mdp(build_betting_game()).ok


def test_row_sum_violation_listed():
    rep = validate_mdp(tiny(row_total=0.99))
    assert not rep.ok
    assert any("row sum" in m for m in rep.messages())


def test_unreachable_goal_flagged():
    rep = validate_mdp(tiny(reachable=False))
    assert "x" in rep.unreachable_goal
    assert any("goal unreachable" in m for m in rep.messages())


def test_negative_probability_rejected():
    m = make_mdp(["s", "g"], {("s", "a"): [("g", 1.2), ("s", -0.2)]}, {("s", "a"): 0.0}, ["g"], "s")
    msgs = validate_mdp(m).messages()
    assert any("negative probability" in x for x in msgs)
    assert any("outside (0, 1]" in x for x in msgs)


def test_goal_must_be_absorbing_and_free():
    m = make_mdp(
        ["s", "g"],
        {("s", "a"): [("g", 1.0)], ("g", "stay"): [("s", 1.0)]},
        {("s", "a"): 0.0, ("g", "stay"): 3.0},
        ["g"],
        "s",
    )
    msgs = validate_mdp(m).messages()
    assert any("not absorbing" in x for x in msgs)
    assert any("nonzero cost" in x for x in msgs)


def test_cumulative_cost_desk_paths():
    m = build_desk_instance()
    assert cumulative_cost(m, History.from_path(["g"])) == 0
    assert cumulative_cost(m, History.from_path(["s0", "a", "s2", "f", "g"])) == 10
    assert cumulative_cost(m, History.from_path(["s0", "a", "s1", "d", "s3", "h", "g"])) == 9


def test_cumulative_cost_rejects_impossible_step():
    m = build_desk_instance()
    with pytest.raises(ModelError):
        cumulative_cost(m, History.from_path(["s0", "a", "s3", "h", "g"]))


def test_sample_transition_deterministic_row_and_goal():
    m = build_desk_instance()
    rng = np.random.default_rng(0)
    assert all(sample_transition(m, "s2", "f", rng) == "g" for _ in range(20))
    assert sample_transition(m, "g", None, rng) == "g"


def test_sample_transition_frequency():
    m = build_desk_instance()
    rng = RandomSource(42).generator()
    draws = [sample_transition(m, "s0", "a", rng) for _ in range(100_000)]
    assert abs(draws.count("s2") / len(draws) - 0.15) <= 0.01
    rng2 = RandomSource(42).generator()
    assert draws[:50] == [sample_transition(m, "s0", "a", rng2) for _ in range(50)]


@given(st.integers(0, 2**32 - 1), st.integers(0, 1000))
@settings(max_examples=30)
def test_random_source_order_independent(seed, index):
    src = RandomSource(seed, 1)
    forward = [src.episode(i).random() for i in range(index, index + 3)]
    backward = [src.episode(i).random() for i in reversed(range(index, index + 3))][::-1]
    assert forward == backward


@pytest.mark.parametrize(
    "action, expected",
    [
        ("e", {8: 0.85, 10: 0.15}),
        ("d", {2: 0.765, 9: 0.085, 10: 0.15}),
        ("c", {0: 0.765, 20: 0.085, 10: 0.15}),
    ],
)
def test_enumerated_desk_distributions(action, expected):
    dist = enumerate_outcome_distribution(build_desk_instance(), {"s1": action}, horizon=10)
    got = dist.as_dict()
    assert set(got) == set(expected)
    for v, p in expected.items():
        assert got[v] == pytest.approx(p, abs=1e-12)
    assert sum(dist.probs) == pytest.approx(1.0, abs=1e-12)


def test_enumeration_residual_mass_is_an_error():
    with pytest.raises(ModelError):
        enumerate_outcome_distribution(build_desk_instance(), {"s1": "d"}, horizon=1)


def test_enumeration_limit():
    with pytest.raises(ModelError):
        enumerate_outcome_distribution(build_desk_instance(), {"s1": "d"}, horizon=10, limit=3)


def test_desk_has_three_stationary_policies_differing_at_s1():
    pols = list(stationary_policies(build_desk_instance()))
    assert len(pols) == 3
    assert all(set(p) == {"s1"} for p in pols)


def test_compiled_reduce_min_first_index_tie_break():
    m = build_desk_instance()
    cm = m.compiled
    q = np.zeros(cm.n_pairs)
    rows = cm.pairs_of_state(cm.index["s1"])
    q[rows.start : rows.stop] = [5.0 + 1e-12, 5.0, 6.0]
    vmin, first = cm.reduce_min(q)
    i = cm.index["s1"]
    assert first[list(cm.decision).index(i)] == rows.start
