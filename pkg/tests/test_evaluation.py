import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lexcvar.evaluation import (
    HISTOGRAM_COLUMNS,
    SUMMARY_COLUMNS,
    bootstrap_cvar_se,
    empirical_cvar,
    empirical_var,
    evaluate,
    histogram,
    mark_best,
    read_summary_csv,
    summarize,
    write_histogram_csv,
    write_summary_csv,
)

samples = st.lists(st.integers(0, 100).map(float), min_size=1, max_size=200)
alphas = st.floats(0.01, 1.0)


def test_cvar_of_one_to_ten():
    var, cvar = empirical_cvar(np.arange(1, 11), 0.2)
    assert cvar == 9.5
    assert var == 8.0
    assert empirical_var(np.arange(1, 11), 0.2, "upper") == 9.0
    assert empirical_var(np.arange(1, 11), 0.2, margin=True) == 7.0


@given(st.floats(-50, 50), st.integers(1, 50), alphas)
def test_constant_sample(v, n, alpha):
    var, cvar = empirical_cvar([v] * n, alpha)
    assert var == v
    assert cvar == pytest.approx(v, rel=1e-12, abs=1e-12)


@given(samples)
def test_alpha_one_is_mean_and_min(xs):
    var, cvar = empirical_cvar(xs, 1.0)
    assert cvar == pytest.approx(np.mean(xs))
    assert var == min(xs)


@given(samples, alphas)
def test_cvar_tail_oracle(xs, alpha):
    # independent estimator: sort descending and average the head
    k = max(1, math.ceil(alpha * len(xs) - 1e-9))
    head = sorted(xs, reverse=True)[:k]
    var, cvar = empirical_cvar(xs, alpha)
    assert cvar == pytest.approx(sum(head) / k)
    assert cvar >= np.mean(xs) - 1e-9
    assert var <= cvar + 1e-9


@given(samples, alphas)
def test_lower_var_is_smallest_quantile(xs, alpha):
    var = empirical_var(xs, alpha)
    arr = np.array(xs)
    assert np.mean(arr <= var) >= 1 - alpha - 1e-9
    below = arr[arr < var]
    if below.size:
        assert np.mean(arr <= below.max()) < 1 - alpha + 1e-9


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        empirical_cvar([], 0.1)
    with pytest.raises(ValueError):
        empirical_var([1.0], 0.0)
    with pytest.raises(ValueError):
        empirical_var([1.0], 0.5, convention="middle")
    with pytest.raises(ValueError):
        summarize("x", [], [0.1])


def test_bootstrap_se_is_seeded_and_sensible():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=2000)
    a = bootstrap_cvar_se(xs, 0.2, 300, np.random.default_rng(1))
    b = bootstrap_cvar_se(xs, 0.2, 300, np.random.default_rng(1))
    assert a == b and 0.01 < a < 0.1
    assert bootstrap_cvar_se([3.0] * 100, 0.2, 100, np.random.default_rng(1)) == 0.0


@given(samples, st.integers(1, 120))
@settings(max_examples=50)
def test_histogram_conserves_counts(xs, bins):
    edges, counts = histogram(xs, bins)
    assert counts.sum() == len(xs)
    assert len(edges) == bins + 1


def test_histogram_bin_width():
    edges, counts = histogram([0.0, 4.0, 10.0], bin_width=5.0)
    assert list(edges) == [0.0, 5.0, 10.0]
    assert counts.sum() == 3


def test_evaluate_desk_and_csv(desk, tmp_path):
    with pytest.raises(ValueError):
        evaluate(desk.mdp, "ev", desk.solutions(), 0, [0.1], seed=0)
    summ = evaluate(desk.mdp, "cvar-ev", desk.solutions(0.1), 3000, [0.1, 0.5], seed=3, n_resamples=200)
    assert summ.counts.sum() == 3000
    assert summ.stats(0.1).cvar >= summ.mean
    write_summary_csv([summ], tmp_path / "s.csv")
    write_histogram_csv(summ, tmp_path / "h.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == ",".join(HISTOGRAM_COLUMNS)
    rows = read_summary_csv(tmp_path / "s.csv")
    assert [r["alpha"] for r in rows] == [0.1, 0.5]
    assert rows[0]["n"] == 3000


def test_evaluation_reruns_are_byte_identical(dst, tmp_path):
    for run in ("a", "b"):
        summ = evaluate(dst.mdp, "cvar-ev", dst.solutions(0.2), 1000, [0.02, 0.2], seed=5, n_resamples=100)
        write_summary_csv([summ], tmp_path / f"{run}.csv")
        write_histogram_csv(summ, tmp_path / f"{run}_h.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_h.csv").read_bytes() == (tmp_path / "b_h.csv").read_bytes()


def test_read_summary_rejects_other_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("name,alpha\nx,0.1\n")
    with pytest.raises(ValueError, match="expected columns"):
        read_summary_csv(p)


def _row(name, mean, cvar, se=0.1):
    return {"name": name, "mean": mean, "cvar": cvar, "cvar_se": se}


def test_mark_best_prefers_lower_mean_at_equal_cvar():
    rows = [_row("ev", 3.2, 18.5), _row("cvar-wc", 8.3, 10.0), _row("cvar-ev", 3.8, 10.0)]
    assert mark_best(rows) == 2


def test_mark_best_ignores_rows_outside_the_cvar_window():
    rows = [_row("a", 1.0, 20.0, 0.1), _row("b", 5.0, 10.0, 0.1)]
    assert mark_best(rows) == 1


def test_mark_best_ties_break_by_name():
    rows = [_row("zeta", 4.0, 10.0), _row("alpha", 4.0, 10.0)]
    assert mark_best(rows) == 1
    with pytest.raises(ValueError):
        mark_best([])
