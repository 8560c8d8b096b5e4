"""Monte Carlo evaluation: empirical VaR/CVaR, standard errors, histograms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .execution import Solutions, run_episodes
from .mdp import Mdp, RandomSource
from .risk import VAR_CONVENTIONS

EVAL_STREAM = 1
BOOTSTRAP_STREAM = 2

SUMMARY_COLUMNS = ("name", "alpha", "n", "mean", "mean_se", "var", "cvar", "cvar_se")
HISTOGRAM_COLUMNS = ("bin_left", "bin_right", "count")


def _tail_count(alpha: float, n: int) -> int:
    return max(1, min(n, math.ceil(alpha * n - 1e-9)))


def empirical_var(costs, alpha: float, convention: str = "lower", margin: bool = False) -> float:
    """Sample quantile: the smallest sample with at least (lower) or more than
    (upper) a ``1 - alpha`` fraction of the sample at or below it.  With
    ``margin`` the estimate steps down one order statistic."""
    x = np.sort(np.asarray(costs, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    level = (1.0 - alpha) * n
    if convention == "lower":
        k = math.ceil(level - 1e-9)
    elif convention == "upper":
        k = math.floor(level + 1e-9) + 1
    else:
        raise ValueError(f"unknown VaR convention {convention!r}; expected {VAR_CONVENTIONS}")
    k = min(max(k, 1), n)
    if margin:
        k = max(k - 1, 1)
    return float(x[k - 1])


def empirical_cvar(costs, alpha: float, convention: str = "lower") -> tuple[float, float]:
    """``(VaR, CVaR)`` where CVaR averages the worst ``ceil(alpha * N)`` samples."""
    x = np.asarray(costs, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    k = _tail_count(alpha, x.size)
    tail = np.partition(x, x.size - k)[x.size - k :]
    return empirical_var(x, alpha, convention), float(tail.mean())


def bootstrap_cvar_se(costs, alpha: float, n_resamples: int, rng: np.random.Generator) -> float:
    x = np.asarray(costs, dtype=float)
    n = x.size
    if n < 2 or n_resamples < 2:
        return 0.0
    k = _tail_count(alpha, n)
    stats = np.empty(n_resamples)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, n_resamples, chunk):
        m = min(chunk, n_resamples - start)
        sample = x[rng.integers(0, n, size=(m, n))]
        stats[start : start + m] = np.partition(sample, n - k, axis=1)[:, n - k :].mean(axis=1)
    return float(stats.std(ddof=1))


@dataclass
class AlphaStats:
    alpha: float
    var: float
    cvar: float
    cvar_se: float


@dataclass
class EvaluationSummary:
    name: str
    n: int
    mean: float
    mean_se: float
    per_alpha: list[AlphaStats]
    bin_edges: np.ndarray
    counts: np.ndarray
    costs: np.ndarray = field(repr=False)
    switched: int = 0
    records: list = field(default_factory=list, repr=False)

    def stats(self, alpha: float) -> AlphaStats:
        for st in self.per_alpha:
            if math.isclose(st.alpha, alpha):
                return st
        raise KeyError(alpha)

    def rows(self) -> list[dict]:
        return [
            {
                "name": self.name,
                "alpha": st.alpha,
                "n": self.n,
                "mean": self.mean,
                "mean_se": self.mean_se,
                "var": st.var,
                "cvar": st.cvar,
                "cvar_se": st.cvar_se,
            }
            for st in self.per_alpha
        ]


def histogram(costs, bins: int = 100, bin_width: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(costs, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    if bin_width:
        edges = np.arange(lo, hi + bin_width, bin_width)
        if edges[-1] < hi:
            edges = np.append(edges, edges[-1] + bin_width)
        if len(edges) < 2:
            edges = np.array([lo, lo + bin_width])
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


def summarize(
    name: str,
    costs,
    alphas,
    seed: int = 0,
    n_resamples: int = 1000,
    convention: str = "lower",
    bins: int = 100,
    bin_width: float | None = None,
    switched: int = 0,
) -> EvaluationSummary:
    x = np.asarray(costs, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    n = x.size
    mean = float(x.mean())
    mean_se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    per_alpha = []
    for j, a in enumerate(alphas):
        var, cvar = empirical_cvar(x, a, convention)
        rng = RandomSource(seed, BOOTSTRAP_STREAM).episode(j)
        per_alpha.append(AlphaStats(float(a), var, cvar, bootstrap_cvar_se(x, a, n_resamples, rng)))
    edges, counts = histogram(x, bins, bin_width)
    return EvaluationSummary(name, n, mean, mean_se, per_alpha, edges, counts, x, switched)


def evaluate(
    mdp: Mdp,
    strategy: str,
    solutions: Solutions,
    n_episodes: int,
    alphas,
    seed: int,
    name: str | None = None,
    cost_shift: float = 0.0,
    n_resamples: int = 1000,
    convention: str = "lower",
    bins: int = 100,
    bin_width: float | None = None,
    **episode_kwargs,
) -> EvaluationSummary:
    """Run ``n_episodes`` seeded episodes and summarise total costs (minus
    ``cost_shift``) at each confidence level in ``alphas``."""
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    records = run_episodes(mdp, strategy, solutions, n_episodes, RandomSource(seed, EVAL_STREAM), **episode_kwargs)
    costs = np.array([r.total_cost for r in records]) - cost_shift
    summary = summarize(
        name or strategy,
        costs,
        alphas,
        seed=seed,
        n_resamples=n_resamples,
        convention=convention,
        bins=bins,
        bin_width=bin_width,
        switched=sum(r.switched for r in records),
    )
    summary.records = list(records)
    return summary


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def write_summary_csv(summaries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for summ in summaries:
            for row in summ.rows():
                w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def read_summary_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(SUMMARY_COLUMNS)}")
        rows = []
        for r in reader:
            rows.append(
                {
                    "name": r["name"],
                    "alpha": float(r["alpha"]),
                    "n": int(r["n"]),
                    **{k: float(r[k]) for k in ("mean", "mean_se", "var", "cvar", "cvar_se")},
                }
            )
        return rows


def write_histogram_csv(summary: EvaluationSummary, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTOGRAM_COLUMNS)
        for lo, hi, cnt in zip(summary.bin_edges[:-1], summary.bin_edges[1:], summary.counts):
            w.writerow([_fmt(float(lo)), _fmt(float(hi)), int(cnt)])


def mark_best(rows: list[dict], n_se: float = 3.0) -> int:
    """Index of the best row by the lexicographic rule: among rows whose CVaR
    is within ``n_se`` combined standard errors of the smallest CVaR, the one
    with the lowest mean.  Remaining ties go to the alphabetically first name."""
    if not rows:
        raise ValueError("no rows to compare")
    order = sorted(range(len(rows)), key=lambda i: (rows[i]["cvar"], rows[i]["name"], i))
    ref = rows[order[0]]
    close = [
        i
        for i in order
        if rows[i]["cvar"] <= ref["cvar"] + n_se * math.hypot(rows[i]["cvar_se"], ref["cvar_se"]) + 1e-12
    ]
    return min(close, key=lambda i: (rows[i]["mean"], rows[i]["name"], i))
