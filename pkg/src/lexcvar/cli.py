"""Command line front end.

    lexcvar solve      --domain betting --alpha 0.02 0.2 --out runs/betting
    lexcvar evaluate   --domain betting --alpha 0.02 0.2 --out runs/betting
    lexcvar compare    runs/betting/summary.csv
    lexcvar gen-domain inventory -o inventory.json
    lexcvar validate   inventory.json

Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
solver, evaluation or data check fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .domains.dst import LayoutError
from .domains.registry import BUILTIN_DOMAINS, DomainError, build_domain
from .evaluation import (
    evaluate,
    mark_best,
    read_summary_csv,
    write_histogram_csv,
    write_summary_csv,
)
from .execution import STRATEGIES, Solutions
from .io import MdpFormatError, load_mdp_file, save_mdp_file
from .mdp import RandomSource, validate_mdp
from .persist import (
    PersistError,
    cvar_document,
    digest,
    ev_document,
    lex_document,
    load_cvar,
    load_ev,
    load_lex,
    load_worst,
    manifest_document,
    mdp_fingerprint,
    read_manifest,
    worst_document,
    write_document,
)
from .risk import VAR_CONVENTIONS
from .solvers import (
    build_cost_grid,
    build_ygrid,
    cvar_value_iteration,
    estimate_var,
    exact_cost_grid,
    solve_constrained_ev,
    solve_expected_value,
    solve_worst_case,
)
from .solvers.cvar import query_value
from .solvers.lex import is_integral_model

log = logging.getLogger("lexcvar")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
VAR_STREAM = 3000
STRATEGY_ALIASES = {"wc": "cvar-wc", "lex": "cvar-ev"}


class UsageError(Exception):
    pass


class RunError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    domain: str | None = None
    params: dict = field(default_factory=dict)
    mdp: str | None = None
    alphas: list = field(default_factory=lambda: [0.02, 0.2])
    # solver settings
    y_points: int = 30
    y_min: float = 1e-3
    cost_points: int = 100
    exact_cost: bool = False
    epsilon: float = 1e-6
    max_sweeps: int = 10_000
    xi_tol: float = 1e-6
    var_convention: str = "lower"
    var_episodes: int = 20_000
    var_margin: bool = False
    var_seed: int = 0
    # evaluation settings
    episodes: int = 20_000
    seed: int = 0
    bins: int = 100
    bin_width: float | None = None
    bootstrap: int = 1000
    out: str = "lexcvar-out"

    # fields that change what `solve` produces
    SOLVE_KEYS = (
        "domain", "params", "alphas", "y_points", "y_min", "cost_points", "exact_cost", "epsilon",
        "max_sweeps", "xi_tol", "var_convention", "var_episodes", "var_margin", "var_seed",
    )

    def check(self) -> None:
        if (self.domain is None) == (self.mdp is None):
            raise UsageError("give exactly one of --domain or --mdp")
        if self.domain is not None and self.domain not in BUILTIN_DOMAINS:
            raise UsageError(f"unknown domain {self.domain!r}; expected one of {', '.join(BUILTIN_DOMAINS)}")
        if not self.alphas:
            raise UsageError("at least one alpha is required")
        for a in self.alphas:
            if not isinstance(a, (int, float)) or not 0 < a <= 1:
                raise UsageError(f"alpha must lie in (0, 1], got {a}")
        if len(set(self.alphas)) != len(self.alphas):
            raise UsageError("alphas must be distinct")
        if self.y_points < 3 or self.cost_points < 3:
            raise UsageError("grid sizes must be at least 3")
        if not 0 < self.y_min < 1:
            raise UsageError(f"y_min must lie in (0, 1), got {self.y_min}")
        if self.episodes < 1 or self.var_episodes < 1:
            raise UsageError("episode counts must be at least 1")
        if self.var_convention not in VAR_CONVENTIONS:
            raise UsageError(f"VaR convention must be one of {', '.join(VAR_CONVENTIONS)}")
        if self.epsilon <= 0 or self.max_sweeps < 1 or self.xi_tol <= 0:
            raise UsageError("epsilon, xi_tol and max_sweeps must be positive")
        if self.bins < 1 or (self.bin_width is not None and self.bin_width <= 0):
            raise UsageError("bins and bin width must be positive")

    def config_hash(self) -> str:
        key = {k: getattr(self, k) for k in self.SOLVE_KEYS}
        key["alphas"] = [float(a) for a in self.alphas]
        if self.mdp is not None:
            key["mdp_file"] = hashlib.sha256(Path(self.mdp).read_bytes()).hexdigest()
        return digest(key)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - CONFIG_FIELDS)
    if unknown:
        raise UsageError(f"{path}: unknown config field(s) {', '.join(unknown)}")
    return doc


def _parse_param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise UsageError(f"--param expects key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def config_from_args(args) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    # a model chosen on the command line replaces the one in the file
    if args.mdp is not None:
        values.pop("domain", None)
    if args.domain is not None:
        values.pop("mdp", None)
    for name in CONFIG_FIELDS - {"params"}:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.param:
        params = dict(values.get("params", {}))
        params.update(_parse_param(p) for p in args.param)
        values["params"] = params
    cfg = RunConfig(**values)
    cfg.check()
    return cfg


def build_model(cfg: RunConfig):
    """``(mdp, report_shift, label)`` for the configured domain."""
    try:
        if cfg.mdp is not None:
            return load_mdp_file(cfg.mdp), 0.0, Path(cfg.mdp).name
        mdp, shift = build_domain(cfg.domain, cfg.params)
        return mdp, shift, cfg.domain
    except OSError as exc:
        raise UsageError(f"cannot read {exc.filename}: {exc.strerror}") from None
    except (DomainError, LayoutError, MdpFormatError) as exc:
        raise UsageError(str(exc)) from None


def alpha_tag(a: float) -> str:
    return f"{float(a):g}"


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        raise RunError(f"{stage}: {exc}") from exc


def cmd_solve(cfg: RunConfig) -> dict:
    mdp, shift, label = build_model(cfg)
    fp = mdp_fingerprint(mdp)
    timings, docs, alphas = {}, {}, {}

    def timed(key, name, fn, *a, **kw):
        t0 = time.perf_counter()
        out = _stage(name, fn, *a, **kw)
        timings[key] = round(time.perf_counter() - t0, 3)
        log.info("%s done in %.2fs", key, timings[key])
        return out

    ev = timed("ev", "solver-ev", solve_expected_value, mdp, cfg.epsilon)
    worst = timed("worst", "solver-worst", solve_worst_case, mdp, cfg.epsilon, cfg.max_sweeps)
    grid = build_ygrid(cfg.y_points, cfg.y_min)
    cvar = timed("cvar", "solver-cvar", cvar_value_iteration, mdp, grid, worst, cfg.epsilon, cfg.max_sweeps)
    docs["ev"] = ("ev.json", ev_document(ev, fp))
    docs["worst"] = ("worst.json", worst_document(worst, fp))
    docs["cvar"] = ("cvar.json", cvar_document(cvar, fp))
    for j, a in enumerate(cfg.alphas):
        tag = alpha_tag(a)
        var = timed(
            f"var_{tag}", "solver-lex", estimate_var, mdp, cvar, a, cfg.var_episodes,
            RandomSource(cfg.var_seed, VAR_STREAM + j), cfg.var_convention, cfg.var_margin,
        )
        if cfg.exact_cost and is_integral_model(mdp):
            cgrid = exact_cost_grid(var.value)
        else:
            cgrid = build_cost_grid(var.value, cfg.cost_points)
        lex = timed(f"lex_{tag}", "solver-lex", solve_constrained_ev, mdp, worst, var, cgrid, cfg.epsilon, cfg.max_sweeps)
        docs[f"lex_{tag}"] = (f"lex_{tag}.json", lex_document(lex, fp))
        alphas[tag] = {
            "alpha": float(a),
            "optimal_cvar": query_value(cvar, mdp.initial, a) - shift,
            "var": var.value - shift,
            "var_episodes": var.episodes,
            "var_convention": var.convention,
        }

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    files = {k: name for k, (name, _) in docs.items()}
    manifest = manifest_document(cfg.config_hash(), fp, label, files, timings, alphas)
    manifest["report_shift"] = shift
    written = []
    try:
        for name, doc in docs.values():
            write_document(doc, out / name)
            written.append(out / name)
        write_document(manifest, out / "manifest.json")
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise RunError(f"writing solutions: {exc}") from exc
    for tag, info in alphas.items():
        print(f"alpha={tag}  optimal CVaR={info['optimal_cvar']:.6g}  VaR={info['var']:.6g}")
    print(f"wrote {len(docs)} solution files and manifest.json to {out}")
    return manifest


def load_solutions(cfg: RunConfig, mdp, manifest: dict):
    out = cfg.out_dir
    fp = manifest["mdp"]
    files = manifest["files"]
    try:
        ev = load_ev(out / files["ev"], mdp, fp)
        worst = load_worst(out / files["worst"], mdp, fp)
        cvar = load_cvar(out / files["cvar"], mdp, worst, fp)
        lex = {tag: load_lex(out / files[f"lex_{tag}"], mdp, worst, fp) for tag in manifest["alphas"]}
    except (OSError, KeyError) as exc:
        raise RunError(f"incomplete solution set in {out}: {exc}") from None
    return ev, cvar, lex


def _open_manifest(cfg: RunConfig) -> dict:
    path = cfg.out_dir / "manifest.json"
    if not path.exists():
        raise RunError(f"no solutions in {cfg.out_dir}; run `lexcvar solve` with the same settings first")
    manifest = read_manifest(path)
    if manifest["config_hash"] != cfg.config_hash():
        raise RunError(f"stale solutions in {cfg.out_dir}: the config hash differs; re-run `lexcvar solve`")
    return manifest


def cmd_evaluate(cfg: RunConfig, strategies) -> list:
    manifest = _open_manifest(cfg)
    mdp, shift, label = build_model(cfg)
    fp = mdp_fingerprint(mdp)
    if fp != manifest["mdp"]:
        raise RunError("stale solutions: the model differs from the one solved")
    ev, cvar, lex = load_solutions(cfg, mdp, manifest)
    out = cfg.out_dir
    common = dict(
        cost_shift=shift, n_resamples=cfg.bootstrap, convention=cfg.var_convention,
        bins=cfg.bins, bin_width=cfg.bin_width, xi_tol=cfg.xi_tol,
    )
    summaries = []
    for strategy in strategies:
        if strategy == "ev":
            runs = [(None, Solutions(ev=ev), list(cfg.alphas), "hist_ev.csv")]
        else:
            runs = [
                (a, Solutions(cvar=cvar, lex=lex[alpha_tag(a)], alpha=a), [a], f"hist_{strategy}_{alpha_tag(a)}.csv")
                for a in cfg.alphas
            ]
        for a, sols, measure, hist_name in runs:
            log.info("evaluating %s%s", strategy, "" if a is None else f" at alpha={a:g}")
            summary = _stage(
                "exec-eval", evaluate, mdp, strategy, sols, cfg.episodes, measure, cfg.seed, name=strategy, **common
            )
            write_histogram_csv(summary, out / hist_name)
            summaries.append(summary)
    write_summary_csv(summaries, out / "summary.csv")
    meta = {"domain": label, "mdp": fp, "config_hash": manifest["config_hash"], "episodes": cfg.episodes, "seed": cfg.seed}
    (out / "summary.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    rows = [r for s in summaries for r in s.rows()]
    print(format_table(rows))
    return summaries


def _meta_for(path: Path) -> dict | None:
    meta = path.with_name(path.stem + ".meta.json")
    if meta.exists():
        return json.loads(meta.read_text(encoding="utf-8"))
    return None


def compare_rows(rows: list[dict]) -> list[dict]:
    """Group rows by alpha and flag the best of each group."""
    groups: dict[float, list[dict]] = {}
    for r in rows:
        groups.setdefault(r["alpha"], []).append(r)
    table = []
    for a in sorted(groups):
        group = sorted(groups[a], key=lambda r: r["name"])
        if len(group) < 2:
            raise UsageError(f"need two strategies to compare at alpha={a:g}")
        best = mark_best(group)
        table.extend({**r, "best": i == best} for i, r in enumerate(group))
    return table


def format_table(rows: list[dict]) -> str:
    cols = ("alpha", "name", "n", "mean", "mean_se", "var", "cvar", "cvar_se")
    has_best = any("best" in r for r in rows)
    header = list(cols) + (["best"] if has_best else [])
    body = []
    for r in rows:
        line = [
            f"{r['alpha']:g}", r["name"], str(r["n"]),
            *(f"{r[k]:.4f}" for k in ("mean", "mean_se", "var", "cvar", "cvar_se")),
        ]
        if has_best:
            line.append("*" if r.get("best") else "")
        body.append(line)
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.rjust(w) if i != 1 else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join(line.rstrip() for line in [fmt(header)] + [fmt(b) for b in body])


def cmd_compare(paths, out: str | None = None) -> list[dict]:
    rows, fps = [], {}
    for p in map(Path, paths):
        try:
            rows.extend(read_summary_csv(p))
        except OSError as exc:
            raise UsageError(f"cannot read {p}: {exc.strerror}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        meta = _meta_for(p)
        if meta is not None:
            fps.setdefault(meta["mdp"], []).append(f"{p} ({meta['domain']})")
    if len(fps) > 1:
        raise RunError("mismatched domains: " + "; ".join(", ".join(v) for v in fps.values()))
    table = compare_rows(rows)
    print(format_table(table))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("name,alpha,n,mean,mean_se,var,cvar,cvar_se,best\n")
            for r in table:
                vals = [r["name"], r["alpha"], r["n"], r["mean"], r["mean_se"], r["var"], r["cvar"], r["cvar_se"]]
                fh.write(",".join(str(v) for v in vals) + f",{int(r['best'])}\n")
    return table


def cmd_gen_domain(name: str, params: dict, out: str) -> None:
    try:
        mdp, _ = build_domain(name, params)
    except OSError as exc:
        raise UsageError(f"cannot read {exc.filename}: {exc.strerror}") from None
    except (DomainError, LayoutError) as exc:
        raise UsageError(str(exc)) from None
    save_mdp_file(mdp, out)
    print(f"{name}: {len(mdp.states)} states, {mdp.compiled.n_pairs} state-action pairs -> {out}")


def cmd_validate(path: str) -> bool:
    try:
        mdp = load_mdp_file(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except MdpFormatError as exc:
        print(f"invalid: {exc}")
        return False
    report = validate_mdp(mdp)
    if not report.ok:
        for msg in report.messages():
            print(f"invalid: {msg}")
        return False
    print(f"ok: {len(mdp.states)} states, {mdp.compiled.n_pairs} state-action pairs, {len(mdp.goals)} goal(s)")
    return True


def _add_run_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", help="JSON run configuration; flags override its fields")
    g.add_argument("--domain", choices=BUILTIN_DOMAINS)
    g.add_argument("--mdp", help="MDP document (JSON) instead of a builtin domain")
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="domain parameter (repeatable)")
    g.add_argument("--alpha", dest="alphas", type=float, nargs="+", metavar="A")
    g.add_argument("--out", help="directory for solutions and reports (default lexcvar-out)")
    s = p.add_argument_group("solver")
    s.add_argument("--y-points", type=int)
    s.add_argument("--y-min", type=float)
    s.add_argument("--cost-points", type=int)
    s.add_argument("--exact-cost", action="store_const", const=True, help="integer cost axis when costs are integral")
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-sweeps", type=int)
    s.add_argument("--xi-tol", type=float)
    s.add_argument("--var-convention", choices=VAR_CONVENTIONS)
    s.add_argument("--var-episodes", type=int)
    s.add_argument("--var-margin", action="store_const", const=True, help="step the VaR estimate down one sample")
    s.add_argument("--var-seed", type=int, help="seed for the VaR estimation episodes")
    e = p.add_argument_group("evaluation")
    e.add_argument("--episodes", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--bins", type=int)
    e.add_argument("--bin-width", type=float)
    e.add_argument("--bootstrap", type=int, help="bootstrap resamples for the CVaR standard error")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexcvar", description="CVaR-optimal and lexicographic CVaR/expected-cost planning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a domain and write solution documents")
    _add_run_options(p)

    p = sub.add_parser("evaluate", help="simulate strategies from saved solutions")
    _add_run_options(p)
    p.add_argument(
        "--strategies", nargs="+", default=list(STRATEGIES), metavar="S",
        help="ev, cvar-wc (alias wc), cvar-ev (alias lex); default all",
    )

    p = sub.add_parser("compare", help="side-by-side table of summary CSVs")
    p.add_argument("summaries", nargs="+")
    p.add_argument("-o", "--output", help="also write the table as CSV")

    p = sub.add_parser("gen-domain", help="write a builtin domain as an MDP document")
    p.add_argument("name", choices=BUILTIN_DOMAINS)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("validate", help="check an MDP document")
    p.add_argument("path")
    return parser


def _strategies(names) -> list[str]:
    out = []
    for n in names:
        n = STRATEGY_ALIASES.get(n, n)
        if n not in STRATEGIES:
            raise UsageError(f"unknown strategy {n!r}; expected one of {', '.join(STRATEGIES)}")
        if n not in out:
            out.append(n)
    return out


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if args.command == "solve":
            cmd_solve(config_from_args(args))
        elif args.command == "evaluate":
            strategies = _strategies(args.strategies)
            cmd_evaluate(config_from_args(args), strategies)
        elif args.command == "compare":
            cmd_compare(args.summaries, args.output)
        elif args.command == "gen-domain":
            params = dict(_parse_param(p) for p in args.param or ())
            cmd_gen_domain(args.name, params, args.output)
        elif args.command == "validate":
            if not cmd_validate(args.path):
                return EXIT_RUNTIME
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunError, PersistError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
