"""Versioned JSON documents for solver outputs and the run manifest.

Arrays are stored in the compiled state/pair order of the model, so a
document is only meaningful together with the model it was solved on; each
document carries a fingerprint of that model and loaders check it.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .io import mdp_to_document
from .mdp import Mdp
from .solvers.cvar import CvarSolution, YGrid
from .solvers.ev import ValueTable
from .solvers.lex import CostGrid, LexSolution, VarEstimate
from .solvers.worst import WorstCaseSolution

SOLUTION_FORMAT = "lexcvar-solution"
MANIFEST_FORMAT = "lexcvar-manifest"
VERSION = 1


class PersistError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def mdp_fingerprint(mdp: Mdp) -> str:
    return digest(mdp_to_document(mdp))


def _enc(a) -> list:
    """Array to nested lists, with infinities as ``None``."""
    a = np.asarray(a)
    if a.dtype.kind in "iu":
        return a.tolist()
    out = a.astype(float).tolist()

    def fix(x):
        if isinstance(x, list):
            return [fix(v) for v in x]
        return None if math.isinf(x) else x

    return fix(out) if np.isinf(a).any() else out


def _dec(x, dtype=float) -> np.ndarray:
    return np.array(x, dtype=dtype)


def _dec_inf(x) -> np.ndarray:
    def fix(v):
        if isinstance(v, list):
            return [fix(u) for u in v]
        return math.inf if v is None else v

    return np.array(fix(x), dtype=float)


def _header(kind: str, mdp: Mdp, fingerprint: str | None) -> dict:
    return {
        "format": SOLUTION_FORMAT,
        "version": VERSION,
        "kind": kind,
        "mdp": fingerprint or mdp_fingerprint(mdp),
        "n_states": len(mdp.states),
    }


def ev_document(sol: ValueTable, fingerprint: str | None = None) -> dict:
    doc = _header("ev", sol.mdp, fingerprint)
    doc.update(values=_enc(sol.values), pair=_enc(sol.pair), sweeps=sol.sweeps)
    return doc


def worst_document(sol: WorstCaseSolution, fingerprint: str | None = None) -> dict:
    doc = _header("worst", sol.mdp, fingerprint)
    doc.update(v_worst=_enc(sol.v_worst), q_worst=_enc(sol.q_worst), pair=_enc(sol.pair), sweeps=sol.sweeps)
    return doc


def cvar_document(sol: CvarSolution, fingerprint: str | None = None) -> dict:
    doc = _header("cvar", sol.mdp, fingerprint)
    doc.update(y_grid=_enc(sol.grid.points), values=_enc(sol.values), pair=_enc(sol.pair), sweeps=sol.sweeps)
    return doc


def lex_document(sol: LexSolution, fingerprint: str | None = None) -> dict:
    doc = _header("lex", sol.mdp, fingerprint)
    v = sol.var
    doc.update(
        var={
            "value": v.value,
            "alpha": v.alpha,
            "episodes": v.episodes,
            "convention": v.convention,
            "margin": v.margin,
        },
        cost_grid=_enc(sol.grid.points),
        values=_enc(sol.values),
        boundary=_enc(sol.boundary),
        sweeps=sol.sweeps,
    )
    return doc


def write_document(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def read_document(path: str | Path, kind: str | None = None, mdp: Mdp | None = None, fingerprint=None) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PersistError(f"{path}: not valid JSON ({exc})") from None
    fmt = doc.get("format")
    if fmt not in (SOLUTION_FORMAT, MANIFEST_FORMAT):
        raise PersistError(f"{path}: unknown document format {fmt!r}")
    if doc.get("version") != VERSION:
        raise PersistError(f"{path}: unsupported document version {doc.get('version')!r} (expected {VERSION})")
    if kind is not None and doc.get("kind") != kind:
        raise PersistError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    if mdp is not None:
        fp = fingerprint or mdp_fingerprint(mdp)
        if doc.get("mdp") != fp:
            raise PersistError(f"{path}: solution was computed for a different model")
    return doc


def load_ev(path, mdp: Mdp, fingerprint=None) -> ValueTable:
    d = read_document(path, "ev", mdp, fingerprint)
    return ValueTable(mdp, _dec_inf(d["values"]), _dec(d["pair"], np.intp), d["sweeps"])


def load_worst(path, mdp: Mdp, fingerprint=None) -> WorstCaseSolution:
    d = read_document(path, "worst", mdp, fingerprint)
    return WorstCaseSolution(
        mdp, _dec_inf(d["v_worst"]), _dec_inf(d["q_worst"]), _dec(d["pair"], np.intp), d["sweeps"]
    )


def load_cvar(path, mdp: Mdp, worst: WorstCaseSolution, fingerprint=None) -> CvarSolution:
    d = read_document(path, "cvar", mdp, fingerprint)
    grid = YGrid(_dec(d["y_grid"]))
    return CvarSolution(mdp, grid, _dec_inf(d["values"]), _dec(d["pair"], np.intp), worst, d["sweeps"])


def load_lex(path, mdp: Mdp, worst: WorstCaseSolution, fingerprint=None) -> LexSolution:
    d = read_document(path, "lex", mdp, fingerprint)
    v = d["var"]
    var = VarEstimate(float(v["value"]), float(v["alpha"]), int(v["episodes"]), v["convention"], bool(v["margin"]))
    return LexSolution(
        mdp, var, CostGrid(_dec(d["cost_grid"])), _dec_inf(d["values"]), _dec_inf(d["boundary"]), worst, d["sweeps"]
    )


def manifest_document(config_hash: str, fingerprint: str, domain: str, files: dict, timings: dict, alphas: dict) -> dict:
    """``alphas`` maps a label per confidence level to its optimal CVaR and VaR."""
    return {
        "format": MANIFEST_FORMAT,
        "version": VERSION,
        "config_hash": config_hash,
        "mdp": fingerprint,
        "domain": domain,
        "files": files,
        "timings": timings,
        "alphas": alphas,
    }


def read_manifest(path: str | Path) -> dict:
    doc = read_document(path)
    if doc.get("format") != MANIFEST_FORMAT:
        raise PersistError(f"{path}: not a manifest")
    return doc
