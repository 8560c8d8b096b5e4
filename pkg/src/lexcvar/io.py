"""JSON document format for MDPs."""

from __future__ import annotations

import json
from pathlib import Path

from .mdp import Mdp, make_mdp, validate_mdp

TOP_FIELDS = ("states", "initial", "goals", "transitions")
TRANSITION_FIELDS = ("state", "action", "cost", "successors")
SUCCESSOR_FIELDS = ("state", "p")


class MdpFormatError(ValueError):
    pass


def state_label(s) -> str:
    if isinstance(s, str):
        return s
    if isinstance(s, tuple):
        return "|".join(str(x) for x in s)
    return str(s)


def mdp_to_document(mdp: Mdp) -> dict:
    rows = []
    for s in mdp.states:
        for a in mdp.actions.get(s, ()):
            rows.append(
                {
                    "state": state_label(s),
                    "action": a if isinstance(a, (str, int)) else str(a),
                    "cost": mdp.costs[(s, a)],
                    "successors": [{"state": state_label(sp), "p": p} for sp, p in mdp.transitions[(s, a)]],
                }
            )
    return {
        "states": [state_label(s) for s in mdp.states],
        "initial": state_label(mdp.initial),
        "goals": [state_label(g) for g in mdp.states if g in mdp.goals],
        "transitions": rows,
    }


def save_mdp_file(mdp: Mdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_document(mdp), indent=1) + "\n", encoding="utf-8")


def _strict(obj, allowed, where):
    if not isinstance(obj, dict):
        raise MdpFormatError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise MdpFormatError(f"{where}: unknown field {key!r}")
    for key in allowed:
        if key not in obj:
            raise MdpFormatError(f"{where}: missing field {key!r}")


def _number(x, where) -> float:
    if isinstance(x, bool):
        raise MdpFormatError(f"{where}: expected a number, got {x!r}")
    try:
        return float(x)
    except (TypeError, ValueError):
        raise MdpFormatError(f"{where}: expected a number, got {x!r}") from None


def mdp_from_document(doc: dict, name: str = "mdp") -> Mdp:
    _strict(doc, TOP_FIELDS, "document")
    transitions, costs = {}, {}
    for k, row in enumerate(doc["transitions"]):
        where = f"transitions[{k}]"
        _strict(row, TRANSITION_FIELDS, where)
        key = (row["state"], row["action"])
        if key in transitions:
            raise MdpFormatError(f"{where}: duplicate entry for {key!r}")
        succ = []
        for j, item in enumerate(row["successors"]):
            _strict(item, SUCCESSOR_FIELDS, f"{where}.successors[{j}]")
            succ.append((item["state"], _number(item["p"], f"{where}.successors[{j}].p")))
        transitions[key] = succ
        costs[key] = _number(row["cost"], f"{where}.cost")
    mdp = make_mdp(doc["states"], transitions, costs, doc["goals"], doc["initial"], name=name)
    report = validate_mdp(mdp)
    if report.violations:
        raise MdpFormatError("invalid model: " + "; ".join(report.violations))
    return mdp


def load_mdp_file(path: str | Path) -> Mdp:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise MdpFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}: {line.strip()!r}") from None
    return mdp_from_document(doc, name=path.stem)
