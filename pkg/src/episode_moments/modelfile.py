"""JSON model files and the CSV/PGM outputs of the command line tool.

A model file is a JSON object::

    {"num_states": 3, "goal_states": [2], "fail_states": [],
     "edges": [{"from": 0, "to": 1, "prob": 0.5, "time": 1}, ...],
     "mdp": {"num_actions": 2,
             "mdp_transitions": [{"from": 0, "action": 0, "to": 1, "prob": 1.0}, ...],
             "policy": [{"state": 0, "action": 0, "weight": 1.0}, ...],
             "times": [{"from": 0, "to": 1, "time": 1}, ...]},
     "layout": [{"state": 0, "row": 0, "col": 0}, ...]}

``mdp`` and ``layout`` are optional. With an ``mdp`` section the chain is
induced from it and ``edges`` must be empty or absent.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import Chain, Mdp, Policy, induce_chain
from .solver import SolveResult

Cell = tuple[int, int]


class ModelFileError(ValueError):
    """The file cannot be parsed into a model (as opposed to an invalid model)."""


@dataclass(frozen=True)
class Model:
    chain: Chain
    layout: list[Cell] | None = None


def fmt(v) -> str:
    """Eleven significant digits, shortest round-trip form; ``NA`` for missing."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return repr(float(f"{float(v):.10e}") + 0.0)


def _records(obj, key, fields, required=True):
    if key not in obj:
        if required:
            raise ModelFileError(f"missing field '{key}'")
        return []
    items = obj[key]
    if not isinstance(items, list):
        raise ModelFileError(f"'{key}' must be a list")
    out = []
    for n, item in enumerate(items):
        if not isinstance(item, dict):
            raise ModelFileError(f"{key}[{n}] must be an object")
        missing = [f for f in fields if f not in item]
        if missing:
            raise ModelFileError(f"{key}[{n}] lacks {', '.join(missing)}")
        out.append(tuple(item[f] for f in fields))
    return out


def _int_list(obj, key):
    items = obj.get(key, [])
    if not isinstance(items, list) or not all(isinstance(i, int) for i in items):
        raise ModelFileError(f"'{key}' must be a list of integers")
    return items


def parse_model(doc: dict) -> Model:
    """Build a :class:`Model`; raises ``ModelFileError`` or ``ModelError``."""
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    n = doc.get("num_states")
    if not isinstance(n, int):
        raise ModelFileError("'num_states' must be an integer")
    goal = _int_list(doc, "goal_states")
    fail = _int_list(doc, "fail_states")
    if "mdp" in doc:
        if doc.get("edges"):
            raise ModelFileError("give either 'edges' or an 'mdp' section, not both")
        m = doc["mdp"]
        if not isinstance(m, dict) or not isinstance(m.get("num_actions"), int):
            raise ModelFileError("'mdp' needs an integer 'num_actions'")
        mdp = Mdp(n, m["num_actions"],
                  tuple(_records(m, "mdp_transitions", ("from", "action", "to", "prob"))),
                  frozenset(goal), frozenset(fail))
        policy = Policy(tuple(_records(m, "policy", ("state", "action", "weight"))))
        times = {(x, y): t for x, y, t in _records(m, "times", ("from", "to", "time"))}
        chain = induce_chain(mdp, policy, times)
    else:
        edges = _records(doc, "edges", ("from", "to", "prob", "time"))
        chain = Chain.from_edges(n, edges, goal, fail)
    layout = None
    if "layout" in doc:
        cells = {s: (r, c) for s, r, c in _records(doc, "layout", ("state", "row", "col"))}
        if sorted(cells) != list(range(n)):
            raise ModelFileError("'layout' must list every state exactly once")
        layout = [cells[s] for s in range(n)]
    return Model(chain, layout)


def load_model(path: str | Path) -> Model:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    return parse_model(doc)


def model_to_json(chain: Chain, layout: list[Cell] | None = None) -> str:
    doc = {
        "num_states": chain.num_states,
        "goal_states": sorted(chain.goal_states),
        "fail_states": sorted(chain.fail_states),
        "edges": [{"from": e.src, "to": e.dst, "prob": e.prob, "time": e.time}
                  for e in chain.edges],
    }
    if layout is not None:
        doc["layout"] = [{"state": i, "row": r, "col": c} for i, (r, c) in enumerate(layout)]
    # One record per line keeps diffs of large models readable.
    lines = ["{"]
    items = list(doc.items())
    for k, (key, value) in enumerate(items):
        sep = "," if k < len(items) - 1 else ""
        if isinstance(value, list) and value and isinstance(value[0], dict):
            body = ",\n".join("    " + json.dumps(v) for v in value)
            lines.append(f'  "{key}": [\n{body}\n  ]{sep}')
        else:
            lines.append(f'  "{key}": {json.dumps(value)}{sep}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def solve_csv(result: SolveResult, layout: list[Cell] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "row", "col", "s", "A", "B", "D"])
    for x in range(len(result.s)):
        row, col = layout[x] if layout is not None else ("", "")
        w.writerow([x, row, col, fmt(result.s[x]), fmt(result.a[x]), fmt(result.b[x]),
                    fmt(result.d[x])])
    buf.write("# phase residual iterations\n")
    for phase in ("s", "A", "B"):
        buf.write(f"# {phase} {fmt(result.residual[phase])} {result.iterations[phase]}\n")
    return buf.getvalue()


def read_solve_csv(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


FIELDS = ("s", "A", "D")


def heatmap_pgm(rows: list[dict[str, str]], field: str) -> str:
    """Plain PGM (``P2``) of one solve field over the grid layout.

    Pixel value is ``round(255 v / v_max)`` with ``v_max = 1`` for ``s`` and
    the largest defined value otherwise; ``NA`` cells and cells without a
    state (islands) are 0. Grid size is inferred from the largest row and
    column present.
    """
    if field not in FIELDS:
        raise ValueError(f"unknown field {field!r}; choose from {', '.join(FIELDS)}")
    if not rows or any(r.get("row", "") == "" or r.get("col", "") == "" for r in rows):
        raise ValueError("solve CSV has no layout (row/col columns are blank)")
    cells = [(int(r["row"]), int(r["col"])) for r in rows]
    values = [None if r[field] == "NA" else float(r[field]) for r in rows]
    height = max(r for r, _ in cells) + 1
    width = max(c for _, c in cells) + 1
    defined = [v for v in values if v is not None]
    v_max = 1.0 if field == "s" else max(defined, default=0.0)
    img = np.zeros((height, width), dtype=np.int64)
    for (r, c), v in zip(cells, values):
        if v is not None and v_max > 0:
            img[r, c] = min(255, max(0, math.floor(255.0 * v / v_max + 0.5)))
    out = [f"P2\n{width} {height}\n255"]
    for line in img:
        vals = [str(p) for p in line]
        # Plain PGM lines should stay under 70 characters.
        for k in range(0, len(vals), 17):
            out.append(" ".join(vals[k:k + 17]))
    return "\n".join(out) + "\n"
