"""Fixed-format MPS export and a token-based reader for round trips."""

from __future__ import annotations

from typing import List

import numpy as np

from .model import MilpModel

_SENSE = {"<": "L", ">": "G", "=": "E"}
_SENSE_INV = {v: k for k, v in _SENSE.items()}


def _num(x: float) -> str:
    return repr(float(x))


def _line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # field columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    s = " " + f1.ljust(2) + " " + f2.ljust(8) + "  " + f3.ljust(8) + "  " + f4.ljust(12)
    if f5:
        s += "   " + f5.ljust(8) + "  " + f6
    return s.rstrip()


def _col_name(j):
    return f"C{j:07d}"


def _row_name(r):
    return f"R{r:07d}"


def export_mps(model: MilpModel, path) -> None:
    """Write ``model`` in fixed-format MPS (minimization, generated 8-character names)."""
    lines: List[str] = [f"NAME          {model.name[:8] or 'MODEL'}", "ROWS", _line("N", "COST")]
    for r, row in enumerate(model.rows):
        lines.append(_line(_SENSE[row.sense], _row_name(r)))
    cols = [[] for _ in range(model.num_vars)]
    for r, row in enumerate(model.rows):
        for j, a in zip(row.idx, row.coef):
            if a != 0.0:
                cols[j].append((_row_name(r), a))
    obj = model.objective_vector()
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.num_vars):
        if model.binary[j] and not in_int:
            lines.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTORG'"))
            marker += 1
            in_int = True
        elif not model.binary[j] and in_int:
            lines.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))
            marker += 1
            in_int = False
        entries = ([("COST", obj[j])] if obj[j] != 0.0 else []) + cols[j]
        if not entries:
            entries = [("COST", 0.0)]
        for name, a in entries:
            lines.append(_line("", _col_name(j), name, _num(a)))
    if in_int:
        lines.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))
    lines.append("RHS")
    for r, row in enumerate(model.rows):
        if row.rhs != 0.0:
            lines.append(_line("", "RHS", _row_name(r), _num(row.rhs)))
    lines.append("BOUNDS")
    for j in range(model.num_vars):
        name = _col_name(j)
        if model.binary[j]:
            lines.append(_line("BV", "BND", name))
            continue
        lo, hi = model.lo[j], model.hi[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(_line("FR", "BND", name))
            continue
        if lo == hi:
            lines.append(_line("FX", "BND", name, _num(lo)))
            continue
        if lo == -np.inf:
            lines.append(_line("MI", "BND", name))
        elif lo != 0.0:
            lines.append(_line("LO", "BND", name, _num(lo)))
        if hi != np.inf:
            lines.append(_line("UP", "BND", name, _num(hi)))
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_mps(path) -> MilpModel:
    """Read an MPS file written by :func:`export_mps` (whitespace-separated fields)."""
    with open(path) as fh:
        text = fh.read().splitlines()
    model = MilpModel()
    section = None
    row_sense, row_order = {}, []
    obj_name = None
    col_index = {}
    entries = {}
    rhs = {}
    in_int = False
    for raw in text:
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            tok = raw.split()
            section = tok[0]
            if section == "NAME" and len(tok) > 1:
                model.name = tok[1]
            continue
        tok = raw.split()
        if section == "ROWS":
            kind, name = tok
            if kind == "N":
                obj_name = name
            else:
                row_sense[name] = _SENSE_INV[kind]
                row_order.append(name)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            col = tok[0]
            if col not in col_index:
                col_index[col] = model.add_var(col, 0.0, np.inf, binary=in_int)
            j = col_index[col]
            for k in range(1, len(tok), 2):
                entries.setdefault(tok[k], []).append((j, float(tok[k + 1])))
        elif section == "RHS":
            for k in range(1, len(tok), 2):
                rhs[tok[k]] = float(tok[k + 1])
        elif section == "BOUNDS":
            kind, _, col = tok[:3]
            j = col_index[col]
            val = float(tok[3]) if len(tok) > 3 else None
            if kind == "BV":
                model.binary[j] = True
                model.lo[j], model.hi[j] = 0.0, 1.0
            elif kind == "FR":
                model.lo[j], model.hi[j] = -np.inf, np.inf
            elif kind == "MI":
                model.lo[j] = -np.inf
            elif kind == "PL":
                model.hi[j] = np.inf
            elif kind == "LO":
                model.lo[j] = val
            elif kind == "UP":
                model.hi[j] = val
            elif kind == "FX":
                model.lo[j] = model.hi[j] = val
    obj = entries.get(obj_name, [])
    model.set_objective([j for j, _ in obj], [a for _, a in obj])
    for name in row_order:
        e = entries.get(name, [])
        model.add_row([j for j, _ in e], [a for _, a in e], row_sense[name], rhs.get(name, 0.0), name)
    return model
