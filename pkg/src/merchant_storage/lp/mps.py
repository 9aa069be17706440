"""MPS export/import.

The writer emits the classic column layout (field widths grow when a name
or number does not fit) with one coefficient per line, INTORG/INTEND
markers around binary columns and an OBJSENSE section for maximisation.
Numbers use Python's shortest round-trip repr so that export followed by
import reproduces every coefficient bit for bit. The reader tokenises on
whitespace and therefore also accepts free-format MPS.

An objective constant is stored as the negated RHS of the objective row.
"""

from __future__ import annotations

import math

from ..errors import MpsParseError
from .model import BINARY, CONTINUOUS, EQ, GE, LE, MAX, MIN, LinearModel, LinExpr

_SENSE_CODE = {LE: "L", EQ: "E", GE: "G"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def export_mps(model: LinearModel) -> str:
    for name in [v.name for v in model.variables] + [c.name for c in model.constraints]:
        if not name or any(ch.isspace() for ch in name) or name.startswith("$"):
            raise ValueError(f"name {name!r} cannot be written to MPS")
    row_names = {c.name for c in model.constraints}
    obj = "OBJ"
    while obj in row_names:
        obj += "_"
    w = max([8, len(obj)] + [len(v.name) for v in model.variables]
            + [len(c.name) for c in model.constraints])

    def entry(f1, a, b, value=None):
        line = " " + f1.ljust(2) + " " + a.ljust(w) + "  " + b.ljust(w)
        if value is not None:
            line += "  " + _num(value).rjust(12)
        return line.rstrip()

    lines = [f"NAME          {model.name}"]
    if model.sense == MAX:
        lines += ["OBJSENSE", "    MAX"]
    lines += ["ROWS", f" N  {obj}"]
    lines += [f" {_SENSE_CODE[c.sense]}  {c.name}" for c in model.constraints]

    by_col = [[] for _ in model.variables]
    for c in model.constraints:
        for j, v in c.coeffs.items():
            by_col[j].append((c.name, v))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(model.variables):
        is_bin = var.kind == BINARY
        if is_bin != in_int:
            tag = "'INTORG'" if is_bin else "'INTEND'"
            lines.append(entry("", f"M{marker:07d}", "'MARKER'") + "  " + tag.rjust(12))
            marker += 1
            in_int = is_bin
        coefs = []
        if j in model.objective.terms:
            coefs.append((obj, model.objective.terms[j]))
        coefs.extend(by_col[j])
        if not coefs:
            coefs.append((obj, 0.0))
        lines.extend(entry("", var.name, row, v) for row, v in coefs)
    if in_int:
        lines.append(entry("", f"M{marker:07d}", "'MARKER'") + "  " + "'INTEND'".rjust(12))

    lines.append("RHS")
    if model.objective.const:
        lines.append(entry("", "RHS", obj, -model.objective.const))
    lines.extend(entry("", "RHS", c.name, c.rhs) for c in model.constraints if c.rhs != 0.0)

    lines.append("BOUNDS")
    for var in model.variables:
        lb, ub = var.lb, var.ub
        if var.kind == BINARY:
            if lb != 0.0:
                lines.append(entry("LO", "BND", var.name, lb))
            lines.append(entry("UP", "BND", var.name, ub))
            continue
        if lb == ub:
            lines.append(entry("FX", "BND", var.name, lb))
        elif lb == -math.inf and ub == math.inf:
            lines.append(entry("FR", "BND", var.name))
        else:
            if lb == -math.inf:
                lines.append(entry("MI", "BND", var.name))
            elif lb != 0.0:
                lines.append(entry("LO", "BND", var.name, lb))
            if ub != math.inf:
                lines.append(entry("UP", "BND", var.name, ub))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _float(tok, line_no):
    try:
        return float(tok)
    except ValueError:
        raise MpsParseError(f"invalid number {tok!r}", line_no) from None


def import_mps(text: str) -> LinearModel:
    name = "model"
    sense = MIN
    obj_row = None
    rows: dict[str, str] = {}
    row_order: list[str] = []
    cols: dict[str, dict] = {}
    col_order: list[str] = []
    col_int: dict[str, bool] = {}
    rhs: dict[str, float] = {}
    ranges: dict[str, float] = {}
    bounds: dict[str, list] = {}
    section = None
    in_int = False
    saw_end = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        tokens = raw.split()
        if not raw[0].isspace():
            head = tokens[0].upper()
            if head == "NAME":
                name = tokens[1] if len(tokens) > 1 else name
                section = "NAME"
            elif head == "OBJSENSE":
                section = "OBJSENSE"
                if len(tokens) > 1:
                    sense = MAX if tokens[1].upper().startswith("MAX") else MIN
            elif head in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
                section = head
            elif head == "ENDATA":
                saw_end = True
                break
            else:
                raise MpsParseError(f"unknown section {tokens[0]!r}", line_no)
            continue

        if section == "OBJSENSE":
            sense = MAX if tokens[0].upper().startswith("MAX") else MIN
        elif section == "ROWS":
            if len(tokens) != 2:
                raise MpsParseError("ROWS entry needs a type and a name", line_no)
            code, row = tokens[0].upper(), tokens[1]
            if code == "N":
                if obj_row is None:
                    obj_row = row
                rows[row] = "N"
            elif code in _CODE_SENSE:
                if row in rows:
                    raise MpsParseError(f"duplicate row {row!r}", line_no)
                rows[row] = code
                row_order.append(row)
            else:
                raise MpsParseError(f"unknown row type {code!r}", line_no)
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                tag = tokens[2]
                if tag == "'INTORG'":
                    in_int = True
                elif tag == "'INTEND'":
                    in_int = False
                else:
                    raise MpsParseError(f"unknown marker {tag}", line_no)
                continue
            if len(tokens) not in (3, 5):
                raise MpsParseError("truncated COLUMNS line", line_no)
            col = tokens[0]
            if col not in cols:
                cols[col] = {}
                col_order.append(col)
                col_int[col] = in_int
            for row, val in zip(tokens[1::2], tokens[2::2]):
                if row not in rows:
                    raise MpsParseError(f"unknown row {row!r}", line_no)
                cols[col][row] = cols[col].get(row, 0.0) + _float(val, line_no)
        elif section in ("RHS", "RANGES"):
            body = tokens[1:] if len(tokens) % 2 == 1 else tokens
            if len(body) not in (2, 4):
                raise MpsParseError(f"truncated {section} line", line_no)
            target = rhs if section == "RHS" else ranges
            for row, val in zip(body[0::2], body[1::2]):
                if row not in rows:
                    raise MpsParseError(f"unknown row {row!r}", line_no)
                target[row] = _float(val, line_no)
        elif section == "BOUNDS":
            kind = tokens[0].upper()
            needs_value = kind in ("LO", "UP", "FX", "LI", "UI")
            if needs_value and len(tokens) != 4:
                raise MpsParseError(f"truncated BOUNDS line ({kind} needs a value)", line_no)
            if not needs_value and len(tokens) not in (3, 4):
                raise MpsParseError("truncated BOUNDS line", line_no)
            col = tokens[2]
            if col not in cols:
                raise MpsParseError(f"bound on unknown column {col!r}", line_no)
            value = _float(tokens[3], line_no) if len(tokens) == 4 else None
            bounds.setdefault(col, []).append((kind, value, line_no))
        else:
            raise MpsParseError("data line outside of a section", line_no)

    if not saw_end:
        raise MpsParseError("missing ENDATA")
    if obj_row is None:
        raise MpsParseError("no objective (N) row")

    model = LinearModel(name)
    for col in col_order:
        lb, ub = 0.0, math.inf
        is_int = col_int[col]
        if is_int:
            ub = 1.0
        for kind, value, line_no in bounds.get(col, []):
            if kind in ("LO", "LI"):
                lb = value
            elif kind in ("UP", "UI"):
                ub = value
            elif kind == "FX":
                lb = ub = value
            elif kind == "FR":
                lb, ub = -math.inf, math.inf
            elif kind == "MI":
                lb = -math.inf
            elif kind == "PL":
                ub = math.inf
            elif kind == "BV":
                lb, ub, is_int = 0.0, 1.0, True
            else:
                raise MpsParseError(f"unknown bound type {kind!r}", line_no)
        if is_int and (lb < 0 or ub > 1):
            raise MpsParseError(f"integer column {col!r} is not binary")
        model.add_var(col, lb, ub, BINARY if is_int else CONTINUOUS)

    row_terms = {row: {} for row in row_order}
    obj_terms = {}
    for col in col_order:
        j = model.var_index(col)
        for row, val in cols[col].items():
            if row == obj_row:
                if val != 0.0:
                    obj_terms[j] = val
            elif rows[row] != "N" and val != 0.0:
                row_terms[row][j] = val
    for row in row_order:
        sense_ = _CODE_SENSE[rows[row]]
        b = rhs.get(row, 0.0)
        model.add_constraint(row, LinExpr(row_terms[row]), sense_, b)
        if row in ranges:
            r = ranges[row]
            if sense_ == EQ:
                lo, hi = (b, b + r) if r >= 0 else (b + r, b)
                model.constraints[-1] = model.constraints[-1].__class__(row, row_terms[row], GE, lo)
                model.add_constraint(row + "__range", LinExpr(row_terms[row]), LE, hi)
            elif sense_ == LE:
                model.add_constraint(row + "__range", LinExpr(row_terms[row]), GE, b - abs(r))
            else:
                model.add_constraint(row + "__range", LinExpr(row_terms[row]), LE, b + abs(r))
    model.set_objective(LinExpr(obj_terms, -rhs.get(obj_row, 0.0)), sense)
    return model.freeze()
