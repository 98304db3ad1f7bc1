"""
CPLEX-LP text export, and a reader for the subset this module writes.

Names are mangled to [A-Za-z0-9_]; any name that changed is recorded in a
`\\ name: <mangled> <original>` comment so the reader can restore it. The
objective constant, which the format cannot carry, goes in a
`\\ constant: <value>` comment. Sections with nothing to say are omitted.
"""

from __future__ import annotations

import math
import re

from catmip.mip import LinExpr, MipModel, ModelError, Sense, VarKind
from catmip.textio import format_number, sanitize_lp_name

LINE_WIDTH = 250

_SENSE_TEXT = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}


def _unique(names: list[str]) -> list[str]:
    taken: set[str] = set()
    out = []
    for name in names:
        base = sanitize_lp_name(name)
        candidate, n = base, 1
        while candidate in taken:
            candidate = f"{base}_{n}"
            n += 1
        taken.add(candidate)
        out.append(candidate)
    return out


def _terms(expr: LinExpr, names: list[str]) -> list[str]:
    out = []
    for v, c in sorted(expr.terms.items()):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        text = names[v.index] if mag == 1 else f"{format_number(mag)} {names[v.index]}"
        out.append(f"{sign} {text}")
    if out and out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _wrap(head: str, parts: list[str]) -> list[str]:
    lines, current = [], head
    for part in parts:
        if current.strip() and len(current) + 1 + len(part) > LINE_WIDTH:
            lines.append(current)
            current = "   " + part
        else:
            current += (" " if current.strip() else "") + part
    lines.append(current)
    return lines


def export_lp(model: MipModel) -> str:
    var_names = _unique([v.name for v in model.variables])
    con_names = _unique([c.name for c in model.constraints])

    lines = []
    for v, mangled in zip(model.variables, var_names):
        if mangled != v.name:
            lines.append(f"\\ name: {mangled} {v.name}")
    for con, mangled in zip(model.constraints, con_names):
        if mangled != con.name:
            lines.append(f"\\ row: {mangled} {con.name}")
    if model.objective.constant:
        lines.append(f"\\ constant: {format_number(model.objective.constant)}")

    lines.append("Maximize")
    obj = _terms(model.objective, var_names)
    if not obj and var_names:
        obj = [f"0 {var_names[0]}"]
    lines += _wrap(" obj:", obj)

    if model.constraints:
        lines.append("Subject To")
        for con, name in zip(model.constraints, con_names):
            lhs = _terms(con.expr, var_names)
            if not lhs:
                lhs = [f"0 {var_names[0]}"] if var_names else ["0"]
            lines += _wrap(f" {name}:", lhs + [_SENSE_TEXT[con.sense], format_number(con.rhs)])

    appears = set(model.objective.terms)
    for con in model.constraints:
        appears.update(con.expr.terms)

    bounds = []
    for v, name in zip(model.variables, var_names):
        if v.lo == v.hi:
            bounds.append(f" {name} = {format_number(v.lo)}")
        elif v.kind is VarKind.BINARY:
            continue
        elif v.lo == -math.inf and v.hi == math.inf:
            bounds.append(f" {name} free")
        elif (v.lo, v.hi) != (0, math.inf):
            bounds.append(f" {format_number(v.lo)} <= {name} <= {format_number(v.hi)}")
        elif v not in appears and v.kind is VarKind.CONTINUOUS:
            bounds.append(f" {name} >= 0")
    if bounds:
        lines.append("Bounds")
        lines += bounds

    for title, kind in (("Binaries", VarKind.BINARY), ("Generals", VarKind.INTEGER)):
        members = [name for v, name in zip(model.variables, var_names) if v.kind is kind]
        if members:
            lines.append(title)
            lines += _wrap(" ", members)

    lines.append("End")
    return "\n".join(lines) + "\n"


#-----------------------------------------------------------------------------
# Reader

_SECTIONS = {
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "minimize": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}

_TOKEN = re.compile(r"""
    (?P<label>[A-Za-z_][A-Za-z0-9_.]*)\s*:     |
    (?P<sense><=|>=|=<|=>|<|>|=)               |
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?) |
    (?P<inf>(?i:infinity|inf)\b)               |
    (?P<name>[A-Za-z_][A-Za-z0-9_.]*)          |
    (?P<sign>[+-])                             |
    (?P<bad>\S)
""", re.VERBOSE)

_SENSE_OF = {"<=": Sense.LE, "=<": Sense.LE, "<": Sense.LE,
             ">=": Sense.GE, "=>": Sense.GE, ">": Sense.GE, "=": Sense.EQ}


def _tokens(text: str):
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "bad":
            raise ModelError(f"LP text: unexpected character {m.group()!r}")
        value = m.group("label") if kind == "label" else m.group()
        yield kind, value


def _parse_statements(text: str) -> list[tuple[str, list[tuple[str, float]], str | None, float | None]]:
    "Split a section into (label, terms, sense, rhs) statements."
    out = []
    label, terms, sense, rhs = "", [], None, None
    sign, coef = 1.0, None

    def flush():
        nonlocal label, terms, sense, rhs
        if terms or sense is not None:
            out.append((label, terms, sense, rhs))
        label, terms, sense, rhs = "", [], None, None

    for kind, value in _tokens(text):
        if kind == "label":
            flush()
            label = value
        elif kind == "sign":
            sign = -sign if value == "-" else sign
        elif kind == "num":
            if sense is not None:
                rhs = sign * float(value)
                sign = 1.0
                flush()
            else:
                coef = float(value)
        elif kind == "inf":
            if sense is None:
                raise ModelError("LP text: infinity inside an expression")
            rhs = sign * math.inf
            sign = 1.0
            flush()
        elif kind == "name":
            terms.append((value, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        elif kind == "sense":
            sense = value
            sign, coef = 1.0, None
    flush()
    return out


def _parse_bound(line: str, info: dict) -> None:
    toks = list(_tokens(line))
    if len(toks) == 2 and toks[0][0] == "name" and toks[1][1].lower() == "free":
        info[toks[0][1]].update(lo=-math.inf, hi=math.inf)
        return

    def number(i: int) -> tuple[float, int]:
        sign = 1.0
        if toks[i][0] == "sign":
            sign = -1.0 if toks[i][1] == "-" else 1.0
            i += 1
        kind, value = toks[i]
        if kind == "num":
            return sign * float(value), i + 1
        if kind == "inf":
            return sign * math.inf, i + 1
        raise ModelError(f"LP text: bad bound line {line.strip()!r}")

    if toks[0][0] == "name":
        name, sense = toks[0][1], _SENSE_OF[toks[1][1]]
        value, _ = number(2)
        if sense is Sense.EQ:
            info[name].update(lo=value, hi=value)
        elif sense is Sense.LE:
            info[name]["hi"] = value
        else:
            info[name]["lo"] = value
        return

    lo, i = number(0)
    first = _SENSE_OF[toks[i][1]]
    name = toks[i + 1][1]
    if first is Sense.EQ:
        info[name].update(lo=lo, hi=lo)
    elif first is Sense.GE:
        info[name]["hi"] = lo
    else:
        info[name]["lo"] = lo
    if len(toks) > i + 2:
        second = _SENSE_OF[toks[i + 2][1]]
        value, _ = number(i + 3)
        if second is Sense.LE:
            info[name]["hi"] = value
        else:
            info[name]["lo"] = value


def read_lp(text: str) -> MipModel:
    """
    Read CPLEX-LP text back into a model. Variables are declared in order of
    first appearance, so indices can differ from the exported model while
    names, kinds, bounds, constraints and objective agree.
    """
    renames: dict[str, str] = {}
    row_renames: dict[str, str] = {}
    constant = 0.0
    sections: dict[str, list[str]] = {}
    current = None

    for raw in text.splitlines():
        if raw.startswith("\\ name: "):
            mangled, _, original = raw[len("\\ name: "):].partition(" ")
            renames[mangled] = original
            continue
        if raw.startswith("\\ row: "):
            mangled, _, original = raw[len("\\ row: "):].partition(" ")
            row_renames[mangled] = original
            continue
        if raw.startswith("\\ constant: "):
            constant = float(raw[len("\\ constant: "):])
            continue
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key == "min":
            raise ModelError("LP text: only Maximize objectives are supported")
        if key is not None:
            current = key
            sections.setdefault(current, [])
            if current == "end":
                break
            continue
        if current is None:
            raise ModelError(f"LP text: statement outside any section: {line!r}")
        sections[current].append(line)

    if "obj" not in sections:
        raise ModelError("LP text: no Maximize section")

    order: list[str] = []
    info: dict[str, dict] = {}

    def see(name: str) -> None:
        if name not in info:
            order.append(name)
            info[name] = {"kind": VarKind.CONTINUOUS, "lo": 0.0, "hi": math.inf}

    objective = _parse_statements(" ".join(sections["obj"]))
    constraints = _parse_statements(" ".join(sections.get("st", [])))
    for _, terms, _, _ in objective + constraints:
        for name, _ in terms:
            see(name)

    for line in sections.get("bounds", []):
        for kind, value in _tokens(line):
            if kind == "name" and value.lower() != "free":
                see(value)
        _parse_bound(line, info)
    for key, kind in (("bin", VarKind.BINARY), ("gen", VarKind.INTEGER)):
        for line in sections.get(key, []):
            for name in line.split():
                see(name)
                info[name]["kind"] = kind

    model = MipModel()
    ids = {}
    for name in order:
        entry = info[name]
        original = renames.get(name, name)
        if entry["kind"] is VarKind.BINARY:
            ids[name] = model.add_var(original, VarKind.BINARY)
            if entry["lo"] == entry["hi"]:
                model.fix_var(ids[name], entry["lo"])
        else:
            ids[name] = model.add_var(original, entry["kind"], entry["lo"], entry["hi"])

    if objective:
        _, terms, _, _ = objective[0]
        model.set_objective(LinExpr([(ids[n], c) for n, c in terms], constant))
    for label, terms, sense, rhs in constraints:
        if sense is None or rhs is None:
            raise ModelError(f"LP text: constraint {label!r} has no sense or right-hand side")
        model.add_constraint(LinExpr([(ids[n], c) for n, c in terms]), _SENSE_OF[sense], rhs,
                             row_renames.get(label, label))
    return model.freeze()
