"""
A small 0-1/integer linear programming layer: variables, linear expressions,
constraints, a maximization objective, and the Boolean AND/OR gadgets the
encoder builds formulas from. Solving lives in simplex.py and bnb.py.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np


class ModelError(ValueError):
    pass


class VarKind(Enum):
    BINARY = "binary"
    INTEGER = "integer"
    CONTINUOUS = "continuous"

    @property
    def integral(self) -> bool:
        return self is not VarKind.CONTINUOUS


@dataclass(frozen=True, eq=False)
class VarId:
    index: int
    "Dense position in the owning model, assigned in insertion order."

    kind: VarKind
    lo: float
    hi: float
    name: str

    def __eq__(self, other) -> bool:
        return isinstance(other, VarId) and other.index == self.index

    def __hash__(self) -> int:
        return hash(self.index)

    def __lt__(self, other: VarId) -> bool:
        return self.index < other.index

    def __repr__(self) -> str:
        return f"{self.name}#{self.index}"

    # arithmetic promotes to LinExpr
    def __add__(self, other):
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr.of(self) - other

    def __rsub__(self, other):
        return LinExpr.of(other) - LinExpr.of(self)

    def __mul__(self, k):
        return LinExpr.of(self) * k

    __rmul__ = __mul__

    def __neg__(self):
        return LinExpr.of(self) * -1


Number = Union[int, float]


class LinExpr:
    """
    Σ coef·var + constant. Zero coefficients are never stored.
    """

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[VarId, Number] | Iterable[tuple[VarId, Number]] = (), constant: Number = 0):
        self.terms: dict[VarId, float] = {}
        self.constant = constant
        items = terms.items() if isinstance(terms, Mapping) else terms
        for v, c in items:
            self._add_term(v, c)

    @staticmethod
    def of(x: LinExpr | VarId | Number) -> LinExpr:
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, VarId):
            return LinExpr({x: 1})
        return LinExpr(constant=x)

    @staticmethod
    def total(items: Iterable[LinExpr | VarId | Number]) -> LinExpr:
        out = LinExpr()
        for item in items:
            out._iadd(LinExpr.of(item), 1)
        return out

    def _add_term(self, v: VarId, c: Number) -> None:
        c = self.terms.get(v, 0) + c
        if c == 0:
            self.terms.pop(v, None)
        else:
            self.terms[v] = c

    def _iadd(self, other: LinExpr, scale: Number) -> None:
        for v, c in other.terms.items():
            self._add_term(v, scale * c)
        self.constant += scale * other.constant

    def copy(self) -> LinExpr:
        return LinExpr(self.terms, self.constant)

    def __add__(self, other) -> LinExpr:
        out = self.copy()
        out._iadd(LinExpr.of(other), 1)
        return out

    __radd__ = __add__

    def __sub__(self, other) -> LinExpr:
        out = self.copy()
        out._iadd(LinExpr.of(other), -1)
        return out

    def __rsub__(self, other) -> LinExpr:
        return LinExpr.of(other) - self

    def __mul__(self, k: Number) -> LinExpr:
        if not isinstance(k, numbers.Real):
            return NotImplemented
        out = LinExpr()
        out._iadd(self, k)
        return out

    __rmul__ = __mul__

    def __neg__(self) -> LinExpr:
        return self * -1

    def value(self, values: Sequence[float] | np.ndarray) -> float:
        return self.constant + sum(c * values[v.index] for v, c in self.terms.items())

    def __repr__(self) -> str:
        parts = [f"{c:+g} {v.name}" for v, c in sorted(self.terms.items())]
        if self.constant or not parts:
            parts.append(f"{self.constant:+g}")
        return " ".join(parts)


class Sense(Enum):
    LE = "<="
    GE = ">="
    EQ = "="


@dataclass(frozen=True)
class Constraint:
    expr: LinExpr
    "Left-hand side, with any constant already moved into rhs."

    sense: Sense
    rhs: float
    name: str = ""

    def violation(self, values: Sequence[float] | np.ndarray) -> float:
        lhs = self.expr.value(values)
        match self.sense:
            case Sense.LE:
                return max(0.0, lhs - self.rhs)
            case Sense.GE:
                return max(0.0, self.rhs - lhs)
            case Sense.EQ:
                return abs(lhs - self.rhs)


class MipModel:
    """
    Maximization model. Builders are only valid until freeze().
    """

    def __init__(self, name: str = "catmip"):
        self.name = name
        self.variables: list[VarId] = []
        self.constraints: list[Constraint] = []
        self.objective = LinExpr()
        self.frozen = False
        self._names: dict[str, VarId] = {}

    def _check_open(self) -> None:
        if self.frozen:
            raise ModelError(f"model {self.name!r} is frozen")

    def _check_declared(self, expr: LinExpr) -> None:
        for v in expr.terms:
            if v.index >= len(self.variables) or self.variables[v.index].name != v.name:
                raise ModelError(f"variable {v.name!r} is not declared in model {self.name!r}")

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, kind: VarKind = VarKind.BINARY, lo: float = 0, hi: float = 1) -> VarId:
        self._check_open()
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind is VarKind.BINARY and (lo, hi) != (0, 1):
            raise ModelError(f"binary variable {name!r} must have bounds [0,1]")
        if lo > hi:
            raise ModelError(f"variable {name!r} has empty bounds [{lo},{hi}]")
        if kind.integral and (math.isfinite(lo) and lo != math.floor(lo) or math.isfinite(hi) and hi != math.floor(hi)):
            raise ModelError(f"integer variable {name!r} has fractional bounds [{lo},{hi}]")

        v = VarId(len(self.variables), kind, lo, hi, name)
        self.variables.append(v)
        self._names[name] = v
        return v

    def var(self, name: str) -> VarId:
        return self._names[name]

    def bounds(self, v: VarId) -> tuple[float, float]:
        declared = self.variables[v.index]
        return declared.lo, declared.hi

    def fix_var(self, v: VarId, value: float) -> None:
        self._check_open()
        self._check_declared(LinExpr.of(v))
        lo, hi = self.bounds(v)
        if not lo <= value <= hi:
            raise ModelError(f"cannot fix {v.name!r} to {value}: outside [{lo},{hi}]")
        self.variables[v.index] = replace(self.variables[v.index], lo=value, hi=value)

    def add_constraint(self, expr: LinExpr | VarId, sense: Sense, rhs: Number = 0, name: str = "") -> Constraint:
        self._check_open()
        expr = LinExpr.of(expr)
        self._check_declared(expr)
        for c in expr.terms.values():
            if not math.isfinite(c):
                raise ModelError(f"constraint {name!r} has a non-finite coefficient")
        lhs = LinExpr(expr.terms)
        con = Constraint(lhs, sense, rhs - expr.constant, name or f"c{len(self.constraints)}")
        self.constraints.append(con)
        return con

    def set_objective(self, expr: LinExpr | VarId) -> None:
        self._check_open()
        expr = LinExpr.of(expr)
        self._check_declared(expr)
        self.objective = expr.copy()

    def freeze(self) -> MipModel:
        self.frozen = True
        return self

    def lower_bounds(self) -> np.ndarray:
        return np.array([v.lo for v in self.variables], dtype=float)

    def upper_bounds(self) -> np.ndarray:
        return np.array([v.hi for v in self.variables], dtype=float)

    def integer_mask(self) -> np.ndarray:
        return np.array([v.kind.integral for v in self.variables], dtype=bool)

    def violations(self, values: Sequence[float] | np.ndarray, tol: float = 1e-6) -> list[str]:
        "Bound, integrality and constraint violations of a full assignment."
        out = []
        for v in self.variables:
            x = values[v.index]
            if x < v.lo - tol or x > v.hi + tol:
                out.append(f"{v.name}={x} outside [{v.lo},{v.hi}]")
            if v.kind.integral and abs(x - round(x)) > tol:
                out.append(f"{v.name}={x} is not integral")
        for con in self.constraints:
            amount = con.violation(values)
            if amount > tol:
                out.append(f"{con.name}: violated by {amount:g}")
        return out

    def __repr__(self) -> str:
        return f"MipModel({self.name!r}, {self.num_vars} vars, {self.num_constraints} constraints)"


#-----------------------------------------------------------------------------
# Boolean gadgets

def _require_binary(model: MipModel, ids: Iterable[VarId]) -> None:
    for v in ids:
        if model.variables[v.index].kind is not VarKind.BINARY:
            raise ModelError(f"{v.name!r} is not binary")


def encode_bool_and(model: MipModel, out: VarId, ins: Sequence[VarId]) -> None:
    "out = AND(ins) at every integral solution. Empty ins fixes out to 1."
    _require_binary(model, [out, *ins])
    if not ins:
        model.fix_var(out, 1)
        return
    for v in ins:
        model.add_constraint(LinExpr({out: 1, v: -1}), Sense.LE, 0, f"and_{out.name}_{v.name}")
    model.add_constraint(LinExpr.of(out) - LinExpr.total(ins), Sense.GE, 1 - len(ins), f"and_{out.name}")


def encode_bool_or(model: MipModel, out: VarId, ins: Sequence[VarId]) -> None:
    "out = OR(ins) at every integral solution. Empty ins fixes out to 0."
    _require_binary(model, [out, *ins])
    if not ins:
        model.fix_var(out, 0)
        return
    for v in ins:
        model.add_constraint(LinExpr({out: 1, v: -1}), Sense.GE, 0, f"or_{out.name}_{v.name}")
    model.add_constraint(LinExpr.of(out) - LinExpr.total(ins), Sense.LE, 0, f"or_{out.name}")


#-----------------------------------------------------------------------------
# Results

class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    BUDGET_EXCEEDED = "budget-exceeded"


@dataclass
class SolveStats:
    nodes: int = 0
    "LP relaxations solved, root included."

    lp_iterations: int = 0
    wall_time: float = 0.0
    best_bound: float = math.nan
    "Largest LP bound among open nodes when search stopped (the incumbent when optimal)."

    seed: int | None = None


@dataclass
class Solution:
    status: SolveStatus
    objective: float | None
    values: np.ndarray | None
    "Value of every variable by VarId.index, or None without an incumbent."

    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def has_incumbent(self) -> bool:
        return self.values is not None

    def __getitem__(self, v: VarId) -> float:
        if self.values is None:
            raise KeyError(f"no incumbent for {v.name!r}")
        return float(self.values[v.index])

    def value(self, expr: LinExpr | VarId) -> float:
        if self.values is None:
            raise KeyError("no incumbent")
        return LinExpr.of(expr).value(self.values)

    def assignment(self, model: MipModel) -> dict[VarId, float]:
        if self.values is None:
            return {}
        return {v: float(self.values[v.index]) for v in model.variables}
