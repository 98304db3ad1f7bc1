"""
Abstract syntax for MTL formulas whose atoms are capability-augmenting tasks
(CATs), plus the structural transforms the planner needs: horizon,
negation-normal form, augmentation stripping and CAT simplification.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterator, Union

from catmip.world import Capability, Label, Team


class FormulaError(ValueError):
    pass


class UnsupportedFormulaError(FormulaError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi < self.lo:
            raise FormulaError(f"bad interval [{self.lo},{self.hi}]: need 0 <= k1 <= k2")

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class LabelAtom:
    label: Label
    negated: bool = False
    "True encodes the ¬π pseudo-label carried by every node not labeled π."


@dataclass(frozen=True)
class Clause:
    capability: Capability
    threshold: int

    def __post_init__(self) -> None:
        if self.threshold < 1:
            raise FormulaError(f"threshold for {self.capability!r} must be >= 1 (got {self.threshold})")


@dataclass(frozen=True)
class CatAtom:
    target: LabelAtom
    aug: Clause | None = None
    "Augmenting capability and how many holders must be co-located."

    al: Clause | None = None
    "Availability-limiting capability; that many co-located holders disable the collaboration."

    def __post_init__(self) -> None:
        if self.al is not None and self.aug is None:
            raise FormulaError("availability-limiting clause given without an augmenting clause")

    @property
    def plain(self) -> bool:
        return self.aug is None


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Cat:
    atom: CatAtom


@dataclass(frozen=True)
class Not:
    arg: Formula


@dataclass(frozen=True)
class And:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: Formula


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: Formula


@dataclass(frozen=True)
class Until:
    left: Formula
    interval: Interval
    right: Formula


Formula = Union[TrueF, Cat, Not, And, Or, Eventually, Always, Until]


def cat(label: Label, aug: tuple[Capability, int] | None = None, al: tuple[Capability, int] | None = None,
        negated: bool = False) -> Cat:
    "Shorthand used by tests and scenario builders."
    return Cat(CatAtom(
        LabelAtom(label, negated),
        Clause(*aug) if aug else None,
        Clause(*al) if al else None))


def horizon(f: Formula) -> int:
    match f:
        case TrueF() | Cat():
            return 0
        case Not(arg):
            return horizon(arg)
        case And(left, right) | Or(left, right):
            return max(horizon(left), horizon(right))
        case Eventually(interval, arg) | Always(interval, arg):
            return interval.hi + horizon(arg)
        case Until(left, interval, right):
            return interval.hi + max(horizon(left), horizon(right))
    raise TypeError(f"not a formula: {f!r}")


def normalize(f: Formula) -> Formula:
    """
    Push negation down to CAT atoms (or the constant ⊤). Negated Until has
    no dual in this logic and is rejected.
    """
    match f:
        case TrueF() | Cat():
            return f
        case Not(arg):
            return _negate(arg)
        case And(left, right):
            return And(normalize(left), normalize(right))
        case Or(left, right):
            return Or(normalize(left), normalize(right))
        case Eventually(interval, arg):
            return Eventually(interval, normalize(arg))
        case Always(interval, arg):
            return Always(interval, normalize(arg))
        case Until(left, interval, right):
            return Until(normalize(left), interval, normalize(right))
    raise TypeError(f"not a formula: {f!r}")


def _negate(f: Formula) -> Formula:
    match f:
        case TrueF() | Cat():
            return Not(f)
        case Not(arg):
            return normalize(arg)
        case And(left, right):
            return Or(_negate(left), _negate(right))
        case Or(left, right):
            return And(_negate(left), _negate(right))
        case Eventually(interval, arg):
            return Always(interval, _negate(arg))
        case Always(interval, arg):
            return Eventually(interval, _negate(arg))
        case Until():
            raise UnsupportedFormulaError("negated Until has no supported dual")
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    match f:
        case TrueF() | Cat():
            return True
        case Not(arg):
            return isinstance(arg, (TrueF, Cat))
        case And(left, right) | Or(left, right) | Until(left, _, right):
            return is_nnf(left) and is_nnf(right)
        case Eventually(_, arg) | Always(_, arg):
            return is_nnf(arg)
    raise TypeError(f"not a formula: {f!r}")


def map_cats(f: Formula, fn: Callable[[CatAtom], CatAtom]) -> Formula:
    match f:
        case TrueF():
            return f
        case Cat(atom):
            return Cat(fn(atom))
        case Not(arg):
            return Not(map_cats(arg, fn))
        case And(left, right):
            return And(map_cats(left, fn), map_cats(right, fn))
        case Or(left, right):
            return Or(map_cats(left, fn), map_cats(right, fn))
        case Eventually(interval, arg):
            return Eventually(interval, map_cats(arg, fn))
        case Always(interval, arg):
            return Always(interval, map_cats(arg, fn))
        case Until(left, interval, right):
            return Until(map_cats(left, fn), interval, map_cats(right, fn))
    raise TypeError(f"not a formula: {f!r}")


def cats_of(f: Formula) -> Iterator[CatAtom]:
    match f:
        case TrueF():
            return
        case Cat(atom):
            yield atom
        case Not(arg) | Eventually(_, arg) | Always(_, arg):
            yield from cats_of(arg)
        case And(left, right) | Or(left, right) | Until(left, _, right):
            yield from cats_of(left)
            yield from cats_of(right)


def labels_of(f: Formula) -> set[Label]:
    return {atom.target.label for atom in cats_of(f)}


def capabilities_of(f: Formula) -> set[Capability]:
    caps = set()
    for atom in cats_of(f):
        for clause in (atom.aug, atom.al):
            if clause is not None:
                caps.add(clause.capability)
    return caps


def strip_augmentation(f: Formula) -> Formula:
    "The no-CAT baseline: satisfaction decided by node labels alone."
    return map_cats(f, lambda atom: CatAtom(atom.target))


def simplify_cat(atom: CatAtom, team: Team, agent: int | None = None) -> CatAtom:
    """
    Drop clauses that can never matter.

    With agent=None the helper pools are the whole team (I_c). With an agent id
    they are I_c \\ {agent}, which is what evaluation for that agent sees.
    """
    def pool(c: Capability) -> int:
        holders = team.holders(c)
        if agent is not None:
            holders = holders - {agent}
        return len(holders)

    if atom.aug is None:
        return atom
    if atom.aug.threshold > pool(atom.aug.capability):
        return CatAtom(atom.target)
    if atom.al is not None and atom.al.threshold > pool(atom.al.capability):
        return replace(atom, al=None)
    return atom


def simplify_formula(f: Formula, team: Team, agent: int | None = None) -> Formula:
    return map_cats(f, lambda atom: simplify_cat(atom, team, agent))
