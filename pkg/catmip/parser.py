#
# Concrete syntax for CAT-MTL formulas.
#
#   F[0,6] (CAT("Scenic") & F[0,4] CAT("Upload", aug("WiFi",1)))
#   F[0,10] CAT("Goal") & G[0,10] CAT(!"Water", aug("carry",1), limit("wheels",1))
#
# Precedence, tightest first: prefix operators (! F G), &, |, U.
#

from __future__ import annotations

from typing import Collection

from lark import Lark, Token, Transformer
from lark.exceptions import UnexpectedEOF, UnexpectedInput, VisitError

from catmip.formula import (
    Always, And, Cat, CatAtom, Clause, Eventually, Formula, FormulaError, Interval,
    LabelAtom, Not, Or, TrueF, Until)

GRAMMAR = r'''
?start: formula

?formula: disj
    | disj "U" interval formula         -> until

?disj: conj
    | disj "|" conj                     -> or_

?conj: unary
    | conj "&" unary                    -> and_

?unary: primary
    | "!" unary                         -> not_
    | "F" interval unary                -> eventually
    | "G" interval unary                -> always

?primary: "TRUE"                        -> true
    | cat
    | "(" formula ")"

cat: "CAT" "(" labelref ("," clause)* ")"

labelref: NAME                          -> label
    | "!" NAME                          -> neg_label

clause: CLAUSE_KIND "(" NAME "," INT ")"

interval: "[" INT "," INT "]"

CLAUSE_KIND: "aug" | "limit"
NAME: /"[^"\s]+"/

%import common.INT
%import common.WS
%ignore WS
'''

_PARSER = Lark(GRAMMAR, parser='lalr', propagate_positions=True)


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _unquote(tok: Token) -> str:
    return tok.value[1:-1]


class _ToFormula(Transformer):
    def __init__(self, declared_labels: Collection[str] | None, declared_caps: Collection[str] | None):
        super().__init__()
        self.declared_labels = declared_labels
        self.declared_caps = declared_caps

    def _fail(self, message: str, tok: Token):
        raise FormulaSyntaxError(message, tok.line, tok.column)

    def true(self, _children):
        return TrueF()

    def not_(self, children):
        return Not(children[0])

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return Or(children[0], children[1])

    def eventually(self, children):
        return Eventually(children[0], children[1])

    def always(self, children):
        return Always(children[0], children[1])

    def until(self, children):
        return Until(children[0], children[1], children[2])

    def interval(self, children):
        lo, hi = children
        if int(lo) > int(hi):
            self._fail(f"interval [{lo},{hi}] has k1 > k2", lo)
        return Interval(int(lo), int(hi))

    def label(self, children):
        return self._label(children[0], False)

    def neg_label(self, children):
        return self._label(children[0], True)

    def _label(self, tok: Token, negated: bool):
        name = _unquote(tok)
        if self.declared_labels is not None and name not in self.declared_labels:
            self._fail(f"undeclared label {name!r}", tok)
        return LabelAtom(name, negated), tok

    def clause(self, children):
        kind, name_tok, count_tok = children
        name = _unquote(name_tok)
        if self.declared_caps is not None and name not in self.declared_caps:
            self._fail(f"undeclared capability {name!r}", name_tok)
        if int(count_tok) < 1:
            self._fail(f"threshold for {name!r} must be >= 1", count_tok)
        return kind.value, Clause(name, int(count_tok)), kind

    def cat(self, children):
        (target, target_tok), *clauses = children
        aug = al = None
        for kind, clause, tok in clauses:
            if kind == "aug":
                if aug is not None or al is not None:
                    self._fail("aug(...) must come first and only once", tok)
                aug = clause
            else:
                if aug is None:
                    self._fail("limit(...) given without aug(...)", tok)
                if al is not None:
                    self._fail("limit(...) given twice", tok)
                al = clause
        return Cat(CatAtom(target, aug, al))


def parse(text: str,
          declared_labels: Collection[str] | None = None,
          declared_caps: Collection[str] | None = None) -> Formula:
    """
    Parse formula text. When declaration sets are given, every label and
    capability token must appear in them.
    """
    try:
        tree = _PARSER.parse(text)
    except UnexpectedEOF:
        lines = text.splitlines() or [""]
        raise FormulaSyntaxError("unexpected end of formula", len(lines), len(lines[-1]) + 1) from None
    except UnexpectedInput as exc:
        raise FormulaSyntaxError(f"unexpected input {_context(text, exc)!r}", exc.line, exc.column) from None

    try:
        return _ToFormula(declared_labels, declared_caps).transform(tree)
    except VisitError as exc:
        raise exc.orig_exc from None


def _context(text: str, exc: UnexpectedInput) -> str:
    try:
        return exc.get_context(text, span=10).splitlines()[0].strip()
    except (IndexError, AttributeError):
        return text


def _quote(name: str) -> str:
    return f'"{name}"'


def cat_to_text(atom: CatAtom) -> str:
    parts = [("!" if atom.target.negated else "") + _quote(atom.target.label)]
    if atom.aug is not None:
        parts.append(f"aug({_quote(atom.aug.capability)},{atom.aug.threshold})")
    if atom.al is not None:
        parts.append(f"limit({_quote(atom.al.capability)},{atom.al.threshold})")
    return f"CAT({', '.join(parts)})"


def to_text(f: Formula) -> str:
    "Print a formula so that parse(to_text(f)) == f."
    match f:
        case TrueF():
            return "TRUE"
        case Cat(atom):
            return cat_to_text(atom)
        case Not(arg):
            return f"!{to_text(arg)}"
        case And(left, right):
            return f"({to_text(left)} & {to_text(right)})"
        case Or(left, right):
            return f"({to_text(left)} | {to_text(right)})"
        case Eventually(iv, arg):
            return f"F[{iv.lo},{iv.hi}] {to_text(arg)}"
        case Always(iv, arg):
            return f"G[{iv.lo},{iv.hi}] {to_text(arg)}"
        case Until(left, iv, right):
            return f"({to_text(left)} U[{iv.lo},{iv.hi}] {to_text(right)})"
    raise TypeError(f"not a formula: {f!r}")
