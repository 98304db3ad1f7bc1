#!/usr/bin/env python3
"""
Unit tests for the formula language: parsing, printing, horizons, negation
normal form and CAT simplification
"""

import unittest

from hypothesis import assume, given, settings, strategies as st

from catmip.formula import (
    Always, And, Cat, CatAtom, Clause, Eventually, FormulaError, Interval, LabelAtom, Not, Or,
    TrueF, Until, UnsupportedFormulaError, capabilities_of, cat, cats_of, horizon, is_nnf,
    labels_of, normalize, simplify_cat, simplify_formula, strip_augmentation)
from catmip.oracle import TraceTooShort, rho
from catmip.parser import FormulaSyntaxError, parse, to_text
from catmip.world import Agent, Observation, Team, Trace

AERIAL = 'F[0,6] (CAT("Scenic") & F[0,4] CAT("Upload", aug("WiFi",1)))'
GROUND = 'F[0,10] CAT("Goal") & G[0,10] CAT(!"Water", aug("carry",1), limit("wheels",1))'


def fig1_team():
    return Team((
        Agent(1, frozenset({"carry"}), 13),
        Agent(2, frozenset({"WiFi", "wheels"}), 13),
        Agent(3, frozenset({"WiFi", "wheels"}), 13),
    ))


#-----------------------------------------------------------------------------
# Formula generation for property tests

_labels = st.sampled_from(["Goal", "Water", "Scenic"])
_caps = st.sampled_from(["carry", "WiFi", "wheels"])


@st.composite
def cat_atoms(draw):
    target = LabelAtom(draw(_labels), draw(st.booleans()))
    if not draw(st.booleans()):
        return CatAtom(target)
    aug = Clause(draw(_caps), draw(st.integers(1, 2)))
    al = Clause(draw(_caps), draw(st.integers(1, 2))) if draw(st.booleans()) else None
    return CatAtom(target, aug, al)


@st.composite
def intervals(draw):
    lo = draw(st.integers(0, 2))
    return Interval(lo, lo + draw(st.integers(0, 2)))


def formulas(max_depth=3, until=True):
    leaves = st.one_of(st.just(TrueF()), st.builds(Cat, cat_atoms()))

    def extend(children):
        options = [
            st.builds(Not, children),
            st.builds(And, children, children),
            st.builds(Or, children, children),
            st.builds(Eventually, intervals(), children),
            st.builds(Always, intervals(), children)]
        if until:
            options.append(st.builds(Until, children, intervals(), children))
        return st.one_of(*options)

    return st.recursive(leaves, extend, max_leaves=2 ** max_depth)


@st.composite
def traces(draw, length):
    "Observations over the test labels and capabilities, with counts up to 2."
    observations = []
    for _ in range(length):
        labels = frozenset(draw(st.sets(_labels)))
        counts = {c: draw(st.integers(0, 2)) for c in ("carry", "WiFi", "wheels")}
        observations.append(Observation(labels, counts))
    return Trace(1, tuple(observations))


def intervals_of(f):
    match f:
        case Eventually(interval, arg) | Always(interval, arg):
            yield interval
            yield from intervals_of(arg)
        case Until(left, interval, right):
            yield interval
            yield from intervals_of(left)
            yield from intervals_of(right)
        case Not(arg):
            yield from intervals_of(arg)
        case And(left, right) | Or(left, right):
            yield from intervals_of(left)
            yield from intervals_of(right)


class TestParser(unittest.TestCase):

    def test_aerial_spec(self):
        """The aerial agent's task parses into nested Eventually operators"""
        f = parse(AERIAL)
        self.assertEqual(f, Eventually(Interval(0, 6), And(
            cat("Scenic"),
            Eventually(Interval(0, 4), cat("Upload", aug=("WiFi", 1))))))

    def test_ground_spec(self):
        """& binds looser than the prefix operators"""
        f = parse(GROUND)
        self.assertEqual(f, And(
            Eventually(Interval(0, 10), cat("Goal")),
            Always(Interval(0, 10), cat("Water", aug=("carry", 1), al=("wheels", 1), negated=True))))

    def test_precedence(self):
        """& binds tighter than |, and | tighter than U"""
        f = parse('CAT("a") | CAT("b") & CAT("c") U[0,2] TRUE')
        self.assertEqual(f, Until(Or(cat("a"), And(cat("b"), cat("c"))), Interval(0, 2), TrueF()))

    def test_until_right_associative(self):
        """Chained U groups to the right"""
        f = parse('CAT("a") U[0,1] CAT("b") U[1,2] CAT("c")')
        self.assertEqual(f, Until(cat("a"), Interval(0, 1), Until(cat("b"), Interval(1, 2), cat("c"))))

    def test_limit_without_aug(self):
        """An availability-limiting clause needs an augmenting clause before it"""
        with self.assertRaisesRegex(FormulaSyntaxError, "limit"):
            parse('CAT("Water", limit("wheels",1))')

    def test_aug_after_limit(self):
        """Clauses come in the order aug, limit"""
        with self.assertRaises(FormulaSyntaxError):
            parse('CAT("Water", aug("carry",1), aug("WiFi",1))')

    def test_bad_interval(self):
        """k1 > k2 is rejected with its location"""
        with self.assertRaises(FormulaSyntaxError) as ctx:
            parse('F[3,1] CAT("Goal")')
        self.assertEqual(ctx.exception.line, 1)
        self.assertEqual(ctx.exception.column, 3)

    def test_zero_threshold(self):
        """Thresholds start at 1"""
        with self.assertRaises(FormulaSyntaxError):
            parse('CAT("Goal", aug("carry",0))')

    def test_unexpected_token_location(self):
        """Syntax errors report line and column"""
        with self.assertRaises(FormulaSyntaxError) as ctx:
            parse('F[0,1]\n  CAT("Goal") &')
        self.assertEqual(ctx.exception.line, 2)

    def test_garbage(self):
        """Unknown characters are syntax errors, not crashes"""
        with self.assertRaises(FormulaSyntaxError):
            parse('CAT("Goal") # 3')

    def test_undeclared_names(self):
        """With declarations, unknown labels and capabilities are rejected"""
        with self.assertRaisesRegex(FormulaSyntaxError, "undeclared label 'Lava'"):
            parse('CAT("Lava")', declared_labels={"Goal"})
        with self.assertRaisesRegex(FormulaSyntaxError, "undeclared capability 'jetpack'"):
            parse('CAT("Goal", aug("jetpack",1))', declared_labels={"Goal"}, declared_caps={"carry"})

    def test_syntax_error_is_formula_error(self):
        """Callers can catch every formula problem with one exception type"""
        self.assertTrue(issubclass(FormulaSyntaxError, FormulaError))

    def test_print_shipped_specs(self):
        """Printing and re-parsing the shipped specs is the identity"""
        for text in (AERIAL, GROUND):
            f = parse(text)
            self.assertEqual(parse(to_text(f)), f)

    @settings(max_examples=200, deadline=None)
    @given(formulas())
    def test_parse_print_roundtrip(self, f):
        """parse(to_text(f)) == f for generated formulas"""
        self.assertEqual(parse(to_text(f)), f)


class TestTransforms(unittest.TestCase):

    def test_horizons(self):
        """Horizons add up through nested temporal operators"""
        self.assertEqual(horizon(parse(AERIAL)), 10)
        self.assertEqual(horizon(parse(GROUND)), 10)
        self.assertEqual(horizon(parse('G[0,3] F[1,2] CAT("Goal")')), 5)
        self.assertEqual(horizon(parse('CAT("a") U[1,3] F[0,2] CAT("b")')), 5)
        self.assertEqual(horizon(TrueF()), 0)

    def test_normalize_de_morgan(self):
        """Negation moves inward through &, |, F and G"""
        f = Not(And(Eventually(Interval(0, 2), cat("a")), Or(cat("b"), TrueF())))
        expected = Or(Always(Interval(0, 2), Not(cat("a"))), And(Not(cat("b")), Not(TrueF())))
        self.assertEqual(normalize(f), expected)

    def test_normalize_double_negation(self):
        """¬¬φ normalizes to φ"""
        self.assertEqual(normalize(Not(Not(cat("a")))), cat("a"))

    def test_negated_until_rejected(self):
        """Negated Until has no supported dual"""
        with self.assertRaises(UnsupportedFormulaError):
            normalize(Not(Until(cat("a"), Interval(0, 1), cat("b"))))

    def test_is_nnf(self):
        """Only CATs and ⊤ may sit under a negation"""
        self.assertTrue(is_nnf(And(Not(cat("a")), Not(TrueF()))))
        self.assertFalse(is_nnf(Not(Or(cat("a"), cat("b")))))

    @settings(max_examples=200, deadline=None)
    @given(formulas())
    def test_normalize_gives_nnf(self, f):
        """Whenever normalization succeeds the result is in negation normal form"""
        try:
            g = normalize(f)
        except UnsupportedFormulaError:
            return
        self.assertTrue(is_nnf(g))
        self.assertEqual(horizon(g), horizon(f))

    @settings(max_examples=200, deadline=None)
    @given(formulas(), st.data())
    def test_normalize_keeps_meaning(self, f, data):
        """A formula and its normal form score the same on every trace"""
        try:
            g = normalize(f)
        except UnsupportedFormulaError:
            assume(False)
        trace = data.draw(traces(horizon(f) + 1))
        self.assertEqual(rho(trace, g), rho(trace, f))

    @settings(max_examples=200, deadline=None)
    @given(formulas(until=False), st.data())
    def test_normalized_negation_flips_score(self, f, data):
        """Normalizing ¬φ gives a formula scoring exactly -ρ(φ)"""
        trace = data.draw(traces(horizon(f) + 1))
        self.assertEqual(rho(trace, normalize(Not(f))), -rho(trace, f))

    @settings(max_examples=200, deadline=None)
    @given(formulas())
    def test_strip_augmentation_idempotent(self, f):
        """Stripping twice is the same as stripping once, and leaves no clauses"""
        once = strip_augmentation(f)
        self.assertEqual(strip_augmentation(once), once)
        self.assertEqual(capabilities_of(once), set())

    @settings(max_examples=200, deadline=None)
    @given(formulas(), st.data())
    def test_horizon_covers_intervals(self, f, data):
        """The horizon reaches every interval end, and a trace that long is enough"""
        h = horizon(f)
        for interval in intervals_of(f):
            self.assertGreaterEqual(h, interval.hi)
        trace = data.draw(traces(h + 1))
        self.assertIn(rho(trace, f), (-1, 1))
        if h > 0:
            with self.assertRaises(TraceTooShort):
                rho(Trace(1, trace.observations[:h]), f)

    def test_collectors(self):
        """Atoms, labels and capabilities are collected from the whole tree"""
        f = parse(GROUND)
        self.assertEqual(labels_of(f), {"Goal", "Water"})
        self.assertEqual(capabilities_of(f), {"carry", "wheels"})
        self.assertEqual(len(list(cats_of(f))), 2)

    def test_strip_augmentation(self):
        """The baseline keeps labels and drops every clause"""
        f = strip_augmentation(parse(GROUND))
        self.assertEqual(f, And(Eventually(Interval(0, 10), cat("Goal")),
                                Always(Interval(0, 10), cat("Water", negated=True))))


class TestSimplify(unittest.TestCase):

    def setUp(self):
        self.team = fig1_team()

    def test_unreachable_augmentation(self):
        """More helpers than the team holds reduces a CAT to its label"""
        atom = CatAtom(LabelAtom("Water", True), Clause("carry", 2), Clause("wheels", 1))
        self.assertEqual(simplify_cat(atom, self.team), CatAtom(LabelAtom("Water", True)))

    def test_unreachable_limit(self):
        """A limit the team can never reach is dropped"""
        atom = CatAtom(LabelAtom("Water", True), Clause("carry", 1), Clause("wheels", 3))
        self.assertEqual(simplify_cat(atom, self.team), CatAtom(LabelAtom("Water", True), Clause("carry", 1)))

    def test_per_agent_pool(self):
        """Per agent, the agent itself does not count as a helper"""
        atom = CatAtom(LabelAtom("Water", True), Clause("carry", 1), Clause("wheels", 2))
        # team-wide there are two wheels holders, but agent 2 only sees agent 3
        self.assertEqual(simplify_cat(atom, self.team), atom)
        self.assertEqual(simplify_cat(atom, self.team, agent=2), CatAtom(LabelAtom("Water", True), Clause("carry", 1)))
        # the only carrier cannot help itself
        self.assertEqual(simplify_cat(atom, self.team, agent=1), CatAtom(LabelAtom("Water", True)))
        self.assertEqual(simplify_cat(CatAtom(LabelAtom("Goal"), Clause("carry", 1)), self.team, agent=1),
                         CatAtom(LabelAtom("Goal")))

    def test_shipped_specs_unchanged(self):
        """The shipped specs are already as simple as this team allows"""
        for j, text in ((1, AERIAL), (2, GROUND), (3, GROUND)):
            f = parse(text)
            self.assertEqual(simplify_formula(f, self.team, agent=j), f)


if __name__ == '__main__':
    unittest.main()
