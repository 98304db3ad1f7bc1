#!/usr/bin/env python3
"""
Unit tests for trace semantics, performance and the exhaustive planner
"""

import itertools
import unittest

from hypothesis import given, settings, strategies as st

from catmip.formula import (
    Always, And, Cat, CatAtom, Clause, Eventually, Interval, LabelAtom, Not, Or, TrueF, Until, cat, horizon)
from catmip.oracle import (
    SearchBudgetExceeded, TraceTooShort, brute_force_plan, default_big_m, eval_cat, evaluate_plan,
    holds, motion_cost, performance, rho)
from catmip.parser import parse
from catmip.world import Agent, GroupTrajectory, Observation, Team, Trace, build_grid


def literal_cat(in_label, n_aug, n_al, m_aug, m_al):
    "π ∈ L(q) ∨ (n ≥ m_aug ∧ n < m_al), with m_al = ∞ when there is no limit."
    return in_label or (n_aug >= m_aug and n_al < m_al)


def label_trace(*labels, counts=None):
    "Single-agent trace whose k-th observation carries labels[k]."
    return Trace(1, tuple(Observation(frozenset(l), counts or {}) for l in labels))


class TestCatSemantics(unittest.TestCase):

    def test_truth_table(self):
        """eval_cat matches the literal CAT definition on every combination"""
        mismatches = []
        for in_label, n_aug, n_al, m_aug, m_al, limited, negated in itertools.product(
                (False, True), range(4), range(4), (1, 2), (1, 2), (False, True), (False, True)):
            labels = frozenset({"Water"}) if in_label != negated else frozenset()
            obs = Observation(labels, {"carry": n_aug, "wheels": n_al})
            atom = CatAtom(LabelAtom("Water", negated), Clause("carry", m_aug),
                           Clause("wheels", m_al) if limited else None)
            expected = literal_cat(in_label, n_aug, n_al, m_aug, m_al if limited else float("inf"))
            if eval_cat(obs, atom) != expected:
                mismatches.append((in_label, n_aug, n_al, m_aug, m_al, limited, negated))
        self.assertEqual(mismatches, [])

    def test_same_capability_for_both_clauses(self):
        """When both clauses name one capability the count must land in [m_aug, m_al)"""
        atom = CatAtom(LabelAtom("Goal"), Clause("wheels", 1), Clause("wheels", 2))
        results = [eval_cat(Observation(frozenset(), {"wheels": n}), atom) for n in range(4)]
        self.assertEqual(results, [False, True, False, False])

    def test_plain_label(self):
        """Without clauses a CAT is a plain label proposition"""
        self.assertTrue(eval_cat(Observation(frozenset({"Goal"}), {}), CatAtom(LabelAtom("Goal"))))
        self.assertFalse(eval_cat(Observation(frozenset(), {"carry": 5}), CatAtom(LabelAtom("Goal"))))


class TestRho(unittest.TestCase):

    def test_eventually_and_always(self):
        """F and G look inside their window only"""
        trace = label_trace([], [], ["Goal"], [])
        self.assertEqual(rho(trace, Eventually(Interval(0, 2), cat("Goal"))), 1)
        self.assertEqual(rho(trace, Eventually(Interval(0, 1), cat("Goal"))), -1)
        self.assertEqual(rho(trace, Always(Interval(0, 1), cat("Goal", negated=True))), 1)
        self.assertEqual(rho(trace, Always(Interval(0, 3), cat("Goal", negated=True))), -1)

    def test_until_needs_left_through_right(self):
        """Left must hold on every step up to and including the step right holds"""
        supply = cat("Supply")
        away = cat("Village", negated=True)
        f = Until(away, Interval(0, 3), supply)

        self.assertEqual(rho(label_trace([], ["Supply"], [], ["Village"]), f), 1)
        self.assertEqual(rho(label_trace([], ["Village"], ["Supply"], []), f), -1)
        # right at k=0 only needs left at k=0
        self.assertEqual(rho(label_trace(["Supply"], ["Village"], [], []), f), 1)
        # left must hold at the satisfying instant too
        self.assertEqual(rho(label_trace([], ["Supply", "Village"], [], []), f), -1)

    def test_until_window_start(self):
        """Right holding before the window opens does not count"""
        f = Until(TrueF(), Interval(2, 3), cat("Supply"))
        self.assertEqual(rho(label_trace(["Supply"], [], [], []), f), -1)
        self.assertEqual(rho(label_trace([], [], [], ["Supply"]), f), 1)

    def test_negation(self):
        """¬ flips the sign"""
        trace = label_trace(["Goal"])
        self.assertEqual(rho(trace, Not(cat("Goal"))), -1)
        self.assertEqual(rho(trace, Not(TrueF())), -1)

    def test_trace_too_short(self):
        """A formula window past the trace end is an error, not a silent -1"""
        with self.assertRaises(TraceTooShort):
            rho(label_trace([], []), Eventually(Interval(0, 2), cat("Goal")))

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_rho_agrees_with_holds(self, data):
        """The ±1 metric and the Boolean evaluator agree everywhere"""
        f = data.draw(_formulas)
        n = horizon(f) + 1
        observations = tuple(
            Observation(frozenset(data.draw(st.sets(st.sampled_from(["a", "b"])))),
                        {"c": data.draw(st.integers(0, 2)), "d": data.draw(st.integers(0, 2))})
            for _ in range(n))
        trace = Trace(1, observations)
        self.assertEqual(rho(trace, f) == 1, holds(trace, f))


@st.composite
def _atoms(draw):
    target = LabelAtom(draw(st.sampled_from(["a", "b"])), draw(st.booleans()))
    if draw(st.booleans()):
        return Cat(CatAtom(target))
    al = Clause("d", draw(st.integers(1, 2))) if draw(st.booleans()) else None
    return Cat(CatAtom(target, Clause("c", draw(st.integers(1, 2))), al))


_windows = st.builds(lambda lo, w: Interval(lo, lo + w), st.integers(0, 1), st.integers(0, 2))

_formulas = st.recursive(
    st.one_of(st.just(TrueF()), _atoms()),
    lambda children: st.one_of(
        st.builds(Not, children),
        st.builds(And, children, children),
        st.builds(Or, children, children),
        st.builds(Eventually, _windows, children),
        st.builds(Always, _windows, children),
        st.builds(Until, children, _windows, children)),
    max_leaves=6)


class TestPerformance(unittest.TestCase):

    def setUp(self):
        self.env = build_grid(1, 3, {(1, 3): ["Goal"]})
        self.team = Team((Agent(1, frozenset(), 1),))
        self.spec = Eventually(Interval(0, 2), cat("Goal"))

    def test_motion_cost_skips_self_loops(self):
        """Only moves between distinct nodes cost"""
        traj = GroupTrajectory.from_paths([[1, 1, 2, 2, 3]])
        self.assertEqual(motion_cost(traj, 1), 2)

    def test_satisfied(self):
        """P = M − J for a satisfied agent"""
        traj = GroupTrajectory.from_paths([[1, 2, 3]])
        p = performance(self.env, self.team, traj, self.spec, 1, 50)
        self.assertTrue(p.satisfied)
        self.assertEqual((p.motion_cost, p.performance), (2, 48))

    def test_unsatisfied(self):
        """P = −M − J for an unsatisfied agent"""
        traj = GroupTrajectory.from_paths([[1, 2, 2]])
        p = performance(self.env, self.team, traj, self.spec, 1, 50)
        self.assertFalse(p.satisfied)
        self.assertEqual(p.performance, -51)

    def test_small_m_warns(self):
        """M below the horizon is allowed but recorded"""
        traj = GroupTrajectory.from_paths([[1, 2, 3]])
        with self.assertLogs("catmip.oracle", level="WARNING"):
            p = performance(self.env, self.team, traj, self.spec, 1, 1)
        self.assertEqual(len(p.warnings), 1)

    def test_default_big_m(self):
        """M is 50 unless the horizon reaches it"""
        self.assertEqual(default_big_m(10), 50)
        self.assertEqual(default_big_m(49), 50)
        self.assertEqual(default_big_m(60), 61)


class TestBruteForce(unittest.TestCase):

    def test_two_nodes(self):
        """One agent, one move: M − 1"""
        env = build_grid(1, 2, {(1, 2): ["Goal"]})
        team = Team((Agent(1, frozenset(), 1),))
        result = brute_force_plan(env, team, {1: Eventually(Interval(0, 1), cat("Goal"))}, big_m=10)
        self.assertEqual(result.objective, 9)
        self.assertEqual(result.trajectory.path(1), (1, 2))

    def test_unsatisfiable_stays_put(self):
        """When the task cannot be met the best plan spends nothing"""
        env = build_grid(1, 3, {(1, 3): ["Goal"]})
        team = Team((Agent(1, frozenset(), 1),))
        result = brute_force_plan(env, team, {1: Eventually(Interval(0, 1), cat("Goal"))}, big_m=10)
        self.assertEqual(result.objective, -10)
        self.assertEqual(result.trajectory.path(1), (1, 1))

    def test_carry_over_water(self):
        """A ground agent crosses water only alongside a carrier"""
        env = build_grid(1, 3, {(1, 2): ["Water"], (1, 3): ["Goal"]})
        team = Team((Agent(1, frozenset({"carry"}), 1), Agent(2, frozenset({"wheels"}), 1)))
        specs = {
            1: TrueF(),
            2: parse('F[0,2] CAT("Goal") & G[0,2] CAT(!"Water", aug("carry",1))'),
        }
        result = brute_force_plan(env, team, specs, big_m=10)
        # carrier moves once to the water cell, the ground agent twice
        self.assertEqual(result.objective, 10 - 1 + 10 - 2)
        self.assertEqual(result.trajectory.path(2), (1, 2, 3))
        self.assertEqual(result.trajectory.at(1, 1), 2)

        reports = evaluate_plan(env, team, result.trajectory, specs, 10)
        self.assertEqual(sum(r.performance for r in reports), result.objective)

    def test_workers_agree(self):
        """Splitting the search over processes returns the same plan"""
        env = build_grid(2, 2, {(2, 2): ["Goal"], (1, 2): ["Water"]})
        team = Team((Agent(1, frozenset({"carry"}), 1), Agent(2, frozenset({"wheels"}), 1)))
        specs = {
            1: Eventually(Interval(0, 2), cat("Goal")),
            2: parse('F[0,2] CAT("Goal") & G[0,2] CAT(!"Water", aug("carry",1))'),
        }
        one = brute_force_plan(env, team, specs, big_m=10)
        two = brute_force_plan(env, team, specs, big_m=10, workers=2)
        self.assertEqual(one.objective, two.objective)
        self.assertEqual(one.trajectory, two.trajectory)

    def test_budget(self):
        """The candidate budget stops runaway searches"""
        env = build_grid(3, 3)
        team = Team((Agent(1, frozenset(), 1), Agent(2, frozenset(), 1)))
        specs = {1: Eventually(Interval(0, 4), TrueF()), 2: Eventually(Interval(0, 4), TrueF())}
        with self.assertRaises(SearchBudgetExceeded):
            brute_force_plan(env, team, specs, budget=100)


if __name__ == '__main__':
    unittest.main()
