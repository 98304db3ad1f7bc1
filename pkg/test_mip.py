#!/usr/bin/env python3
"""
Unit tests for the MIP layer: model building, the simplex LP relaxation,
branch-and-bound, Boolean gadgets and CPLEX-LP text
"""

import itertools
import math
import os
import time
import unittest

import numpy as np

from catmip.bnb import AUTO_BNB_MAX_VARS, TIME_BUDGET_ENV, Backend, SolveOptions, solve
from catmip.lpformat import export_lp, read_lp
from catmip.mip import (
    LinExpr, MipModel, ModelError, Sense, SolveStatus, VarKind, encode_bool_and, encode_bool_or)
from catmip.simplex import LinearRelaxation, LPEngine, UnboundedLPError, lp_relax, simplex
from catmip.textio import sanitize_lp_name

SLOW = os.environ.get("CATMIP_SLOW_TESTS") == "1"


def knapsack():
    "max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5: integer optimum 9 (a, b), LP bound 32/3."
    m = MipModel("knapsack")
    a, b, c = m.add_var("a"), m.add_var("b"), m.add_var("c")
    m.add_constraint(2 * a + 3 * b + c, Sense.LE, 5, "weight")
    m.set_objective(5 * a + 4 * b + 3 * c)
    return m.freeze(), (a, b, c)


def random_model(rng, n, m):
    "Random 0-1 model with small integer data, plus its enumerated optimum (None if infeasible)."
    model = MipModel(f"random{n}x{m}")
    xs = [model.add_var(f"x{i}") for i in range(n)]
    rows = []
    for r in range(m):
        coefs = rng.integers(-4, 5, size=n)
        sense = Sense.EQ if rng.random() < 0.1 else (Sense.LE, Sense.GE)[int(rng.integers(2))]
        rhs = int(rng.integers(-2, 5))
        model.add_constraint(LinExpr(zip(xs, coefs.tolist())), sense, rhs, f"r{r}")
        rows.append((coefs, sense, rhs))
    obj = rng.integers(-5, 8, size=n)
    model.set_objective(LinExpr(zip(xs, obj.tolist()), int(rng.integers(-3, 4))))
    model.freeze()

    best = None
    for bits in itertools.product((0, 1), repeat=n):
        x = np.array(bits)
        ok = True
        for coefs, sense, rhs in rows:
            lhs = int(coefs @ x)
            if (sense is Sense.LE and lhs > rhs) or (sense is Sense.GE and lhs < rhs) or \
                    (sense is Sense.EQ and lhs != rhs):
                ok = False
                break
        if ok:
            value = model.objective.value(x)
            best = value if best is None else max(best, value)
    return model, best


class TestModel(unittest.TestCase):

    def test_linexpr_arithmetic(self):
        """Expressions combine terms and drop zero coefficients"""
        m = MipModel()
        x, y = m.add_var("x"), m.add_var("y")
        e = 2 * x + y - x - y + 3
        self.assertEqual(dict(e.terms), {x: 1})
        self.assertEqual(e.constant, 3)
        self.assertEqual(LinExpr.total([x, y, x]).terms, {x: 2, y: 1})

    def test_constant_moves_to_rhs(self):
        """A constant on the left becomes part of the right-hand side"""
        m = MipModel()
        x = m.add_var("x")
        con = m.add_constraint(x + 2, Sense.LE, 5)
        self.assertEqual(con.rhs, 3)
        self.assertEqual(con.expr.constant, 0)
        self.assertEqual(con.name, "c0")

    def test_duplicate_name(self):
        """Variable names are unique within a model"""
        m = MipModel()
        m.add_var("x")
        with self.assertRaises(ModelError):
            m.add_var("x")

    def test_undeclared_variable(self):
        """Constraints may only use the model's own variables"""
        m1, m2 = MipModel("one"), MipModel("two")
        x = m1.add_var("x")
        m2.add_var("y")
        with self.assertRaises(ModelError):
            m2.add_constraint(LinExpr.of(x), Sense.LE, 1)

    def test_frozen(self):
        """A frozen model rejects further building"""
        m, _ = knapsack()
        with self.assertRaises(ModelError):
            m.add_var("d")

    def test_solve_requires_frozen(self):
        """Only frozen models are solved"""
        m = MipModel()
        m.add_var("x")
        with self.assertRaises(ModelError):
            solve(m)

    def test_bad_bounds(self):
        """Binaries are [0,1] and integer bounds are integral"""
        m = MipModel()
        with self.assertRaises(ModelError):
            m.add_var("b", VarKind.BINARY, 0, 2)
        with self.assertRaises(ModelError):
            m.add_var("i", VarKind.INTEGER, 0, 2.5)
        with self.assertRaises(ModelError):
            m.add_var("c", VarKind.CONTINUOUS, 3, 1)

    def test_violations(self):
        """violations() names each broken bound, integrality and row"""
        m, (a, b, c) = knapsack()
        self.assertEqual(m.violations([1, 1, 0]), [])
        self.assertEqual(m.violations([1, 1, 1]), ["weight: violated by 1"])
        self.assertEqual(m.violations([0.5, 0, 0]), ["a=0.5 is not integral"])


class TestSimplex(unittest.TestCase):

    def test_lp_bound(self):
        """The knapsack relaxation takes c, a and two thirds of b"""
        m, _ = knapsack()
        self.assertAlmostEqual(lp_relax(m), 32 / 3, places=9)

    def test_lp_fixings(self):
        """Fixings tighten the bound, and impossible ones make it infeasible"""
        m, (a, b, c) = knapsack()
        self.assertAlmostEqual(lp_relax(m, {a: 0}), 4 + 3, places=9)
        self.assertIsNone(lp_relax(m, {a: 1, b: 1, c: 1}))
        with self.assertRaises(ModelError):
            lp_relax(m, {a: 2})

    def test_equality_and_ge_rows(self):
        """Rows of every sense, with a starting point the slacks cannot absorb"""
        # max x + y  s.t. x + y = 4, x - y >= 1, 0 <= x <= 3, 0 <= y <= 3
        A = np.array([[1.0, 1.0], [1.0, -1.0]])
        result = simplex(A, np.array([4.0, 1.0]), np.array([0, 1]), np.array([1.0, 1.0]),
                         np.zeros(2), np.full(2, 3.0))
        self.assertTrue(result.feasible)
        self.assertAlmostEqual(result.objective, 4.0)
        self.assertAlmostEqual(result.x[0] + result.x[1], 4.0)
        self.assertGreaterEqual(result.x[0] - result.x[1], 1.0 - 1e-9)

    def test_infeasible(self):
        """x <= 1 and x >= 2 has no solution"""
        A = np.array([[1.0], [1.0]])
        result = simplex(A, np.array([1.0, 2.0]), np.array([-1, 1]), np.array([1.0]),
                         np.zeros(1), np.full(1, 5.0))
        self.assertFalse(result.feasible)

    def test_unbounded(self):
        """An unbounded direction is reported, not looped on"""
        A = np.array([[1.0, -1.0]])
        with self.assertRaises(UnboundedLPError):
            simplex(A, np.array([1.0]), np.array([-1]), np.array([1.0, 0.0]),
                    np.zeros(2), np.full(2, np.inf))

    def test_free_variable(self):
        """Free variables start at zero and move both ways"""
        # max -x  s.t. x >= -2, x free
        result = simplex(np.array([[1.0]]), np.array([-2.0]), np.array([1]), np.array([-1.0]),
                         np.full(1, -np.inf), np.full(1, np.inf))
        self.assertAlmostEqual(result.objective, 2.0)


class TestBranchAndBound(unittest.TestCase):

    def test_knapsack(self):
        """The integer optimum is below the LP bound"""
        m, (a, b, c) = knapsack()
        sol = solve(m)
        self.assertIs(sol.status, SolveStatus.OPTIMAL)
        self.assertEqual(sol.objective, 9)
        self.assertEqual([sol[a], sol[b], sol[c]], [1, 1, 0])
        self.assertGreaterEqual(sol.stats.nodes, 1)

    def test_infeasible(self):
        """No incumbent means infeasible, not an exception"""
        m = MipModel()
        x, y = m.add_var("x"), m.add_var("y")
        m.add_constraint(x + y, Sense.EQ, 3)
        m.freeze()
        sol = solve(m)
        self.assertIs(sol.status, SolveStatus.INFEASIBLE)
        self.assertFalse(sol.has_incumbent)

    def test_general_integer(self):
        """Integer variables with wider bounds are branched on too"""
        # max x + y  s.t. 2x + 2y <= 7, x, y in [0, 5]
        m = MipModel()
        x = m.add_var("x", VarKind.INTEGER, 0, 5)
        y = m.add_var("y", VarKind.INTEGER, 0, 5)
        m.add_constraint(2 * x + 2 * y, Sense.LE, 7)
        m.set_objective(x + y)
        sol = solve(m.freeze())
        self.assertEqual(sol.objective, 3)

    def test_node_budget(self):
        """Running out of nodes is reported with the best bound seen"""
        rng = np.random.default_rng(5)
        model, _ = random_model(rng, 12, 6)
        sol = solve(model, SolveOptions(node_budget=1))
        self.assertIn(sol.status, (SolveStatus.BUDGET_EXCEEDED, SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE))
        if sol.status is SolveStatus.BUDGET_EXCEEDED and sol.has_incumbent:
            self.assertGreaterEqual(sol.stats.best_bound, sol.objective)

    def test_environment_budget(self):
        """CATMIP_TIME_BUDGET_S overrides the wall-time budget"""
        old = os.environ.get(TIME_BUDGET_ENV)
        os.environ[TIME_BUDGET_ENV] = "2.5"
        try:
            self.assertEqual(SolveOptions.from_environment().time_budget_s, 2.5)
            os.environ[TIME_BUDGET_ENV] = "soon"
            with self.assertLogs("catmip.bnb", level="WARNING"):
                self.assertEqual(SolveOptions.from_environment().time_budget_s, 60.0)
        finally:
            if old is None:
                del os.environ[TIME_BUDGET_ENV]
            else:
                os.environ[TIME_BUDGET_ENV] = old

    def test_matches_enumeration(self):
        """Branch-and-bound equals brute-force enumeration on random 0-1 models"""
        rng = np.random.default_rng(20240601)
        max_vars = 15 if SLOW else 9
        for trial in range(200):
            n = int(rng.integers(1, max_vars + 1))
            model, best = random_model(rng, n, int(rng.integers(1, 6)))
            sol = solve(model, SolveOptions(backend=Backend.BNB))
            if best is None:
                self.assertIs(sol.status, SolveStatus.INFEASIBLE, f"trial {trial}")
            else:
                self.assertIs(sol.status, SolveStatus.OPTIMAL, f"trial {trial}")
                self.assertAlmostEqual(sol.objective, best, places=6, msg=f"trial {trial}")
                self.assertEqual(model.violations(sol.values), [], f"trial {trial}")


class TestBudgetsAndBackends(unittest.TestCase):

    def test_simplex_deadline(self):
        """A passed deadline stops the simplex and says so instead of raising"""
        A = np.array([[2.0, 3.0, 1.0]])
        result = simplex(A, np.array([5.0]), np.array([-1]), np.array([5.0, 4.0, 3.0]),
                         np.zeros(3), np.ones(3), deadline=time.monotonic() - 1)
        self.assertTrue(result.exhausted)
        self.assertFalse(result.feasible)

    def test_iteration_limit(self):
        """Running out of pivots is reported the same way as the deadline"""
        A = np.array([[2.0, 3.0, 1.0]])
        result = simplex(A, np.array([5.0]), np.array([-1]), np.array([5.0, 4.0, 3.0]),
                         np.zeros(3), np.ones(3), max_iterations=0)
        self.assertTrue(result.exhausted)

    def test_relaxation_deadline(self):
        """Both LP engines give up at once when the deadline has passed"""
        m, _ = knapsack()
        for engine in LPEngine:
            result = LinearRelaxation(m, engine).solve(deadline=time.monotonic() - 1)
            self.assertTrue(result.exhausted, engine)

    def test_lp_engines_agree(self):
        """HiGHS and the dense simplex give the same relaxation bounds"""
        m, (a, b, c) = knapsack()
        self.assertAlmostEqual(lp_relax(m, engine=LPEngine.HIGHS), 32 / 3, places=6)
        self.assertAlmostEqual(lp_relax(m, {a: 0}, engine=LPEngine.HIGHS), 7, places=6)
        self.assertIsNone(lp_relax(m, {a: 1, b: 1, c: 1}, engine=LPEngine.HIGHS))

        rng = np.random.default_rng(8)
        for trial in range(30):
            model, _ = random_model(rng, int(rng.integers(1, 10)), int(rng.integers(1, 6)))
            dense = lp_relax(model)
            sparse = lp_relax(model, engine=LPEngine.HIGHS)
            if dense is None:
                self.assertIsNone(sparse, f"trial {trial}")
            else:
                self.assertAlmostEqual(sparse, dense, places=5, msg=f"trial {trial}")

    def test_time_budget_inside_root_lp(self):
        """A zero time budget ends the search without an incumbent or a bound"""
        m, _ = knapsack()
        sol = solve(m, SolveOptions(backend=Backend.BNB, time_budget_s=0.0))
        self.assertIs(sol.status, SolveStatus.BUDGET_EXCEEDED)
        self.assertFalse(sol.has_incumbent)
        self.assertEqual(sol.stats.best_bound, math.inf)

    def test_dive_finds_incumbent(self):
        """With a one-node budget the root dive still supplies the optimum as incumbent"""
        m, (a, b, c) = knapsack()
        sol = solve(m, SolveOptions(backend=Backend.BNB, node_budget=1))
        self.assertIs(sol.status, SolveStatus.BUDGET_EXCEEDED)
        self.assertEqual(sol.objective, 9)
        self.assertEqual([sol[a], sol[b], sol[c]], [1, 1, 0])
        self.assertAlmostEqual(sol.stats.best_bound, 32 / 3, places=6)

    def test_dive_off(self):
        """Without diving the one-node search ends with nothing in hand"""
        m, _ = knapsack()
        sol = solve(m, SolveOptions(backend=Backend.BNB, node_budget=1, dive_every=0))
        self.assertIs(sol.status, SolveStatus.BUDGET_EXCEEDED)
        self.assertFalse(sol.has_incumbent)

    def test_fixings(self):
        """Held variables are respected by every backend"""
        m, (a, b, c) = knapsack()
        for backend in (Backend.BNB, Backend.HIGHS):
            sol = solve(m, SolveOptions(backend=backend), fixings={a: 0})
            self.assertEqual(sol.objective, 7, backend)
            self.assertEqual([sol[a], sol[b], sol[c]], [0, 1, 1], backend)

    def test_auto_backend(self):
        """Auto keeps small models in-house and sends large ones to HiGHS"""
        m, _ = knapsack()
        self.assertIs(SolveOptions().backend_for(m), Backend.BNB)

        big = MipModel("wide")
        xs = [big.add_var(f"x{i}") for i in range(AUTO_BNB_MAX_VARS + 1)]
        big.add_constraint(LinExpr.total(xs), Sense.LE, 10, "cap")
        big.set_objective(LinExpr.total(xs))
        big.freeze()
        self.assertIs(SolveOptions().backend_for(big), Backend.HIGHS)
        self.assertIs(SolveOptions(backend=Backend.BNB).backend_for(big), Backend.BNB)

        sol = solve(big)
        self.assertIs(sol.status, SolveStatus.OPTIMAL)
        self.assertEqual(sol.objective, 10)
        self.assertEqual(big.violations(sol.values), [])

    def test_tied_optima_repeatable(self):
        """With many tied optima the built-in search returns the same assignment every time"""
        m = MipModel("ties")
        xs = [m.add_var(f"x{i}") for i in range(6)]
        m.add_constraint(LinExpr.total(xs), Sense.LE, 3, "pick3")
        m.set_objective(LinExpr.total(xs))
        m.freeze()
        options = SolveOptions(backend=Backend.BNB)
        first = solve(m, options)
        self.assertEqual(first.objective, 3)
        for _ in range(3):
            again = solve(m, options)
            self.assertEqual(list(again.values), list(first.values))

    def test_highs_matches_enumeration(self):
        """Both HiGHS paths equal brute-force enumeration on random 0-1 models"""
        rng = np.random.default_rng(31)
        configs = [SolveOptions(backend=Backend.HIGHS),
                   SolveOptions(backend=Backend.BNB, lp_engine=LPEngine.HIGHS)]
        for trial in range(60):
            model, best = random_model(rng, int(rng.integers(1, 9)), int(rng.integers(1, 6)))
            for options in configs:
                sol = solve(model, options)
                msg = f"trial {trial}, {options.backend.value}/{options.lp_engine.value}"
                if best is None:
                    self.assertIs(sol.status, SolveStatus.INFEASIBLE, msg)
                else:
                    self.assertIs(sol.status, SolveStatus.OPTIMAL, msg)
                    self.assertAlmostEqual(sol.objective, best, places=6, msg=msg)
                    self.assertEqual(model.violations(sol.values), [], msg)


class TestGadgets(unittest.TestCase):

    def truth_table(self, encode, fn):
        for bits in itertools.product((0, 1), repeat=2):
            for direction in (1, -1):
                m = MipModel()
                ins = [m.add_var(f"in{i}") for i in range(2)]
                out = m.add_var("out")
                encode(m, out, ins)
                for v, bit in zip(ins, bits):
                    m.fix_var(v, bit)
                m.set_objective(out * direction)
                sol = solve(m.freeze())
                self.assertEqual(sol[out], fn(bits), f"inputs {bits}, direction {direction}")

    def test_and(self):
        """out = AND(ins) whether the objective pushes out up or down"""
        self.truth_table(encode_bool_and, lambda bits: int(all(bits)))

    def test_or(self):
        """out = OR(ins) whether the objective pushes out up or down"""
        self.truth_table(encode_bool_or, lambda bits: int(any(bits)))

    def test_empty_inputs(self):
        """Empty AND is true, empty OR is false"""
        m = MipModel()
        t, f = m.add_var("t"), m.add_var("f")
        encode_bool_and(m, t, [])
        encode_bool_or(m, f, [])
        self.assertEqual(m.bounds(t), (1, 1))
        self.assertEqual(m.bounds(f), (0, 0))

    def test_binary_only(self):
        """Gadgets refuse continuous operands"""
        m = MipModel()
        out, x = m.add_var("out"), m.add_var("x", VarKind.CONTINUOUS, 0, 1)
        with self.assertRaises(ModelError):
            encode_bool_and(m, out, [x])


class TestLPFormat(unittest.TestCase):

    def test_single_variable(self):
        """A one-binary model needs only the sections it uses"""
        m = MipModel("one")
        x = m.add_var("x")
        m.set_objective(LinExpr.of(x))
        text = export_lp(m.freeze())
        self.assertEqual(text.splitlines(), ["Maximize", " obj: x", "Binaries", " x", "End"])

    def test_knapsack_text(self):
        """Coefficients of one are omitted and rows keep their names"""
        m, _ = knapsack()
        text = export_lp(m)
        self.assertIn(" obj: 5 a + 4 b + 3 c", text)
        self.assertIn(" weight: 2 a + 3 b + c <= 5", text)

    def test_name_mangling(self):
        """Names outside [A-Za-z0-9_] are mangled, kept unique and restored on read"""
        self.assertEqual(sanitize_lp_name("x[1,2]"), "x_1_2_")
        self.assertEqual(sanitize_lp_name("3d"), "v_3d")

        m = MipModel()
        p = m.add_var("x[1]")
        q = m.add_var("x(1)")
        m.add_constraint(p + q, Sense.LE, 1, "row #1")
        m.set_objective(p + q * 2)
        text = export_lp(m.freeze())
        self.assertIn("\\ name: x_1__1 x(1)", text)
        self.assertIn("\\ row: row__1 row #1", text)

        back = read_lp(text)
        self.assertEqual([v.name for v in back.variables], ["x[1]", "x(1)"])
        self.assertEqual(back.constraints[0].name, "row #1")

    def test_read_back(self):
        """Reading the export gives a model with the same optimum"""
        rng = np.random.default_rng(99)
        for _ in range(20):
            model, best = random_model(rng, int(rng.integers(1, 8)), int(rng.integers(1, 5)))
            back = read_lp(export_lp(model))
            self.assertEqual(back.num_vars, model.num_vars)
            self.assertEqual(back.num_constraints, model.num_constraints)
            sol = solve(back)
            if best is None:
                self.assertIs(sol.status, SolveStatus.INFEASIBLE)
            else:
                self.assertAlmostEqual(sol.objective, best, places=6)

    def test_bounds_roundtrip(self):
        """General integers, continuous bounds, fixings and the objective constant survive"""
        m = MipModel()
        i = m.add_var("i", VarKind.INTEGER, -2, 7)
        c = m.add_var("c", VarKind.CONTINUOUS, -math.inf, math.inf)
        f = m.add_var("f")
        m.fix_var(f, 1)
        m.add_constraint(i + c, Sense.GE, -1)
        m.add_constraint(c - f, Sense.LE, 2)
        m.set_objective(i + c + f + 4)
        back = read_lp(export_lp(m.freeze()))
        by_name = {v.name: v for v in back.variables}
        self.assertEqual((by_name["i"].kind, by_name["i"].lo, by_name["i"].hi), (VarKind.INTEGER, -2, 7))
        self.assertEqual((by_name["c"].lo, by_name["c"].hi), (-math.inf, math.inf))
        self.assertEqual((by_name["f"].lo, by_name["f"].hi), (1, 1))
        self.assertEqual(back.objective.constant, 4)

    def test_minimize_rejected(self):
        """The reader only takes maximization problems"""
        with self.assertRaises(ModelError):
            read_lp("Minimize\n obj: x\nEnd\n")


if __name__ == '__main__':
    unittest.main()
