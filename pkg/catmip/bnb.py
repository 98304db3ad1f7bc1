"""
Exact best-first branch-and-bound over the LP relaxation, with HiGHS as an
alternative backend for models too large for the dense simplex.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import os
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from catmip.mip import MipModel, ModelError, Solution, SolveStats, SolveStatus, VarId
from catmip.simplex import FEAS_TOL, LinearRelaxation, LPEngine, LPResult, UnboundedLPError

logger = logging.getLogger(__name__)

INT_TOL = 1e-6

TIME_BUDGET_ENV = "CATMIP_TIME_BUDGET_S"

AUTO_BNB_MAX_VARS = 500
"Largest model the auto backend gives to the built-in branch-and-bound."

DIVE_NEAR = 0.1
MAX_DIVE_STEPS = 1000


class Backend(Enum):
    AUTO = "auto"
    "Built-in branch-and-bound up to AUTO_BNB_MAX_VARS variables, HiGHS above."

    BNB = "bnb"
    HIGHS = "highs"
    "scipy.optimize.milp (HiGHS branch-and-cut) on the whole model."


@dataclass(frozen=True)
class SolveOptions:
    time_budget_s: float = 60.0
    node_budget: int = 10**6
    seed: int | None = None
    "Recorded in the stats only; the search is deterministic."

    backend: Backend = Backend.AUTO
    lp_engine: LPEngine = LPEngine.SIMPLEX
    "Relaxation solver for the built-in branch-and-bound."

    dive_every: int = 200
    "Dive for an incumbent at the root and then every this many nodes; 0 turns diving off."

    @classmethod
    def from_environment(cls, **overrides) -> SolveOptions:
        options = cls(**overrides)
        raw = os.environ.get(TIME_BUDGET_ENV)
        if raw:
            try:
                options = replace(options, time_budget_s=float(raw))
            except ValueError:
                logger.warning("ignoring %s=%r: not a number", TIME_BUDGET_ENV, raw)
        return options

    def backend_for(self, model: MipModel) -> Backend:
        if self.backend is not Backend.AUTO:
            return self.backend
        return Backend.BNB if model.num_vars <= AUTO_BNB_MAX_VARS else Backend.HIGHS


@dataclass(frozen=True)
class _BoundChange:
    var: int
    lo: float
    hi: float
    parent: _BoundChange | None


@dataclass
class _Node:
    bound: float
    depth: int
    x: np.ndarray
    changes: _BoundChange | None


class _OutOfTime(Exception):
    pass


def _apply(changes: _BoundChange | None, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = lo.copy(), hi.copy()
    while changes is not None:
        lo[changes.var] = max(lo[changes.var], changes.lo)
        hi[changes.var] = min(hi[changes.var], changes.hi)
        changes = changes.parent
    return lo, hi


def _integral_objective(model: MipModel) -> bool:
    if model.objective.constant != math.floor(model.objective.constant):
        return False
    return all(v.kind.integral and c == math.floor(c) for v, c in model.objective.terms.items())


def _fractionality(x: np.ndarray, int_mask: np.ndarray) -> np.ndarray:
    frac = np.abs(x - np.round(x))
    frac[~int_mask] = 0.0
    return frac


def _fixings_bounds(model: MipModel, fixings: Mapping[VarId, float] | None) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = model.lower_bounds(), model.upper_bounds()
    for v, value in (fixings or {}).items():
        if not lo[v.index] <= value <= hi[v.index]:
            raise ModelError(f"fixing {v.name}={value} lies outside [{lo[v.index]},{hi[v.index]}]")
        lo[v.index] = hi[v.index] = value
    return lo, hi


class _Search:
    """
    Best-first search: the open node with the highest LP bound is branched
    next, on its most fractional variable (lowest index on ties). A node is
    pruned once its bound cannot strictly beat the incumbent; with an integral
    objective the bound is rounded down first.

    Among incumbents of equal value the lexicographically smallest assignment
    is kept, but only among those the search reaches: nodes whose bound merely
    ties the incumbent are pruned, so a smaller tied assignment under such a
    node is not looked for.
    """

    def __init__(self, model: MipModel, options: SolveOptions, lo: np.ndarray, hi: np.ndarray):
        self.model = model
        self.options = options
        self.relax = LinearRelaxation(model, options.lp_engine)
        self.lo, self.hi = lo, hi
        self.int_mask = model.integer_mask()
        self.integral_obj = _integral_objective(model)
        self.stats = SolveStats(seed=options.seed)
        self.incumbent: np.ndarray | None = None
        self.incumbent_value = -math.inf
        self.heap: list = []
        self.seq = itertools.count()
        self.deadline = math.inf
        self.next_dive = options.dive_every

    def _can_improve(self, bound: float) -> bool:
        if self.incumbent is None:
            return True
        if self.integral_obj:
            return math.floor(bound + FEAS_TOL) > self.incumbent_value
        return bound > self.incumbent_value + FEAS_TOL

    def _lp(self, changes: _BoundChange | None) -> LPResult:
        lo, hi = _apply(changes, self.lo, self.hi)
        result = self.relax.solve(lo, hi, self.deadline)
        self.stats.lp_iterations += result.iterations
        if result.exhausted:
            raise _OutOfTime
        return result

    def _evaluate(self, changes: _BoundChange | None, depth: int) -> None:
        self.stats.nodes += 1
        result = self._lp(changes)
        if not result.feasible or not self._can_improve(result.objective):
            return

        frac = _fractionality(result.x, self.int_mask)
        if frac.max(initial=0.0) <= INT_TOL:
            self._offer(result.x)
            return

        node = _Node(result.objective, depth, result.x, changes)
        heapq.heappush(self.heap, (-result.objective, -depth, next(self.seq), node))

    def _offer(self, x: np.ndarray) -> None:
        x = x.copy()
        x[self.int_mask] = np.round(x[self.int_mask])
        value = self.model.objective.value(x)
        better = value > self.incumbent_value + FEAS_TOL
        tie = abs(value - self.incumbent_value) <= FEAS_TOL and self.incumbent is not None \
            and tuple(x) < tuple(self.incumbent)
        if better or tie:
            self.incumbent, self.incumbent_value = x, value
            logger.debug("bnb: incumbent %g after %d nodes", value, self.stats.nodes)

    def _dive(self, node: _Node) -> None:
        """
        Primal heuristic: round the integer variables closest to integrality
        (all those within DIVE_NEAR, or else the single closest one), re-solve,
        and repeat until the relaxation is integral. A rejected batch falls
        back to the single closest variable, then to its other rounding.
        """
        changes, x = node.changes, node.x
        for _ in range(MAX_DIVE_STEPS):
            frac = _fractionality(x, self.int_mask)
            open_vars = np.flatnonzero(frac > INT_TOL)
            if len(open_vars) == 0:
                self._offer(x)
                return

            j = int(open_vars[np.argmin(frac[open_vars])])
            nearest = math.floor(x[j] + 0.5)
            other = math.floor(x[j]) if nearest > x[j] else math.ceil(x[j])
            attempts = []
            near = open_vars[frac[open_vars] < DIVE_NEAR]
            if len(near) > 1:
                batch = changes
                for i in near:
                    value = math.floor(x[i] + 0.5)
                    batch = _BoundChange(int(i), value, value, batch)
                attempts.append(batch)
            attempts.append(_BoundChange(j, nearest, nearest, changes))
            attempts.append(_BoundChange(j, other, other, changes))

            for trial in attempts:
                result = self._lp(trial)
                if result.feasible and self._can_improve(result.objective):
                    changes, x = trial, result.x
                    break
            else:
                return

    def _branch(self, node: _Node) -> None:
        frac = _fractionality(node.x, self.int_mask)
        score = np.minimum(frac, 1.0 - frac)
        score[frac <= INT_TOL] = -1.0
        j = int(np.argmax(score))     # first maximum, so ties go to the lowest index
        value = node.x[j]
        down = _BoundChange(j, -math.inf, math.floor(value), node.changes)
        up = _BoundChange(j, math.ceil(value), math.inf, node.changes)
        self._evaluate(down, node.depth + 1)
        self._evaluate(up, node.depth + 1)

    def run(self) -> Solution:
        start = time.monotonic()
        self.deadline = start + self.options.time_budget_s
        status = SolveStatus.OPTIMAL
        pending: list[float] = []

        try:
            self._evaluate(None, 0)
            if self.heap and self.options.dive_every > 0:
                self._dive(self.heap[0][3])
            while self.heap:
                if time.monotonic() > self.deadline or self.stats.nodes >= self.options.node_budget:
                    status = SolveStatus.BUDGET_EXCEEDED
                    break
                neg_bound, _, _, node = heapq.heappop(self.heap)
                if not self._can_improve(-neg_bound):
                    self.heap.clear()
                    break
                pending = [node.bound]
                if self.options.dive_every > 0 and self.stats.nodes >= self.next_dive:
                    self.next_dive = self.stats.nodes + self.options.dive_every
                    self._dive(node)
                self._branch(node)
                pending = []
        except _OutOfTime:
            status = SolveStatus.BUDGET_EXCEEDED
            logger.info("bnb: wall-time budget of %gs ran out inside an LP solve", self.options.time_budget_s)

        self.stats.wall_time = time.monotonic() - start
        if status is SolveStatus.BUDGET_EXCEEDED:
            open_bounds = [-entry[0] for entry in self.heap] + pending
            if self.stats.nodes <= 1 and not open_bounds:
                self.stats.best_bound = math.inf
            else:
                self.stats.best_bound = max(open_bounds + [self.incumbent_value])
        else:
            self.stats.best_bound = self.incumbent_value

        if self.incumbent is None:
            if status is SolveStatus.OPTIMAL:
                status = SolveStatus.INFEASIBLE
            return Solution(status, None, None, self.stats)
        return Solution(status, self.incumbent_value, self.incumbent, self.stats)


def _solve_highs(model: MipModel, options: SolveOptions, lo: np.ndarray, hi: np.ndarray) -> Solution:
    "Hand the whole model to HiGHS; the objective is re-evaluated on the rounded assignment."
    start = time.monotonic()
    relax = LinearRelaxation(model)
    int_mask = model.integer_mask()
    constraints = LinearConstraint(relax.A, relax.row_lower, relax.row_upper) if model.num_constraints else None
    res = milp(-relax.c, constraints=constraints, integrality=int_mask.astype(int), bounds=Bounds(lo, hi),
               options={"time_limit": options.time_budget_s, "node_limit": options.node_budget,
                        "mip_rel_gap": 0.0, "disp": False})

    stats = SolveStats(seed=options.seed)
    stats.nodes = int(getattr(res, "mip_node_count", 0) or 0)
    stats.wall_time = time.monotonic() - start
    if res.status == 3:
        raise UnboundedLPError("LP relaxation is unbounded")

    if res.x is None:
        # no point and no limit hit: unbounded was ruled out above
        status = SolveStatus.BUDGET_EXCEEDED if res.status == 1 else SolveStatus.INFEASIBLE
        if res.status != 2:
            logger.info("highs: %s", res.message)
        return Solution(status, None, None, stats)

    x = np.clip(res.x, lo, hi)
    x[int_mask] = np.round(x[int_mask])
    objective = model.objective.value(x)
    status = SolveStatus.OPTIMAL if res.status == 0 else SolveStatus.BUDGET_EXCEEDED
    dual_bound = getattr(res, "mip_dual_bound", None)
    if status is SolveStatus.OPTIMAL or dual_bound is None:
        stats.best_bound = objective
    else:
        stats.best_bound = -float(dual_bound) + relax.constant
    return Solution(status, objective, x, stats)


def solve(model: MipModel, options: SolveOptions | None = None,
          fixings: Mapping[VarId, float] | None = None) -> Solution:
    """
    Maximize the model's objective exactly, optionally with some variables
    held at given values. Returns status optimal, infeasible, or
    budget-exceeded (with the best incumbent, if any).
    """
    if not model.frozen:
        raise ModelError("freeze the model before solving it")
    options = options or SolveOptions()
    lo, hi = _fixings_bounds(model, fixings)
    backend = options.backend_for(model)
    if backend is Backend.HIGHS:
        solution = _solve_highs(model, options, lo, hi)
    else:
        solution = _Search(model, options, lo, hi).run()
    logger.info("solve %s (%s): %s objective=%s nodes=%d lp_iterations=%d %.2fs",
                model.name, backend.value, solution.status.value, solution.objective,
                solution.stats.nodes, solution.stats.lp_iterations, solution.stats.wall_time)
    return solution
