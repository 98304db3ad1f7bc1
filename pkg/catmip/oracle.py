"""
Ground-truth semantics evaluated directly on traces: CAT satisfaction, the
±1 satisfaction metric, motion cost and performance. Also an exhaustive
planner used to cross-check the MIP pipeline on tiny instances.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from catmip.formula import (
    Always, And, Cat, CatAtom, Eventually, Formula, LabelAtom, Not, Or, TrueF, Until,
    capabilities_of, horizon)
from catmip.world import (
    Environment, GroupTrajectory, Label, NodeId, Observation, Team, Trace, trace_of)

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_BUDGET = 10**7


class TraceTooShort(ValueError):
    pass


class SearchBudgetExceeded(ValueError):
    pass


def default_big_m(t_p: int) -> int:
    return 50 if t_p <= 49 else t_p + 1


def label_hit(labels: frozenset[Label], target: LabelAtom) -> bool:
    return (target.label in labels) != target.negated


def eval_cat(obs: Observation, atom: CatAtom) -> bool:
    if label_hit(obs.labels, atom.target):
        return True
    if atom.aug is None:
        return False
    if obs.counts.get(atom.aug.capability, 0) < atom.aug.threshold:
        return False
    if atom.al is None:
        return True
    return obs.counts.get(atom.al.capability, 0) < atom.al.threshold


def _check_length(trace: Trace, f: Formula, k: int) -> None:
    need = k + horizon(f)
    if k < 0 or need > trace.horizon:
        raise TraceTooShort(
            f"agent {trace.agent}: evaluating at k={k} needs observations up to k={need}, "
            f"trace ends at k={trace.horizon}")


def rho(trace: Trace, f: Formula, k: int = 0) -> int:
    "Satisfaction metric: +1 if the trace satisfies f from step k, else -1."
    _check_length(trace, f, k)
    return _rho(trace.observations, f, k)


def _rho(obs: Sequence[Observation], f: Formula, k: int) -> int:
    match f:
        case TrueF():
            return 1
        case Cat(atom):
            return 1 if eval_cat(obs[k], atom) else -1
        case Not(arg):
            return -_rho(obs, arg, k)
        case And(left, right):
            return min(_rho(obs, left, k), _rho(obs, right, k))
        case Or(left, right):
            return max(_rho(obs, left, k), _rho(obs, right, k))
        case Eventually(interval, arg):
            return max(_rho(obs, arg, k + i) for i in interval)
        case Always(interval, arg):
            return min(_rho(obs, arg, k + i) for i in interval)
        case Until(left, interval, right):
            # left must hold on [k, k'] inclusive of the instant right holds
            return max(
                min(_rho(obs, right, k + i), min(_rho(obs, left, kk) for kk in range(k, k + i + 1)))
                for i in interval)
    raise TypeError(f"not a formula: {f!r}")


def holds(trace: Trace, f: Formula, k: int = 0) -> bool:
    """
    Plain Boolean satisfaction, written independently of rho so the two can
    be checked against each other.
    """
    _check_length(trace, f, k)
    return _holds(trace.observations, f, k)


def _holds(obs: Sequence[Observation], f: Formula, k: int) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Cat):
        o = obs[k]
        a = f.atom
        if label_hit(o.labels, a.target):
            return True
        helped = a.aug is not None and o.counts.get(a.aug.capability, 0) >= a.aug.threshold
        limited = a.al is not None and o.counts.get(a.al.capability, 0) >= a.al.threshold
        return helped and not limited
    if isinstance(f, Not):
        return not _holds(obs, f.arg, k)
    if isinstance(f, And):
        return _holds(obs, f.left, k) and _holds(obs, f.right, k)
    if isinstance(f, Or):
        return _holds(obs, f.left, k) or _holds(obs, f.right, k)
    if isinstance(f, Eventually):
        return any(_holds(obs, f.arg, k2) for k2 in range(k + f.interval.lo, k + f.interval.hi + 1))
    if isinstance(f, Always):
        return all(_holds(obs, f.arg, k2) for k2 in range(k + f.interval.lo, k + f.interval.hi + 1))
    if isinstance(f, Until):
        for k2 in range(k + f.interval.lo, k + f.interval.hi + 1):
            if not _holds(obs, f.right, k2):
                continue
            if all(_holds(obs, f.left, k3) for k3 in range(k, k2 + 1)):
                return True
        return False
    raise TypeError(f"not a formula: {f!r}")


def motion_cost(traj: GroupTrajectory, j: int) -> int:
    "J_j: transitions that are not self-transitions."
    path = traj.path(j)
    return sum(1 for a, b in zip(path, path[1:]) if a != b)


@dataclass(frozen=True)
class PerformanceBreakdown:
    agent: int
    satisfied: bool
    motion_cost: int
    performance: float
    "M·(±1) − J_j."

    big_m: float
    warnings: tuple[str, ...] = field(default=(), compare=False)


def performance(env: Environment, team: Team, traj: GroupTrajectory, f: Formula, j: int,
                big_m: float) -> PerformanceBreakdown:
    warnings = []
    if big_m < traj.horizon:
        msg = f"agent {j}: M={big_m} is below the horizon T_p={traj.horizon}; motion may outweigh satisfaction"
        logger.warning(msg)
        warnings.append(msg)

    satisfied = rho(trace_of(env, team, traj, j), f, 0) == 1
    cost = motion_cost(traj, j)
    value = (big_m if satisfied else -big_m) - cost
    return PerformanceBreakdown(j, satisfied, cost, value, big_m, tuple(warnings))


def evaluate_plan(env: Environment, team: Team, traj: GroupTrajectory, specs: Mapping[int, Formula],
                  big_m: float) -> list[PerformanceBreakdown]:
    return [performance(env, team, traj, specs[j], j, big_m) for j in team.ids]


#-----------------------------------------------------------------------------
# Exhaustive planner

class BruteForceResult(NamedTuple):
    trajectory: GroupTrajectory
    objective: float
    explored: int


def _paths_from(env: Environment, start: NodeId, length: int, budget: int) -> list[tuple[NodeId, ...]]:
    "Every edge-respecting path of `length` steps, in lexicographic order."
    paths: list[tuple[NodeId, ...]] = []
    stack = [(start,)]
    while stack:
        p = stack.pop()
        if len(p) == length + 1:
            paths.append(p)
            if len(paths) > budget:
                raise SearchBudgetExceeded(f"more than {budget} paths from node {start}")
            continue
        for q in reversed(env.adj(p[-1])):
            stack.append(p + (q,))
    return paths


class _Search:
    def __init__(self, env: Environment, team: Team, specs: Mapping[int, Formula], big_m: float,
                 t_p: int, budget: int):
        self.env = env
        self.team = team
        self.specs = specs
        self.big_m = big_m
        self.t_p = t_p
        self.budget = budget
        self.explored = 0

        self.paths = {a.id: _paths_from(env, a.start, t_p, budget) for a in team.agents}

        # agent j's satisfaction is known once every helper it can observe is placed
        self.caps = {j: sorted(capabilities_of(specs[j])) for j in team.ids}
        self.ready_at = {j: max([j] + [i for c in self.caps[j] for i in team.helpers(c, j)])
                         for j in team.ids}

    def _satisfied(self, j: int, chosen: Sequence[tuple[NodeId, ...]]) -> bool:
        mine = chosen[j - 1]
        observations = []
        for k in range(self.t_p + 1):
            q = mine[k]
            counts = {c: sum(1 for i in self.team.helpers(c, j) if chosen[i - 1][k] == q) for c in self.caps[j]}
            observations.append(Observation(self.env.labels_at(q), counts))
        return _rho(observations, self.specs[j], 0) == 1

    def _cost(self, path: tuple[NodeId, ...]) -> int:
        return sum(1 for a, b in zip(path, path[1:]) if a != b)

    def run(self, first: Sequence[tuple[NodeId, ...]]) -> tuple[float, tuple] | None:
        n = self.team.size
        best: list = [None, None]
        chosen: list[tuple[NodeId, ...]] = []
        value = [0.0] * (n + 1)
        known = [False] * (n + 1)

        def bound() -> float:
            total = 0.0
            for j in range(1, n + 1):
                if known[j]:
                    total += value[j]
                elif j <= len(chosen):
                    total += self.big_m - self._cost(chosen[j - 1])
                else:
                    total += self.big_m
            return total

        def descend(depth: int):
            candidates = first if depth == 1 else self.paths[depth]
            for path in candidates:
                self.explored += 1
                if self.explored > self.budget:
                    raise SearchBudgetExceeded(f"brute-force search exceeded {self.budget} candidates")
                chosen.append(path)
                newly = [j for j in range(1, n + 1) if self.ready_at[j] == depth]
                for j in newly:
                    sat = self._satisfied(j, chosen)
                    value[j] = (self.big_m if sat else -self.big_m) - self._cost(chosen[j - 1])
                    known[j] = True

                if best[0] is None or bound() > best[0]:
                    if depth == n:
                        best[0], best[1] = bound(), tuple(chosen)
                    else:
                        descend(depth + 1)

                for j in newly:
                    known[j] = False
                chosen.pop()

        if n == 0:
            return 0.0, ()
        descend(1)
        return None if best[0] is None else (best[0], best[1])


def _run_chunk(args) -> tuple[tuple[float, tuple] | None, int]:
    env, team, specs, big_m, t_p, budget, first = args
    search = _Search(env, team, specs, big_m, t_p, budget)
    return search.run(first), search.explored


def brute_force_plan(env: Environment, team: Team, specs: Mapping[int, Formula], big_m: float | None = None,
                     budget: int = DEFAULT_SEARCH_BUDGET, workers: int = 1,
                     horizon_override: int | None = None) -> BruteForceResult:
    """
    Enumerate every edge-respecting group trajectory and return one maximizing
    Σ_j P_j. Among co-optimal trajectories the lexicographically smallest
    (agent 1's path first) is returned, for any worker count.
    """
    for j in team.ids:
        if j not in specs:
            raise ValueError(f"agent {j} has no spec")

    t_p = max((horizon(specs[j]) for j in team.ids), default=0)
    if horizon_override is not None:
        if horizon_override < t_p:
            raise ValueError(f"horizon override {horizon_override} is below the spec horizon {t_p}")
        t_p = horizon_override
    if big_m is None:
        big_m = default_big_m(t_p)

    if team.size == 0:
        return BruteForceResult(GroupTrajectory(((),) * (t_p + 1)), 0.0, 0)

    root = _Search(env, team, specs, big_m, t_p, budget)
    first_paths = root.paths[1]

    if workers <= 1:
        found = root.run(first_paths)
        explored = root.explored
    else:
        chunks = [first_paths[i::workers] for i in range(workers)]
        chunks = [sorted(c) for c in chunks if c]
        jobs = [(env, team, dict(specs), big_m, t_p, budget, c) for c in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
        explored = sum(n for _, n in results)
        candidates = [r for r, _ in results if r is not None]
        found = max(candidates, key=lambda r: (r[0], _neg_key(r[1]))) if candidates else None

    if found is None:
        # unreachable: every agent has at least the stay-put path
        raise SearchBudgetExceeded("no trajectory enumerated")

    objective, paths = found
    logger.debug("brute force: objective %s after %d candidates", objective, explored)
    return BruteForceResult(GroupTrajectory.from_paths(paths), objective, explored)


def _neg_key(paths: tuple) -> tuple:
    "Sort key under which max() prefers the lexicographically smallest paths."
    return tuple(-q for p in paths for q in p)
