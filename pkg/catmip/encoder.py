"""
Compile a planning problem (environment, team, one CAT-MTL formula per agent,
satisfaction weight M) into a 0-1 MIP, and decode solutions back into group
trajectories and per-agent reports.

Variable naming, for reading exported LP files:

    z_j{J}_e{Q}_{Q'}_k{K}   agent J takes edge (Q,Q') arriving at time K
    alpha_j{A}_j{B}_k{K}    agents A < B share a node at time K
    y_j{A}_j{B}_q{Q}_k{K}   ... and that node is Q (compact co-location)
    d_/s_j{A}_j{B}_k{K}     |index difference| and its sign (difference co-location)
    zpi_j{J}_l{L}_k{K}      agent J stands on a node carrying label atom L
    zaug_/zal_j{J}_a{A}_k{K}  augmentation / availability parts of CAT atom A
    b_j{J}_f{F}_k{K}        subformula F of agent J holds at time K
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from catmip.formula import (
    Always, And, Cat, CatAtom, Clause, Eventually, Formula, LabelAtom, Not, Or, TrueF, Until,
    horizon, normalize, simplify_formula)
from catmip.mip import (
    LinExpr, MipModel, Sense, Solution, SolveStats, SolveStatus, VarId, VarKind,
    encode_bool_and, encode_bool_or)
from catmip.oracle import PerformanceBreakdown, default_big_m, evaluate_plan
from catmip.world import (
    Capability, Environment, GroupTrajectory, InvalidTrajectory, NodeId, Team, validate_trajectory)

logger = logging.getLogger(__name__)

DECODE_TOL = 1e-6


class EncoderError(ValueError):
    pass


class DecodeError(ValueError):
    pass


class ColocationMode(Enum):
    COMPACT = "compact"
    "Per-node products of occupancies."

    DIFFERENCE = "difference"
    "Node-index difference with an N_Q big-M."

    @classmethod
    def _missing_(cls, value):
        if value in COLOCATION_ALIASES:
            return cls(COLOCATION_ALIASES[value])
        return None


COLOCATION_ALIASES = {"paper": "difference", "paper-faithful": "difference"}
"Other accepted spellings of the ColocationMode values."


@dataclass(frozen=True)
class EncodeOptions:
    colocation_encoding: ColocationMode = ColocationMode.COMPACT
    big_m: float | None = None
    "Satisfaction weight M. None picks the default for the planning horizon."

    horizon_override: int | None = None
    "Plan over this many steps instead of the longest formula horizon (must not be shorter)."

    prune_unreachable: bool = True
    "Fix motion variables that BFS distance from the start rules out."

    def __post_init__(self) -> None:
        if self.big_m is not None and self.big_m <= 0:
            raise EncoderError(f"M must be positive (got {self.big_m})")
        if self.horizon_override is not None and self.horizon_override < 0:
            raise EncoderError(f"horizon override must be >= 0 (got {self.horizon_override})")


@dataclass
class CatParts:
    z_pi: VarId
    z_aug: VarId | None
    z_al: VarId | None
    b: VarId
    "Binary holding the CAT's truth value."


@dataclass
class VarMap:
    env: Environment
    team: Team
    specs: dict[int, Formula]
    "Per-agent formulas after simplification and negation-normal form."

    horizon: int
    big_m: float
    mode: ColocationMode
    prune_unreachable: bool = True

    motion: dict[tuple[int, tuple[NodeId, NodeId], int], VarId] = field(default_factory=dict)
    occupancy: dict[tuple[int, NodeId, int], LinExpr] = field(default_factory=dict)
    coloc: dict[tuple[int, int, int], VarId] = field(default_factory=dict)
    counts: dict[tuple[int, Capability, int], LinExpr] = field(default_factory=dict)
    labels: dict[tuple[int, LabelAtom, int], VarId] = field(default_factory=dict)
    cat_parts: dict[tuple[int, CatAtom, int], CatParts] = field(default_factory=dict)
    sat: dict[tuple[int, Formula, int], VarId] = field(default_factory=dict)
    roots: dict[int, VarId] = field(default_factory=dict)
    cost: dict[int, LinExpr] = field(default_factory=dict)

    demand: dict[int, dict[tuple[Formula, int], None]] = field(default_factory=dict)
    "Per agent, every (subformula, time) pair the temporal unrolling reaches, in visiting order."

    warnings: list[str] = field(default_factory=list)

    _ids: dict[tuple[int, object], int] = field(default_factory=dict, repr=False)
    _next: dict[int, int] = field(default_factory=dict, repr=False)
    _dist: dict[int, dict[NodeId, int]] = field(default_factory=dict, repr=False)

    def distances(self, j: int) -> dict[NodeId, int] | None:
        "BFS hop counts from agent j's start, or None when pruning is off."
        if not self.prune_unreachable:
            return None
        if j not in self._dist:
            self._dist[j] = self.env.distances_from(self.team.agent(j).start)
        return self._dist[j]

    def short_id(self, j: int, thing: object) -> int:
        "Small per-agent number for naming a subformula, atom or label."
        key = (j, thing)
        if key not in self._ids:
            self._ids[key] = self._next.get(j, 0)
            self._next[j] = self._ids[key] + 1
        return self._ids[key]

    def cat_demands(self, j: int) -> list[tuple[CatAtom, int]]:
        found = dict.fromkeys((f.atom, k) for f, k in self.demand[j] if isinstance(f, Cat))
        return list(found)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


def _unroll(f: Formula, k: int, out: dict[tuple[Formula, int], None]) -> None:
    if (f, k) in out:
        return
    out[(f, k)] = None
    match f:
        case TrueF() | Cat():
            pass
        case Not(arg):
            _unroll(arg, k, out)
        case And(left, right) | Or(left, right):
            _unroll(left, k, out)
            _unroll(right, k, out)
        case Eventually(interval, arg) | Always(interval, arg):
            for i in interval:
                _unroll(arg, k + i, out)
        case Until(left, interval, right):
            for kk in range(k, k + interval.hi + 1):
                _unroll(left, kk, out)
            for i in interval:
                _unroll(right, k + i, out)


#-----------------------------------------------------------------------------
# Constraint families

def motion_constraints(model: MipModel, vm: VarMap) -> None:
    """
    Motion variables with the initial-node fixing, one transition per agent
    per step, and flow conservation between consecutive steps.
    """
    env, t_p = vm.env, vm.horizon
    edges = sorted(env.edges)

    for agent in vm.team.agents:
        j = agent.id
        dist = vm.distances(j)

        for k in range(t_p + 1):
            for (q, q2) in edges:
                z = model.add_var(f"z_j{j}_e{q}_{q2}_k{k}")
                vm.motion[(j, (q, q2), k)] = z
                if k == 0:
                    model.fix_var(z, 1 if q == q2 == agent.start else 0)
                elif dist is not None and (dist.get(q2, t_p + 1) > k or dist.get(q, t_p + 1) > k - 1):
                    model.fix_var(z, 0)

            for q in env.nodes:
                vm.occupancy[(j, q, k)] = LinExpr.total(vm.motion[(j, e, k)] for e in env.in_edges(q))

            model.add_constraint(LinExpr.total(vm.motion[(j, e, k)] for e in edges), Sense.EQ, 1,
                                 f"one_j{j}_k{k}")

        for k in range(t_p):
            for q in env.nodes:
                out_next = LinExpr.total(vm.motion[(j, e, k + 1)] for e in env.out_edges(q))
                model.add_constraint(vm.occupancy[(j, q, k)] - out_next, Sense.EQ, 0, f"flow_j{j}_q{q}_k{k}")

        vm.cost[j] = LinExpr.total(vm.motion[(j, (q, q2), k)]
                                   for k in range(1, t_p + 1) for (q, q2) in edges if q != q2)


def _reachable(vm: VarMap, j: int, q: NodeId, k: int) -> bool:
    dist = vm.distances(j)
    return dist is None or dist.get(q, k + 1) <= k


def _colocation_var(model: MipModel, vm: VarMap, a: int, b: int, k: int) -> VarId:
    a, b = min(a, b), max(a, b)
    if (a, b, k) in vm.coloc:
        return vm.coloc[(a, b, k)]

    alpha = model.add_var(f"alpha_j{a}_j{b}_k{k}")
    vm.coloc[(a, b, k)] = vm.coloc[(b, a, k)] = alpha
    nodes = vm.env.nodes

    if vm.mode is ColocationMode.COMPACT:
        products = []
        for q in nodes:
            if not (_reachable(vm, a, q, k) and _reachable(vm, b, q, k)):
                continue
            wa, wb = vm.occupancy[(a, q, k)], vm.occupancy[(b, q, k)]
            y = model.add_var(f"y_j{a}_j{b}_q{q}_k{k}", VarKind.CONTINUOUS, 0, 1)
            model.add_constraint(y - wa - wb, Sense.GE, -1, f"yboth_j{a}_j{b}_q{q}_k{k}")
            model.add_constraint(y - wa, Sense.LE, 0, f"ya_j{a}_j{b}_q{q}_k{k}")
            model.add_constraint(y - wb, Sense.LE, 0, f"yb_j{a}_j{b}_q{q}_k{k}")
            products.append(y)
        model.add_constraint(alpha - LinExpr.total(products), Sense.EQ, 0, f"alpha_j{a}_j{b}_k{k}")
        return alpha

    n_q = len(nodes)
    x = LinExpr.total(vm.occupancy[(a, q, k)] * q for q in nodes)
    y = LinExpr.total(vm.occupancy[(b, q, k)] * q for q in nodes)
    d = model.add_var(f"d_j{a}_j{b}_k{k}", VarKind.CONTINUOUS, 0, max(n_q - 1, 0))
    s = model.add_var(f"s_j{a}_j{b}_k{k}")
    model.add_constraint(d - x + y, Sense.GE, 0, f"dpos_j{a}_j{b}_k{k}")
    model.add_constraint(d - y + x, Sense.GE, 0, f"dneg_j{a}_j{b}_k{k}")
    model.add_constraint(d - x + y - s * (2 * n_q), Sense.LE, 0, f"dsel1_j{a}_j{b}_k{k}")
    model.add_constraint(d - y + x + s * (2 * n_q), Sense.LE, 2 * n_q, f"dsel0_j{a}_j{b}_k{k}")
    model.add_constraint(d + alpha, Sense.GE, 1, f"apart_j{a}_j{b}_k{k}")
    model.add_constraint(d + alpha * n_q, Sense.LE, n_q, f"together_j{a}_j{b}_k{k}")
    return alpha


def colocation_constraints(model: MipModel, vm: VarMap, mode: ColocationMode | None = None) -> None:
    """
    α for every (agent, helper, time) an augmented or limited CAT observes.
    Only helpers holding a capability named in the agent's own formula get one.
    """
    if mode is not None:
        vm.mode = mode
    for j in vm.team.ids:
        for atom, k in vm.cat_demands(j):
            for clause in (atom.aug, atom.al):
                if clause is None:
                    continue
                for i in vm.team.helpers(clause.capability, j):
                    _colocation_var(model, vm, j, i, k)


def _count(model: MipModel, vm: VarMap, j: int, c: Capability, k: int) -> LinExpr:
    key = (j, c, k)
    if key not in vm.counts:
        vm.counts[key] = LinExpr.total(_colocation_var(model, vm, j, i, k) for i in vm.team.helpers(c, j))
    return vm.counts[key]


def _pool(vm: VarMap, j: int, clause: Clause) -> int:
    pool = len(vm.team.helpers(clause.capability, j))
    if pool == 0:
        raise EncoderError(f"agent {j}: clause on {clause.capability!r} has no possible helpers; "
                           "it should have been simplified away")
    return pool


def count_and_cat_constraints(model: MipModel, vm: VarMap) -> None:
    """
    Capability counts n_j^c(k) and the threshold indicators of each CAT,
    then b = z_π OR (z_aug AND z_al). Thresholds are multiplied through so
    every coefficient stays integral.
    """
    for j in vm.team.ids:
        for atom, k in vm.cat_demands(j):
            key = (j, atom, k)
            if key in vm.cat_parts:
                continue
            aid = vm.short_id(j, atom)
            z_pi = vm.labels[(j, atom.target, k)]

            if atom.aug is None:
                vm.cat_parts[key] = CatParts(z_pi, None, None, z_pi)
                continue

            m, pool = atom.aug.threshold, _pool(vm, j, atom.aug)
            n = _count(model, vm, j, atom.aug.capability, k)
            z_aug = model.add_var(f"zaug_j{j}_a{aid}_k{k}")
            model.add_constraint(z_aug * pool - n, Sense.GE, 1 - m, f"augon_j{j}_a{aid}_k{k}")
            model.add_constraint(z_aug * m - n, Sense.LE, 0, f"augoff_j{j}_a{aid}_k{k}")

            z_al = None
            helped = z_aug
            if atom.al is not None:
                m, pool = atom.al.threshold, _pool(vm, j, atom.al)
                n = _count(model, vm, j, atom.al.capability, k)
                z_al = model.add_var(f"zal_j{j}_a{aid}_k{k}")
                model.add_constraint(-z_al * pool - n, Sense.GE, 1 - m - pool, f"aloff_j{j}_a{aid}_k{k}")
                model.add_constraint(-z_al * m - n, Sense.LE, -m, f"alon_j{j}_a{aid}_k{k}")
                helped = model.add_var(f"collab_j{j}_a{aid}_k{k}")
                encode_bool_and(model, helped, [z_aug, z_al])

            b = model.add_var(f"cat_j{j}_a{aid}_k{k}")
            encode_bool_or(model, b, [z_pi, helped])
            vm.cat_parts[key] = CatParts(z_pi, z_aug, z_al, b)


def label_constraints(model: MipModel, vm: VarMap) -> None:
    "z_π = Σ occupancy over the nodes carrying π (or lacking it, for ¬π)."
    env = vm.env
    for j in vm.team.ids:
        for atom, k in vm.cat_demands(j):
            target = atom.target
            key = (j, target, k)
            if key in vm.labels:
                continue
            lid = vm.short_id(j, target)
            z = model.add_var(f"zpi_j{j}_l{lid}_k{k}")
            vm.labels[key] = z

            if not env.nodes_with(target.label):
                shown = ("!" if target.negated else "") + target.label
                msg = f"agent {j}: label {target.label!r} is on no node; {shown} is constant"
                if msg not in vm.warnings:
                    vm.warn(msg)
                model.fix_var(z, 1 if target.negated else 0)
                continue

            nodes = env.nodes_with(target.label, target.negated)
            model.add_constraint(z - LinExpr.total(vm.occupancy[(j, q, k)] for q in nodes), Sense.EQ, 0,
                                 f"zpi_j{j}_l{lid}_k{k}")


def formula_constraints(model: MipModel, vm: VarMap, agent: int, f: Formula, k: int = 0) -> VarId:
    """
    Binary b with b = 1 iff f holds for the agent from time k, at every
    integral solution. Shared subformulas reuse their variable.
    """
    key = (agent, f, k)
    if key in vm.sat:
        return vm.sat[key]
    if k + horizon(f) > vm.horizon:
        raise EncoderError(f"agent {agent}: formula window reaches k={k + horizon(f)} beyond T_p={vm.horizon}")

    if isinstance(f, Cat):
        b = vm.cat_parts[(agent, f.atom, k)].b
        vm.sat[key] = b
        return b

    fid = vm.short_id(agent, f)
    b = model.add_var(f"b_j{agent}_f{fid}_k{k}")
    vm.sat[key] = b

    def sub(g: Formula, kk: int) -> VarId:
        return formula_constraints(model, vm, agent, g, kk)

    match f:
        case TrueF():
            model.fix_var(b, 1)
        case Not(TrueF()):
            model.fix_var(b, 0)
        case Not(Cat() as inner):
            model.add_constraint(b + sub(inner, k), Sense.EQ, 1, f"not_j{agent}_f{fid}_k{k}")
        case Not():
            raise EncoderError(f"agent {agent}: formula is not in negation-normal form")
        case And(left, right):
            encode_bool_and(model, b, [sub(left, k), sub(right, k)])
        case Or(left, right):
            encode_bool_or(model, b, [sub(left, k), sub(right, k)])
        case Eventually(interval, arg):
            encode_bool_or(model, b, [sub(arg, k + i) for i in interval])
        case Always(interval, arg):
            encode_bool_and(model, b, [sub(arg, k + i) for i in interval])
        case Until(left, interval, right):
            branches = []
            for i in interval:
                branch = model.add_var(f"b_j{agent}_f{fid}_k{k}_u{i}")
                encode_bool_and(model, branch, [sub(right, k + i)] + [sub(left, kk) for kk in range(k, k + i + 1)])
                branches.append(branch)
            encode_bool_or(model, b, branches)
    return b


#-----------------------------------------------------------------------------

def prepare_specs(team: Team, specs: Mapping[int, Formula]) -> dict[int, Formula]:
    "Per-agent CAT simplification followed by negation-normal form."
    out = {}
    for j in team.ids:
        if j not in specs:
            raise EncoderError(f"agent {j} has no spec")
        out[j] = normalize(simplify_formula(specs[j], team, agent=j))
    return out


def encode(env: Environment, team: Team, specs: Mapping[int, Formula],
           opts: EncodeOptions | None = None) -> tuple[MipModel, VarMap]:
    opts = opts or EncodeOptions()
    prepared = prepare_specs(team, specs)

    t_p = max((horizon(f) for f in prepared.values()), default=0)
    if opts.horizon_override is not None:
        if opts.horizon_override < t_p:
            raise EncoderError(f"spec horizon {t_p} exceeds the horizon override {opts.horizon_override}")
        t_p = opts.horizon_override
    big_m = opts.big_m if opts.big_m is not None else default_big_m(t_p)

    model = MipModel("catmip")
    vm = VarMap(env, team, prepared, t_p, big_m, opts.colocation_encoding, opts.prune_unreachable)
    for j, f in prepared.items():
        vm.demand[j] = {}
        _unroll(f, 0, vm.demand[j])

    motion_constraints(model, vm)
    label_constraints(model, vm)
    colocation_constraints(model, vm)
    count_and_cat_constraints(model, vm)
    for j, f in prepared.items():
        vm.roots[j] = formula_constraints(model, vm, j, f)

    objective = LinExpr()
    for j in team.ids:
        objective = objective + vm.roots[j] * (2 * big_m) - big_m - vm.cost[j]
    model.set_objective(objective)
    model.freeze()

    logger.info("encoded %d agents, T_p=%d, M=%g: %d variables, %d constraints",
                team.size, t_p, big_m, model.num_vars, model.num_constraints)
    return model, vm


#-----------------------------------------------------------------------------
# Decoding

@dataclass
class PlanReport:
    status: SolveStatus
    agents: list[PerformanceBreakdown]
    trajectory: GroupTrajectory
    objective: float
    "The MIP's objective value."

    big_m: float
    stats: SolveStats = field(default_factory=SolveStats)
    defects: list[str] = field(default_factory=list)
    "Disagreements between the MIP's own values and the oracle's recomputation."

    @property
    def total_performance(self) -> float:
        return sum(a.performance for a in self.agents)

    @property
    def total_motion(self) -> int:
        return sum(a.motion_cost for a in self.agents)

    @property
    def satisfied_count(self) -> int:
        return sum(1 for a in self.agents if a.satisfied)

    @property
    def mean_performance(self) -> float:
        return self.total_performance / len(self.agents) if self.agents else 0.0

    @property
    def mean_motion(self) -> float:
        return self.total_motion / len(self.agents) if self.agents else 0.0


def _binary_value(solution: Solution, v: VarId) -> int:
    x = solution[v]
    r = round(x)
    if abs(x - r) > DECODE_TOL or r not in (0, 1):
        raise DecodeError(f"{v.name} = {x} is not 0/1")
    return int(r)


def decode(solution: Solution, vm: VarMap, env: Environment, team: Team, specs: Mapping[int, Formula],
           big_m: float | None = None) -> PlanReport:
    if not solution.has_incumbent:
        raise DecodeError(f"solution has no incumbent (status {solution.status.value})")
    big_m = vm.big_m if big_m is None else big_m

    for v in vm.motion.values():
        _binary_value(solution, v)

    paths = []
    for j in team.ids:
        path = []
        for k in range(vm.horizon + 1):
            here = [q for q in env.nodes if solution.value(vm.occupancy[(j, q, k)]) > 0.5]
            if len(here) != 1:
                raise DecodeError(f"agent {j} occupies {len(here)} nodes at k={k}")
            path.append(here[0])
        paths.append(path)
    traj = GroupTrajectory.from_paths(paths)
    try:
        validate_trajectory(env, team, traj)
    except InvalidTrajectory as exc:
        raise DecodeError(f"decoded trajectory is invalid: {exc}") from exc

    agents = evaluate_plan(env, team, traj, specs, big_m)

    defects = []
    for report in agents:
        j = report.agent
        mip_sat = _binary_value(solution, vm.roots[j]) == 1
        mip_cost = round(solution.value(vm.cost[j]))
        if mip_sat != report.satisfied:
            defects.append(f"agent {j}: MIP satisfaction {mip_sat}, oracle {report.satisfied}")
        if mip_cost != report.motion_cost:
            defects.append(f"agent {j}: MIP motion cost {mip_cost}, oracle {report.motion_cost}")
    for d in defects:
        logger.warning("encoder defect: %s", d)

    return PlanReport(solution.status, agents, traj, solution.objective, big_m, solution.stats, defects)
