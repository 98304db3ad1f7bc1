"""
Plan scenarios end to end (encode, solve, decode), compare CAT specs against
their label-only baseline, sweep random environments by grid size, and write
reports and trajectory traces.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from catmip.bnb import SolveOptions, solve
from catmip.encoder import EncodeOptions, PlanReport, VarMap, decode, encode
from catmip.formula import Formula, strip_augmentation
from catmip.mip import MipModel, Solution, SolveStatus
from catmip.scenario import GeneratorConfig, Scenario, random_scenario
from catmip.world import Environment, GroupTrajectory, InvalidTrajectory, Team, validate_trajectory

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("agent", "k", "row", "col", "node", "labels")

REPORT_COLUMNS = ("size", "seed", "mode", "status", "objective", "satisfied", "agents",
                  "total_motion", "mean_performance")


class RunMode(Enum):
    CAT = "cat"
    "Specs as written."

    NO_CAT = "no-cat"
    "Augmenting and limiting clauses stripped; labels alone decide."


def formulas_for(scenario: Scenario, mode: RunMode) -> dict[int, Formula]:
    if mode is RunMode.NO_CAT:
        return {j: strip_augmentation(f) for j, f in scenario.formulas.items()}
    return dict(scenario.formulas)


@dataclass
class PlanOutcome:
    model: MipModel
    varmap: VarMap
    solution: Solution
    report: PlanReport | None
    "None when the solver stopped without an incumbent."


def plan_scenario(scenario: Scenario, mode: RunMode = RunMode.CAT,
                  encode_options: EncodeOptions | None = None,
                  solve_options: SolveOptions | None = None) -> PlanOutcome:
    formulas = formulas_for(scenario, mode)
    opts = encode_options or EncodeOptions()
    if opts.big_m is None and scenario.big_m is not None:
        opts = EncodeOptions(opts.colocation_encoding, scenario.big_m, opts.horizon_override, opts.prune_unreachable)

    model, vm = encode(scenario.environment, scenario.team, formulas, opts)
    solution = solve(model, solve_options or SolveOptions.from_environment(seed=scenario.seed))

    report = None
    if solution.has_incumbent:
        report = decode(solution, vm, scenario.environment, scenario.team, formulas)
    return PlanOutcome(model, vm, solution, report)


#-----------------------------------------------------------------------------
# Experiments

@dataclass
class Trial:
    size: int
    seed: int | None
    mode: RunMode
    status: SolveStatus
    report: PlanReport | None
    wall_time: float

    @property
    def counted(self) -> bool:
        "Only trials solved to optimality enter the aggregates."
        return self.status is SolveStatus.OPTIMAL and self.report is not None

    def sort_key(self) -> tuple:
        return (self.size, -1 if self.seed is None else self.seed, self.mode.value)


@dataclass(frozen=True)
class Aggregate:
    mode: RunMode
    trials: int
    excluded: int
    "Trials that ran out of budget."

    mean_performance: float
    satisfaction_rate: float
    mean_motion: float


@dataclass
class ExperimentReport:
    trials: list[Trial] = field(default_factory=list)

    def modes(self) -> list[RunMode]:
        return [m for m in RunMode if any(t.mode is m for t in self.trials)]

    def sizes(self) -> list[int]:
        return sorted({t.size for t in self.trials})

    def aggregate(self, mode: RunMode, size: int | None = None) -> Aggregate:
        """
        Means are taken over agents, pooled across the counted trials, so every
        agent weighs the same whatever its trial's team size.
        """
        chosen = [t for t in self.trials if t.mode is mode and (size is None or t.size == size)]
        counted = [t for t in chosen if t.counted]
        agents = [a for t in counted for a in t.report.agents]
        if agents:
            mean_perf = sum(a.performance for a in agents) / len(agents)
            rate = sum(1 for a in agents if a.satisfied) / len(agents)
            mean_motion = sum(a.motion_cost for a in agents) / len(agents)
        else:
            mean_perf = rate = mean_motion = math.nan
        return Aggregate(mode, len(chosen), len(chosen) - len(counted), mean_perf, rate, mean_motion)


def _run_trial(job: tuple[int, Scenario, RunMode, EncodeOptions | None, SolveOptions | None]) -> Trial:
    size, scenario, mode, encode_options, solve_options = job
    start = time.monotonic()
    outcome = plan_scenario(scenario, mode, encode_options, solve_options)
    elapsed = time.monotonic() - start
    status = outcome.solution.status
    if status is SolveStatus.BUDGET_EXCEEDED:
        logger.warning("%s (%s): solver budget exceeded, trial excluded from aggregates",
                       scenario.name, mode.value)
    return Trial(size, scenario.seed, mode, status, outcome.report, elapsed)


def run_experiment(scenarios: Iterable[tuple[int, Scenario]],
                   modes: Sequence[RunMode] = (RunMode.CAT, RunMode.NO_CAT),
                   encode_options: EncodeOptions | None = None,
                   solve_options: SolveOptions | None = None,
                   jobs: int = 1) -> ExperimentReport:
    """
    Plan each (size, scenario) once per mode. The same scenario object is
    reused across modes so paired trials share their environment.
    """
    work = [(size, scenario, mode, encode_options, solve_options)
            for size, scenario in scenarios for mode in modes]

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_run_trial, work))
    else:
        trials = [_run_trial(job) for job in work]

    trials.sort(key=Trial.sort_key)
    return ExperimentReport(trials)


def trial_seed(seed: int, size: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, size, trial]).generate_state(1)[0])


def sweep(sizes: Sequence[int], trials: int, seed: int,
          modes: Sequence[RunMode] = (RunMode.CAT, RunMode.NO_CAT),
          encode_options: EncodeOptions | None = None,
          solve_options: SolveOptions | None = None,
          jobs: int = 1) -> ExperimentReport:
    "Random size×size environments with the default densities and team, `trials` per size."
    scenarios = []
    for size in sizes:
        for i in range(trials):
            cfg = GeneratorConfig(rows=size, cols=size, seed=trial_seed(seed, size, i))
            scenarios.append((size, random_scenario(cfg)))
    logger.info("sweep: %d sizes x %d trials x %d modes", len(sizes), trials, len(modes))
    return run_experiment(scenarios, modes, encode_options, solve_options, jobs)


#-----------------------------------------------------------------------------
# Report output

def _trial_row(t: Trial) -> dict:
    report = t.report
    return {
        "size": t.size,
        "seed": "" if t.seed is None else t.seed,
        "mode": t.mode.value,
        "status": t.status.value,
        "objective": "" if report is None else repr(float(report.objective)),
        "satisfied": "" if report is None else report.satisfied_count,
        "agents": "" if report is None else len(report.agents),
        "total_motion": "" if report is None else report.total_motion,
        "mean_performance": "" if report is None else repr(report.mean_performance),
    }


def report_to_csv(report: ExperimentReport) -> str:
    "One row per trial. Wall times are left out so seeded runs compare byte for byte."
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for t in report.trials:
        writer.writerow(_trial_row(t))
    return out.getvalue()


def _aggregate_json(a: Aggregate) -> dict:
    def num(x: float):
        return None if math.isnan(x) else x
    return {
        "mode": a.mode.value,
        "trials": a.trials,
        "excluded": a.excluded,
        "mean_performance": num(a.mean_performance),
        "satisfaction_rate": num(a.satisfaction_rate),
        "mean_motion": num(a.mean_motion),
    }


def report_to_json(report: ExperimentReport) -> dict:
    trials = []
    for t in report.trials:
        row = _trial_row(t)
        row["wall_time"] = t.wall_time
        if t.report is not None:
            row["per_agent"] = [
                {"agent": a.agent, "satisfied": a.satisfied, "motion": a.motion_cost, "performance": a.performance}
                for a in t.report.agents]
        trials.append(row)
    return {
        "trials": trials,
        "aggregates": [_aggregate_json(report.aggregate(m)) for m in report.modes()],
        "by_size": [dict(_aggregate_json(report.aggregate(m, size)), size=size)
                    for size in report.sizes() for m in report.modes()],
    }


def write_report(report: ExperimentReport, path: str | os.PathLike) -> None:
    "CSV unless the path ends in .json."
    with open(path, "wt", encoding="utf-8", newline="") as f:
        if str(path).endswith(".json"):
            json.dump(report_to_json(report), f, indent=2)
            f.write("\n")
        else:
            f.write(report_to_csv(report))


#-----------------------------------------------------------------------------
# Traces

def trace_rows(traj: GroupTrajectory, env: Environment) -> list[dict]:
    rows = []
    for j in range(1, traj.num_agents + 1):
        for k in range(traj.horizon + 1):
            q = traj.at(k, j)
            cell = env.cell(q) or ("", "")
            rows.append({
                "agent": j,
                "k": k,
                "row": cell[0],
                "col": cell[1],
                "node": q,
                "labels": ";".join(sorted(env.labels_at(q))),
            })
    return rows


def emit_trace(report: PlanReport, env: Environment, path: str | os.PathLike, fmt: str = "csv") -> None:
    rows = trace_rows(report.trajectory, env)
    with open(path, "wt", encoding="utf-8", newline="") as f:
        if fmt == "json":
            json.dump({"columns": list(TRACE_COLUMNS), "rows": rows}, f, indent=1)
            f.write("\n")
        elif fmt == "csv":
            writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        else:
            raise ValueError(f"unknown trace format {fmt!r} (expected csv or json)")


def load_trace(path: str | os.PathLike, env: Environment, team: Team) -> GroupTrajectory:
    "Read a trace written by emit_trace back into a validated trajectory."
    with open(path, "rt", encoding="utf-8") as f:
        if str(path).endswith(".json"):
            rows = json.load(f)["rows"]
        else:
            rows = list(csv.DictReader(f))

    paths: dict[int, dict[int, int]] = {}
    for row in rows:
        paths.setdefault(int(row["agent"]), {})[int(row["k"])] = int(row["node"])
    if sorted(paths) != team.ids:
        raise InvalidTrajectory(f"trace covers agents {sorted(paths)}, team has {team.ids}")

    columns = []
    for j in team.ids:
        steps = paths[j]
        if sorted(steps) != list(range(len(steps))):
            raise InvalidTrajectory(f"agent {j}: time steps are not 0..{len(steps) - 1}")
        columns.append([steps[k] for k in range(len(steps))])
    traj = GroupTrajectory.from_paths(columns)
    validate_trajectory(env, team, traj)
    return traj
