from os import PathLike

from catmip.bnb import SolveOptions, solve
from catmip.encoder import ColocationMode, EncodeOptions, PlanReport, decode, encode
from catmip.experiment import RunMode, plan_scenario, run_experiment, sweep
from catmip.formula import Formula
from catmip.lpformat import export_lp, read_lp
from catmip.oracle import brute_force_plan, evaluate_plan, rho
from catmip.parser import parse, to_text
from catmip.scenario import GeneratorConfig, Scenario, load_scenario, random_scenario
from catmip.world import Environment, GroupTrajectory, Team, build_grid


def load(path: str | PathLike) -> Scenario:
    return load_scenario(path)


def plan(scenario_or_path: Scenario | str | PathLike, no_cat: bool = False,
         colocation: str = "compact") -> PlanReport | None:
    """
    Solve a scenario (or scenario file) and return the decoded plan, or None
    if the solver stopped without finding one.
    """
    if isinstance(scenario_or_path, Scenario):
        scenario = scenario_or_path
    else:
        scenario = load_scenario(scenario_or_path)
    outcome = plan_scenario(
        scenario,
        RunMode.NO_CAT if no_cat else RunMode.CAT,
        EncodeOptions(colocation_encoding=ColocationMode(colocation)))
    return outcome.report
