import argparse
import logging
import sys

from catmip.bnb import Backend, SolveOptions
from catmip.encoder import COLOCATION_ALIASES, ColocationMode, EncodeOptions
from catmip.experiment import RunMode, emit_trace, plan_scenario, sweep, write_report
from catmip.formula import FormulaError
from catmip.lpformat import export_lp
from catmip.mip import SolveStatus
from catmip.parser import to_text
from catmip.simplex import LPEngine
from catmip.scenario import GeneratorConfig, GeneratorError, ScenarioError, load_scenario, random_scenario, save_scenario
from catmip.textio import parse_int_list
from catmip.world import GridError

EXIT_OK = 0
EXIT_NO_PLAN = 1
EXIT_BAD_INPUT = 2


def main(argv=None):
    description = (
        "Plan group trajectories for heterogeneous robot teams whose tasks are "
        "temporal logic formulas over capability-augmenting atoms, by solving "
        "an exact 0-1 program."
    )

    epilog = (
        "Formulas use F[a,b] (eventually), G[a,b] (always), U[a,b] (until), "
        "!, & and |, over atoms such as "
        "CAT(!\"Water\", aug(\"carry\",1), limit(\"wheels\",1)). "
        "Set CATMIP_TIME_BUDGET_S to change the solver's wall-time budget."
    )

    parser = argparse.ArgumentParser(prog="catmip", description=description, epilog=epilog)

    parser.add_argument(
        '-v', '--verbose', action='count', default=0,
        help="Log solver progress (-v) or everything (-vv).")

    commands = parser.add_subparsers(dest="command", required=True)

    plan = commands.add_parser('plan', help="Solve a scenario file and print each agent's result.")
    plan.add_argument('scenario', type=str, help="Path to scenario JSON.")
    plan.add_argument(
        '--no-cat', action='store_true',
        help="Baseline: strip augmenting and limiting clauses so only labels count.")
    plan.add_argument(
        '--mode', choices=[m.value for m in ColocationMode] + list(COLOCATION_ALIASES), default=ColocationMode.COMPACT.value,
        help="Co-location encoding (default: compact).")
    plan.add_argument(
        '--solver', choices=[b.value for b in Backend], default=Backend.AUTO.value,
        help="auto (default) uses the built-in branch-and-bound on small models and HiGHS on large ones.")
    plan.add_argument(
        '--lp-engine', choices=[e.value for e in LPEngine], default=LPEngine.SIMPLEX.value,
        help="LP relaxation solver for the built-in branch-and-bound (default: simplex).")
    plan.add_argument('--export-lp', metavar='FILE', type=str, help="Write the model as CPLEX-LP text.")
    plan.add_argument('--trace', metavar='FILE', type=str,
                      help="Write the planned trajectory, one row per agent and step (.json or .csv).")

    rand = commands.add_parser('random', help="Generate a random scenario.")
    rand.add_argument('--rows', type=int, required=True)
    rand.add_argument('--cols', type=int, required=True)
    rand.add_argument('--seed', type=int, default=0)
    rand.add_argument('-o', metavar='outpath', type=str, required=True, help="Destination scenario file.")

    sw = commands.add_parser('sweep', help="Compare CAT and no-CAT plans over random environments.")
    sw.add_argument('--sizes', type=str, default="4,6,8", help="Comma-separated grid sizes (default: 4,6,8).")
    sw.add_argument('--trials', type=int, default=20, help="Environments per size (default: 20).")
    sw.add_argument('--seed', type=int, default=0)
    sw.add_argument('-j', '--jobs', type=int, default=1, help="Trials to run in parallel.")
    sw.add_argument('--solver', choices=[b.value for b in Backend], default=Backend.AUTO.value)
    sw.add_argument('-o', metavar='outpath', type=str, required=True,
                    help="Report destination: CSV, or JSON with wall times and aggregates if it ends in .json.")

    check = commands.add_parser('check', help="Validate a scenario file without solving it.")
    check.add_argument('scenario', type=str, help="Path to scenario JSON.")

    args = parser.parse_args(argv)

    logging.basicConfig(
        level={0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG),
        format="%(levelname)s %(name)s: %(message)s")

    def do_check():
        scenario = load_scenario(args.scenario)
        env, team = scenario.environment, scenario.team
        print(F"{scenario.name}: {env.num_nodes} nodes, {len(env.edges)} edges, {team.size} agents, "
              F"T_p={scenario.horizon}, M={scenario.effective_big_m:g}")
        for agent in team.agents:
            caps = ",".join(sorted(agent.capabilities)) or "-"
            print(F"  agent {agent.id:<3} start {env.cell(agent.start)}  caps {caps:20}  {to_text(scenario.formulas[agent.id])}")
        for w in scenario.warnings:
            print(F"  warning: {w}")
        return EXIT_OK

    def do_plan():
        scenario = load_scenario(args.scenario)
        mode = RunMode.NO_CAT if args.no_cat else RunMode.CAT
        opts = EncodeOptions(colocation_encoding=ColocationMode(args.mode))
        outcome = plan_scenario(scenario, mode, opts, SolveOptions.from_environment(
            seed=scenario.seed, backend=Backend(args.solver), lp_engine=LPEngine(args.lp_engine)))

        if args.export_lp:
            with open(args.export_lp, "wt", encoding="utf-8") as f:
                f.write(export_lp(outcome.model))

        stats = outcome.solution.stats
        print(F"{scenario.name} ({mode.value}): {outcome.solution.status.value}, "
              F"{stats.nodes} nodes, {stats.lp_iterations} LP iterations, {stats.wall_time:.2f}s")

        report = outcome.report
        if report is None:
            return EXIT_NO_PLAN

        print(F"{'Agent':5} {'Sat':3} {'Motion':6} {'Perf':>8}  Path")
        print(F"{'-'*5} {'-'*3} {'-'*6} {'-'*8}  {'-'*32}")
        for a in report.agents:
            path = " ".join(F"{r},{c}" for r, c in (scenario.environment.cell(q) for q in report.trajectory.path(a.agent)))
            print(F"{a.agent:5} {'yes' if a.satisfied else 'no':3} {a.motion_cost:6} {a.performance:8g}  {path}")
        print(F"satisfied {report.satisfied_count}/{len(report.agents)}, total motion {report.total_motion}, "
              F"mean performance {report.mean_performance:.2f}")
        for d in report.defects:
            print(F"defect: {d}")

        if args.trace:
            fmt = "json" if args.trace.endswith(".json") else "csv"
            emit_trace(report, scenario.environment, args.trace, fmt)

        return EXIT_OK if outcome.solution.status is SolveStatus.OPTIMAL else EXIT_NO_PLAN

    def do_random():
        scenario = random_scenario(GeneratorConfig(rows=args.rows, cols=args.cols, seed=args.seed))
        save_scenario(scenario, args.o)
        for w in scenario.warnings:
            print(F"warning: {w}")
        return EXIT_OK

    def do_sweep():
        try:
            sizes = parse_int_list(args.sizes)
        except ValueError as exc:
            print(F"catmip: --sizes: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
        solve_options = SolveOptions.from_environment(seed=args.seed, backend=Backend(args.solver))
        report = sweep(sizes, args.trials, args.seed, solve_options=solve_options, jobs=args.jobs)
        write_report(report, args.o)

        print(F"{'Mode':7} {'Trials':6} {'Excl':4} {'Perf':>8} {'Sat':>6} {'Motion':>6}")
        for m in report.modes():
            a = report.aggregate(m)
            print(F"{m.value:7} {a.trials:6} {a.excluded:4} {a.mean_performance:8.2f} "
                  F"{a.satisfaction_rate:6.2f} {a.mean_motion:6.2f}")
        excluded = sum(report.aggregate(m).excluded for m in report.modes())
        return EXIT_NO_PLAN if excluded else EXIT_OK

    handlers = {"check": do_check, "plan": do_plan, "random": do_random, "sweep": do_sweep}

    try:
        return handlers[args.command]()
    except (ScenarioError, FormulaError, GeneratorError, GridError, OSError) as exc:
        print(F"catmip: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == '__main__':
    sys.exit(main())
