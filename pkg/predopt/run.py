import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from predopt.core import STEPS_PER_DAY, Instance, Schedule, build_time_grid
from predopt.data_loader import (
    SeriesSet,
    load_instance,
    load_scenarios,
    load_schedule,
    load_tsf,
    save_instance,
    save_schedule,
    save_tsf,
)
from predopt.evaluator import check_feasibility, objective_cost, saa_cost
from predopt.forecast import (
    aggregate_net_load,
    forecast_series_set,
    history_before,
    scenario_series_set,
    seasonal_median_forecast,
)
from predopt.generator import GeneratorParams, generate_instance, synthetic_base_series
from predopt.heuristics import FixOptParams, run_solver
from predopt.metrics import ForecastEvalInput, mase, score_series_sets
from predopt.mip import (
    assign_rooms,
    build_deterministic_model,
    build_saa_model,
    check_assignment,
    count_naive_start_variables,
    decode_assignment,
    export_model,
    import_solution,
)
from predopt.search import SolveReport
from predopt.utils import format_report, save_trace, setup_logging, validate_config

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def create_default_config():
    """Create and return the default configuration dictionary."""
    return {
        "seed": 0,
        "format": "human",
        "log_level": "INFO",
        "verbose": False,
        "trace_csv": None,
        "generator": {
            "size": "small",
            "start_date": "2020-10-01",
            "num_days": 31,
            "num_buildings": 6,
            "num_solar": 6,
            "history_days": 56,
            "duration_range": [2, 10],
            "rooms_range": [1, 3],
            "p_small": 0.75,
            "power_fraction_range": [0.05, 0.1],
            "value_multiplier_range": [0.9, 1.5],
            "penalty_fraction_range": [0.2, 0.5],
            "p_precedence_recurring": 0.25,
            "p_precedence_once_off": 0.1,
            "precedence_trials": 4,
            "num_batteries": 2,
            "battery_capacity": 300.0,
            "battery_power": 150.0,
            "battery_efficiency": 0.81,
            "battery_initial": 0.0,
        },
        "solver": {
            "name": "lns",
            "mode": "det",
            "alpha": 1.10,
            "budget_secs": 60.0,
            "max_evaluations": 20000,
            "exact_cap": 1e7,
            "workers": None,
            "starts": 1,
            "even_only": False,
        },
        "lns": {
            "r_num": 10,
            "a_num": 5,
            "max_iter": 150,
            "patience": 15,
            "tol": 1e-5,
            "sub_cap": 5000,
            "sub_evaluations": 500,
            "log_interval": 10,
        },
        "forecast": {
            "weeks": 8,
            "season": 96,
            "quantiles": [0.1, 0.9],
        },
    }


# argparse destination -> config key, applied only when the flag was given
FLAG_KEYS = {
    "seed": "seed",
    "format": "format",
    "log_level": "log_level",
    "verbose": "verbose",
    "trace_csv": "trace_csv",
    "size": "generator.size",
    "start_date": "generator.start_date",
    "num_days": "generator.num_days",
    "solver": "solver.name",
    "mode": "solver.mode",
    "alpha": "solver.alpha",
    "budget_secs": "solver.budget_secs",
    "max_evaluations": "solver.max_evaluations",
    "exact_cap": "solver.exact_cap",
    "workers": "solver.workers",
    "starts": "solver.starts",
    "even_only": "solver.even_only",
    "r_num": "lns.r_num",
    "a_num": "lns.a_num",
    "max_iter": "lns.max_iter",
    "patience": "lns.patience",
    "tol": "lns.tol",
    "weeks": "forecast.weeks",
    "season": "forecast.season",
    "quantiles": "forecast.quantiles",
}


class UsageError(Exception):
    """Bad command line: unknown tokens, unknown keys or invalid config values."""


def build_config(args: argparse.Namespace, overrides: Sequence[str] = ()):
    """
    Layer the configuration: defaults, then explicit flags, then `key=value` overrides.

    Raises:
        UsageError: for unknown override keys or values rejected by validate_config.
    """
    cfg = OmegaConf.create(create_default_config())
    OmegaConf.set_struct(cfg, True)
    try:
        for dest, key in FLAG_KEYS.items():
            value = getattr(args, dest, None)
            if value is not None and value is not False:
                OmegaConf.update(cfg, key, list(value) if isinstance(value, tuple) else value)
        cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(overrides)))
        return validate_config(cfg)
    except (OmegaConfBaseException, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("human", "structured"), help="report format")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    common.add_argument("--seed", type=int, help="random seed, echoed in every report")
    common.add_argument("--verbose", action="store_true", help="progress bars")
    return common


def _solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--solver", help="exact, ls, lns, two-stage or construct")
    parser.add_argument("--mode", help="det, avg or worst")
    parser.add_argument("--scenarios", nargs="+", default=[], help="scenario TSF files (net base load)")
    parser.add_argument("--alpha", type=float, help="two-stage peak cap multiplier")
    parser.add_argument("--budget-secs", dest="budget_secs", type=float)
    parser.add_argument("--max-evaluations", dest="max_evaluations", type=int)
    parser.add_argument("--exact-cap", dest="exact_cap", type=float)
    parser.add_argument("--r-num", dest="r_num", type=int, help="recurring activities freed per iteration")
    parser.add_argument("--a-num", dest="a_num", type=int, help="once-off activities freed per iteration")
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--tol", type=float, help="relative improvement counted as progress")
    parser.add_argument("--starts", type=int, help="independent seeded runs")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--even-only", dest="even_only", action="store_true", help="construct on even slots only")
    parser.add_argument("--trace-csv", dest="trace_csv", help="append the objective trace to this CSV")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="predopt",
        description="Forecast, schedule and price office activities and batteries. "
        "Trailing key=value tokens override configuration entries (e.g. lns.max_iter=20).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", parents=[common], help="generate an instance")
    gen.add_argument("-o", "--output", required=True, help="instance JSON")
    gen.add_argument("--size", help="small or large")
    gen.add_argument("--start-date", dest="start_date")
    gen.add_argument("--num-days", dest="num_days", type=int)
    gen.add_argument("--base-series", dest="base_series", help="TSF with Building*/Solar* (and price) series")
    gen.add_argument("--price-series", dest="price_series", help="TSF with a price series")
    gen.add_argument("--name")
    gen.add_argument("--schedule-out", dest="schedule_out", help="tentative recurring schedule JSON")
    gen.add_argument("--history-out", dest="history_out", help="series before the grid as TSF")
    gen.add_argument("--actual-out", dest="actual_out", help="series over the grid as TSF")

    forecast = commands.add_parser("forecast", parents=[common], help="seasonal-median forecast of TSF series")
    forecast.add_argument("history", help="history TSF")
    forecast.add_argument("-o", "--output", required=True, help="forecast TSF")
    forecast.add_argument("--instance", help="take start and horizon from this instance's grid")
    forecast.add_argument("--start", help="first forecast timestamp")
    forecast.add_argument("--horizon", type=int, help="forecast length in 15-minute slots")
    forecast.add_argument("--weeks", type=int)
    forecast.add_argument("--net", action="store_true", help="forecast the aggregate net load only")

    scenarios = commands.add_parser("scenarios", parents=[common], help="quantile net-load scenarios")
    scenarios.add_argument("history", help="history TSF")
    scenarios.add_argument("-o", "--output", required=True, help="scenario TSF")
    scenarios.add_argument("--instance", help="take start, horizon and solar assignment from this instance")
    scenarios.add_argument("--start")
    scenarios.add_argument("--horizon", type=int)
    scenarios.add_argument("--series", help="series to sample from instead of the aggregate net load")
    scenarios.add_argument("--quantiles", type=float, nargs="+")
    scenarios.add_argument("--weeks", type=int)

    solve = commands.add_parser("solve", parents=[common], help="optimise a schedule")
    solve.add_argument("instance")
    solve.add_argument("-o", "--output", required=True, help="schedule JSON")
    solve.add_argument("--init", help="warm-start schedule JSON")
    _solver_flags(solve)

    check = commands.add_parser("check", parents=[common], help="check a schedule for feasibility")
    check.add_argument("instance")
    check.add_argument("schedule", help="schedule JSON, or a `variable value` file with --mip-solution")
    check.add_argument("--mip-solution", dest="mip_solution", action="store_true",
                       help="read the schedule from a MIP solver solution")

    cost = commands.add_parser("cost", parents=[common], help="price a schedule")
    cost.add_argument("instance")
    cost.add_argument("schedule")
    cost.add_argument("--scenarios", nargs="+", default=[])
    cost.add_argument("--mode", help="avg or worst, with --scenarios")

    score = commands.add_parser("score-forecast", parents=[common], help="MASE, MAE and RMSE per series")
    score.add_argument("forecast")
    score.add_argument("actual")
    score.add_argument("history")
    score.add_argument("--season", type=int, help="seasonal period of the MASE scale, in slots")

    export = commands.add_parser("export-mip", parents=[common], help="write the MIP model as MPS or LP")
    export.add_argument("instance")
    export.add_argument("-o", "--output", required=True)
    export.add_argument("--mip-format", dest="mip_format", choices=("mps", "lp"), default="mps")
    export.add_argument("--scenarios", nargs="+", default=[])

    demo = commands.add_parser("demo", parents=[common], help="generate, forecast, solve and price")
    demo.add_argument("--size")
    demo.add_argument("--output-dir", dest="output_dir", help="also write the instance and schedule here")
    _solver_flags(demo)
    return parser


# ----------------------------------------------------------------------------
# Shared steps
# ----------------------------------------------------------------------------


def _emit(cfg, title: str, fields: Dict, rows: Optional[List[str]] = None) -> None:
    fields = dict(fields)
    fields["seed"] = int(cfg.seed)
    print(format_report(title, fields, cfg.format, rows))


def _base_series(cfg, grid, base_path: Optional[str] = None) -> SeriesSet:
    if base_path:
        return load_tsf(base_path)
    gen = cfg.generator
    rng = np.random.default_rng([int(cfg.seed), 1])
    series = synthetic_base_series(grid, gen.num_buildings, gen.num_solar, rng, gen.history_days)
    logging.info(f"Synthesised {len(series)} base series over {gen.history_days + grid.num_days} days")
    return series


def _generate(cfg, series: SeriesSet, grid, price: Optional[SeriesSet] = None, name: str = ""):
    values = OmegaConf.to_container(cfg.generator, resolve=True)
    values["seed"] = int(cfg.seed)
    params = GeneratorParams.from_dict(values)
    return generate_instance(params, series, grid, price, name)


def _scenarios(instance: Instance, paths: Sequence[str]) -> Optional[List[np.ndarray]]:
    return load_scenarios(list(paths), instance.grid) if paths else None


def _mode(cfg, scenarios) -> str:
    mode = cfg.solver.mode
    if scenarios and mode == "det":
        logging.warning("Scenarios given with mode det; pricing by the scenario average")
        return "avg"
    if not scenarios and mode != "det":
        raise ValueError(f"mode {mode} needs --scenarios")
    return mode


def _solve(cfg, instance: Instance, init: Optional[Schedule], scenarios) -> SolveReport:
    mode = _mode(cfg, scenarios)
    solver = cfg.solver
    logging.info(f"Solver: {solver.name}, mode {mode}, seed {cfg.seed}")
    return run_solver(
        instance,
        solver.name,
        init=init,
        scenarios=scenarios,
        mode=mode,
        alpha=float(solver.alpha),
        params=FixOptParams.from_dict(cfg.lns, seed=int(cfg.seed)),
        max_evaluations=solver.max_evaluations,
        budget_secs=solver.budget_secs,
        seed=int(cfg.seed),
        exact_cap=float(solver.exact_cap),
        starts=int(solver.starts),
        workers=solver.workers,
        even_only=bool(solver.even_only),
        verbose=bool(cfg.verbose),
    )


def _trace_rows(trace: Sequence[float]) -> List[str]:
    return [f"trace,{i},{value:.6f}" for i, value in enumerate(trace)]


def _save_trace(cfg, report: SolveReport) -> None:
    if cfg.trace_csv:
        save_trace(report.trace, cfg.trace_csv, {"seed": int(cfg.seed), "solver": cfg.solver.name})


def _log_violations(violations) -> None:
    for violation in violations:
        logging.error(f"Violation: {violation}")


def _forecast_window(cfg, args):
    if args.instance:
        grid = load_instance(args.instance).grid
        start, horizon = pd.Timestamp(grid.start_date), grid.total_slots
    else:
        start = pd.Timestamp(cfg.generator.start_date)
        horizon = int(cfg.generator.num_days) * STEPS_PER_DAY
    if args.start:
        start = pd.Timestamp(args.start)
    if args.horizon is not None:
        horizon = args.horizon
    return start, horizon


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------


def cmd_gen(cfg, args) -> int:
    grid = build_time_grid(cfg.generator.start_date, int(cfg.generator.num_days))
    series = _base_series(cfg, grid, args.base_series)
    price = load_tsf(args.price_series) if args.price_series else None
    instance, tentative = _generate(cfg, series, grid, price, args.name or "")
    save_instance(instance, args.output)
    if args.schedule_out:
        save_schedule(tentative.restricted_to_recurring(), args.schedule_out)
    start = pd.Timestamp(grid.start_date)
    end = start + pd.Timedelta(minutes=15 * grid.total_slots)
    if args.history_out:
        history = SeriesSet({name: s[s.index < start] for name, s in series.series.items()}, series.frequency)
        save_tsf(history, args.history_out)
    if args.actual_out:
        actual = SeriesSet(
            {name: s[(s.index >= start) & (s.index < end)] for name, s in series.series.items()}, series.frequency
        )
        save_tsf(actual, args.actual_out)
    _emit(cfg, "gen", {
        "instance": args.output,
        "name": instance.name,
        "recurring": len(instance.recurring),
        "once_off": len(instance.once_off),
        "buildings": len(instance.buildings),
        "batteries": len(instance.batteries),
        "slots": grid.total_slots,
    })
    return EXIT_OK


def cmd_forecast(cfg, args) -> int:
    history = load_tsf(args.history)
    start, horizon = _forecast_window(cfg, args)
    if args.net:
        net = aggregate_net_load(history)
        history = SeriesSet({"net_load": net})
    forecasts = forecast_series_set(history, start, horizon, int(cfg.forecast.weeks), bool(cfg.verbose))
    save_tsf(forecasts, args.output)
    _emit(cfg, "forecast", {
        "output": args.output,
        "series": len(forecasts),
        "start": str(start),
        "horizon": horizon,
        "weeks": int(cfg.forecast.weeks),
    })
    return EXIT_OK


def cmd_scenarios(cfg, args) -> int:
    history = load_tsf(args.history)
    start, horizon = _forecast_window(cfg, args)
    if args.series:
        if args.series not in history:
            raise ValueError(f"unknown series {args.series}")
        source = history[args.series]
    else:
        solar = None
        if args.instance:
            solar = [b.solar_series_id for b in load_instance(args.instance).buildings]
        source = aggregate_net_load(history, solar)
    quantiles = [float(q) for q in cfg.forecast.quantiles]
    scenarios = scenario_series_set(source, start, horizon, quantiles, int(cfg.forecast.weeks))
    save_tsf(scenarios, args.output)
    _emit(cfg, "scenarios", {
        "output": args.output,
        "scenarios": len(scenarios),
        "names": " ".join(scenarios.names),
        "start": str(start),
        "horizon": horizon,
    })
    return EXIT_OK


def _report_fields(cfg, report: SolveReport, instance: Instance) -> Dict:
    cost = objective_cost(instance, report.schedule)
    fields = {
        "solver": cfg.solver.name,
        "termination": report.termination,
        "objective": report.objective,
        "iterations": report.iterations,
        "evaluations": report.evaluations,
    }
    fields.update(cost.as_dict())
    for key, value in sorted(report.extras.items()):
        fields[key] = value
    if cfg.format == "human":
        fields["wall_time"] = report.wall_time
    return fields


def cmd_solve(cfg, args) -> int:
    instance = load_instance(args.instance)
    init = load_schedule(args.init) if args.init else None
    scenarios = _scenarios(instance, args.scenarios)
    report = _solve(cfg, instance, init, scenarios)
    violations = check_feasibility(instance, report.schedule)
    if violations:
        _log_violations(violations)
        logging.error(f"Solver {cfg.solver.name} returned an infeasible schedule ({len(violations)} violations)")
        return EXIT_DOMAIN
    save_schedule(report.schedule, args.output)
    _save_trace(cfg, report)
    fields = {"schedule": args.output}
    fields.update(_report_fields(cfg, report, instance))
    if scenarios:
        fields["saa_cost"] = saa_cost(instance, report.schedule, scenarios, _mode(cfg, scenarios))
    _emit(cfg, "solve", fields, _trace_rows(report.trace))
    return EXIT_OK


def _schedule_from_solution(instance: Instance, path: str) -> Schedule:
    model = build_deterministic_model(instance)
    assignment = import_solution(model, Path(path).read_text())
    result = check_assignment(model, assignment)
    if not result.feasible:
        for name in result.violated[:10]:
            logging.error(f"MIP constraint violated: {name}")
        raise ValueError(f"solution violates {len(result.violated)} model constraint(s)")
    return assign_rooms(instance, decode_assignment(model, assignment))


def cmd_check(cfg, args) -> int:
    instance = load_instance(args.instance)
    if args.mip_solution:
        schedule = _schedule_from_solution(instance, args.schedule)
    else:
        schedule = load_schedule(args.schedule)
    violations = check_feasibility(instance, schedule)
    status = "feasible" if not violations else "infeasible"
    rows = [f"violation,{v.kind},{'' if v.subject is None else v.subject},{'' if v.slot is None else v.slot}"
            for v in violations]
    if cfg.format == "human":
        rows = [f"  {v}" for v in violations]
    _emit(cfg, "check", {"status": status, "violations": len(violations)}, rows)
    return EXIT_OK if not violations else EXIT_DOMAIN


def cmd_cost(cfg, args) -> int:
    instance = load_instance(args.instance)
    schedule = load_schedule(args.schedule)
    scenarios = _scenarios(instance, args.scenarios)
    fields = objective_cost(instance, schedule).as_dict()
    if scenarios:
        mode = args.mode or ("avg" if cfg.solver.mode == "det" else cfg.solver.mode)
        fields["mode"] = mode
        fields["saa_cost"] = saa_cost(instance, schedule, scenarios, mode)
    _emit(cfg, "cost", fields)
    return EXIT_OK


def cmd_score_forecast(cfg, args) -> int:
    frame = score_series_sets(load_tsf(args.forecast), load_tsf(args.actual), load_tsf(args.history),
                              int(cfg.forecast.season))
    rows = [f"score,{r.series},{r.mase:.6f},{r.mae:.6f},{r.rmse:.6f}" for r in frame.itertuples()]
    mean = frame[frame["series"] == "mean"]
    fields = {"series": len(frame) - len(mean), "season": int(cfg.forecast.season)}
    if len(mean):
        fields["mean_mase"] = float(mean["mase"].iloc[0])
    _emit(cfg, "score-forecast", fields, rows)
    return EXIT_OK


def cmd_export_mip(cfg, args) -> int:
    instance = load_instance(args.instance)
    scenarios = _scenarios(instance, args.scenarios)
    model = build_saa_model(instance, scenarios) if scenarios else build_deterministic_model(instance)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    Path(args.output).write_text(export_model(model, args.mip_format))
    fields = {"output": args.output, "format": args.mip_format}
    fields.update(model.counts())
    fields["naive_start_variables"] = count_naive_start_variables(instance)
    _emit(cfg, "export-mip", fields)
    return EXIT_OK


def cmd_demo(cfg, args) -> int:
    """Generate an instance, solve it against the forecast from the generator's schedule and price the result on the realised load."""
    grid = build_time_grid(cfg.generator.start_date, int(cfg.generator.num_days))
    series = _base_series(cfg, grid)
    instance, tentative = _generate(cfg, series, grid)
    net = aggregate_net_load(series, [b.solar_series_id for b in instance.buildings])
    history = history_before(net, pd.Timestamp(grid.start_date)).to_numpy()
    forecast = seasonal_median_forecast(history, grid.total_slots, int(cfg.forecast.weeks))
    predicted_instance = instance.with_net_base_load(forecast)

    report = _solve(cfg, predicted_instance, tentative.restricted_to_recurring(), None)
    violations = check_feasibility(instance, report.schedule)
    if violations:
        _log_violations(violations)
        return EXIT_DOMAIN
    if args.output_dir:
        out = Path(args.output_dir)
        save_instance(instance, out / "instance.json")
        save_schedule(report.schedule, out / "schedule.json")
    _save_trace(cfg, report)

    predicted = objective_cost(predicted_instance, report.schedule)
    realised = objective_cost(instance, report.schedule)
    score = mase(ForecastEvalInput(history, instance.net_base_load, forecast, int(cfg.forecast.season)))
    fields = {"instance": instance.name, "solver": cfg.solver.name, "termination": report.termination}
    fields.update({f"forecast_{key}": value for key, value in predicted.as_dict().items()})
    fields.update({f"actual_{key}": value for key, value in realised.as_dict().items()})
    fields["mase"] = score
    _emit(cfg, "demo", fields, _trace_rows(report.trace))
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "gen": cmd_gen,
    "forecast": cmd_forecast,
    "scenarios": cmd_scenarios,
    "solve": cmd_solve,
    "check": cmd_check,
    "cost": cmd_cost,
    "score-forecast": cmd_score_forecast,
    "export-mip": cmd_export_mip,
    "demo": cmd_demo,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point: parse, configure, run one subcommand and return its exit code."""
    setup_logging(level=logging.INFO)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    overrides = [token for token in extra if "=" in token and not token.startswith("-")]
    unknown = [token for token in extra if token not in overrides]
    try:
        if unknown:
            raise UsageError(f"unrecognized arguments: {' '.join(unknown)}")
        cfg = build_config(args, overrides)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        logging.error(f"Invalid configuration: {exc}")
        return EXIT_USAGE

    setup_logging(level=str(cfg.log_level), color=cfg.format == "human")
    logging.debug(f"Configuration:\n{OmegaConf.to_yaml(cfg)}")
    try:
        return COMMANDS[args.command](cfg, args)
    except (ValueError, RuntimeError, OSError) as exc:
        logging.error(f"{args.command} failed: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())


"""
Command line for the predict-then-optimise pipeline.

Every subcommand reads its inputs from files, layers the configuration
(defaults, explicit flags, then trailing key=value overrides) and prints a
report. Structured reports are `key=value` lines closed by `end=<command>`.

Configuration Parameters:
- seed (int): Seed for instance generation and the solvers; echoed in every report.
- format (str): Report format ("human" or "structured"; structured output carries no color).
- log_level (str): Root logger level.
- verbose (bool): Show progress bars.
- trace_csv (str): CSV to which the objective trace of solve/demo is appended.
- generator.size (str): "small" (50 recurring, 20 once-off) or "large" (200, 100).
- generator.start_date (str): First day of the scheduling month.
- generator.num_days (int): Days in the scheduling grid (at least 7).
- generator.num_buildings, generator.num_solar (int): Synthetic series when no --base-series is given.
- generator.history_days (int): Days of synthetic history before the grid (forecasting input).
- generator.duration_range, generator.rooms_range (list): Inclusive ranges of activity duration (slots) and rooms.
- generator.p_small (float): Probability an activity needs small rooms.
- generator.power_fraction_range (list): Activity power per room as a fraction of the maximum base load.
- generator.value_multiplier_range, generator.penalty_fraction_range (list): Once-off value and after-hours penalty ranges.
- generator.p_precedence_recurring, generator.p_precedence_once_off (float): Precedence sampling probabilities.
- generator.precedence_trials (int): Predecessor draws per activity.
- generator.num_batteries (int), battery_capacity (kWh), battery_power (kW), battery_efficiency, battery_initial (kWh).
- solver.name (str): "exact", "ls", "lns", "two-stage" or "construct".
- solver.mode (str): "det" (point forecast), "avg" or "worst" over --scenarios.
- solver.alpha (float): Peak cap multiplier of the two-stage solver.
- solver.budget_secs (float): Wall-clock budget per solve.
- solver.max_evaluations (int): Objective evaluations allowed to the local search.
- solver.exact_cap (float): Largest search space the exact solver accepts.
- solver.workers (int): Threads for multi-start runs (physical cores when unset).
- solver.starts (int): Independent seeded runs; the best is kept.
- solver.even_only (bool): Construct with activities on even slots only.
- lns.r_num, lns.a_num (int): Recurring and once-off activities freed per iteration.
- lns.max_iter (int): Iteration limit.
- lns.patience (int): Iterations without sufficient improvement before stopping.
- lns.tol (float): Relative improvement that resets the patience counter.
- lns.sub_cap (int): Largest subproblem enumerated exhaustively.
- lns.sub_evaluations (int): Evaluations allowed to a subproblem too large to enumerate.
- lns.log_interval (int): Log every x iterations.
- forecast.weeks (int): Weeks of history pooled per forecast slot.
- forecast.season (int): Seasonal period of the MASE scale, in slots.
- forecast.quantiles (list): Quantiles of the scenario set.
"""
