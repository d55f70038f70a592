"""Command-line driver for scenarios, solvers and experiments."""

import argparse
import logging
import sys
import time
from datetime import date, datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__, config
from .feasibility import FeasibilityOptions, check_schedule
from .formulation import Kind, ProblemKind, build_model, to_lp_text
from .geo import ContactSet, extract_contacts
from .greedy import greedy, greedy_n
from .ingest import (
    BBox, generate_deployment, generate_deployments, generate_trajectories,
    ingest_tdrive, mean_trajectories,
)
from .metrics import delay_cdf, report, sweep_delay_tolerance, sweep_fairness
from .models import ParamSet, RelayError, Scenario, SolveResult, TimeGrid, to_fraction, validate_scenario
from .simulator import compare_algorithms, cost_comparison, baseline_units, run_penetration_grid
from .solver import solve_bruteforce, solve_exact, solve_milp
from .storage import (
    load_scenario, result_document, save_scenario, write_delay_cdf_csv, write_json,
    write_manifest, write_metrics_csv, write_schedule_csv, write_table_csv,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _fraction_list(text: str) -> List:
    return [to_fraction(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _out_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(config.OUTPUT_DIR) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> Scenario:
    """Load the scenario and apply parameter overrides from the command line."""
    s = load_scenario(args.scenario)
    changes = {}
    if args.price_per_mb is not None:
        changes["unit_cost"] = to_fraction(args.price_per_mb) * s.params.unit_size_bytes / config.BYTES_PER_MB
    for name in ("c_min", "c_max", "gen_rate", "fairness_weight", "delay_bound_s", "delay_tolerance"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = to_fraction(value)
    if args.range_m is not None:
        changes["range_m"] = float(args.range_m)
    if args.per_vehicle_cap is not None:
        changes["per_vehicle_cap"] = args.per_vehicle_cap
    return s.with_params(**changes) if changes else s


def _problem_kind(args, s: Scenario, kind: str) -> ProblemKind:
    flags = dict(
        vehicle_exclusive=args.vehicle_exclusive,
        reachable_sensors_only=args.reachable_only,
    )
    if kind == Kind.DF_CSPV.value and s.params.delay_bound_s is None:
        s = s.with_params(delay_bound_s=config.DELAY_BOUND_S)
    return ProblemKind.from_params(kind, s.params, **flags)


def _write_result(out: Path, result: SolveResult, s: Scenario, contacts: ContactSet) -> List[str]:
    metrics = report(result, s)
    write_schedule_csv(out / "schedule.csv", result.schedule, s, contacts)
    write_json(out / "report.json", result_document(result, metrics, s))
    write_metrics_csv(out / "metrics.csv", metrics)
    write_delay_cdf_csv(out / "delay_cdf.csv", delay_cdf(metrics.per_unit_delays_s))
    print(
        f"{result.algorithm}: throughput {metrics.throughput_units}, "
        f"{metrics.participant_count} participants, gap {metrics.fairness_gap_units}, "
        f"spend ${float(metrics.total_spend):.4f}"
    )
    return ["schedule.csv", "report.json", "metrics.csv", "delay_cdf.csv"]


def _arguments(args) -> Dict:
    return {k: v for k, v in vars(args).items() if k not in ("handler",)}


# Commands


def cmd_validate(args) -> int:
    s = load_scenario(args.scenario)
    violations = validate_scenario(s)
    for violation in violations:
        print(violation)
    if violations:
        return 1
    print(f"ok: {s.n_vehicles} vehicles, {s.n_sensors} sensors, {s.horizon} slots")
    return 0


def cmd_ingest(args) -> int:
    bbox = BBox.parse(args.bbox)
    epoch = datetime.fromisoformat(args.epoch) if args.epoch else None
    days = [date.fromisoformat(day) for day in args.day]
    per_day = [ingest_tdrive(args.input, bbox, day, epoch, strict=args.strict) for day in days]
    if len(per_day) > 1 or args.mean_of_days:
        vehicles = mean_trajectories(per_day)
    else:
        vehicles = per_day[0]

    sensors = generate_deployment(bbox, args.sensors, args.seed)
    s = Scenario(TimeGrid(args.horizon), tuple(vehicles), tuple(sensors), ParamSet())
    path = save_scenario(s, args.output)
    write_manifest(path.parent, "ingest", _arguments(args), s, [path.name])
    print(f"wrote {path}: {s.n_vehicles} vehicles, {s.n_sensors} sensors")
    return 0


def cmd_deploy(args) -> int:
    s = load_scenario(args.scenario)
    bbox = BBox.parse(args.bbox)
    out = _out_dir(args, "deploy")
    outputs = []
    for k, sensors in enumerate(generate_deployments(bbox, args.sensors, args.deployments, args.seed)):
        name = f"deployment_{k}.json"
        save_scenario(s.with_sensors(sensors), out / name)
        outputs.append(name)
    write_manifest(out, "deploy", _arguments(args), s, outputs)
    print(f"wrote {len(outputs)} deployments to {out}")
    return 0


SOLVERS: Dict[str, Callable] = {"exact": solve_exact, "milp": solve_milp}


def cmd_solve(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    kind = _problem_kind(args, s, args.kind)
    model = build_model(s, contacts, kind)
    if args.solver == "exact":
        result = solve_exact(model, args.time_limit, warm_start=greedy(s, contacts).schedule)
    else:
        result = SOLVERS[args.solver](model, args.time_limit)
    _check(s, result, kind)

    out = _out_dir(args, f"solve-{args.kind}")
    outputs = _write_result(out, result, s, contacts)
    if not result.solver_stats.proven_optimal:
        logger.warning(f"Time limit reached; dual bound {result.solver_stats.dual_bound}")
    write_manifest(out, f"solve {args.kind}", _arguments(args), s, outputs)
    return 0


def _check(s: Scenario, result: SolveResult, kind: Optional[ProblemKind] = None, exclusive: bool = False) -> None:
    options = FeasibilityOptions(
        vehicle_exclusive=exclusive or bool(kind and kind.vehicle_exclusive),
        per_vehicle_cap=s.params.per_vehicle_cap,
        delay_limit_s=kind.delay_limit_s if kind else None,
    )
    violations = check_schedule(s, result.schedule, options)
    if violations:
        raise RelayError(f"{result.algorithm} produced an infeasible schedule: {violations[0]}")


def cmd_greedy(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    if args.command == "greedyn":
        result = greedy_n(s, contacts, excluded_units_consumed=not args.return_excluded_units)
    else:
        result = greedy(s, contacts)
    _check(s, result, exclusive=True)

    out = _out_dir(args, args.command)
    outputs = _write_result(out, result, s, contacts)
    write_manifest(out, args.command, _arguments(args), s, outputs)
    return 0


def cmd_oracle(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s)
    kind = _problem_kind(args, s, args.kind)
    result = solve_bruteforce(build_model(s, contacts, kind))
    out = _out_dir(args, f"oracle-{args.kind}")
    outputs = _write_result(out, result, s, contacts)
    write_manifest(out, f"oracle {args.kind}", _arguments(args), s, outputs)
    print(f"objective {result.objective_value!r}")
    return 0


def cmd_sweep_fairness(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    base = _problem_kind(args, s, "fcspv")
    solver = lambda m: solve_exact(m, args.time_limit)
    selected, table = sweep_fairness(s, contacts, args.grid, solver, base, args.workers)

    out = _out_dir(args, "sweep-fairness")
    write_table_csv(out / "fairness_sweep.csv", table)
    write_json(out / "selected.json", {"fairness_weight": str(selected)})
    write_manifest(out, "sweep-fairness", _arguments(args), s, ["fairness_sweep.csv", "selected.json"])
    print(f"selected F = {selected}")
    return 0


def cmd_sweep_delay(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    solver = lambda m: solve_exact(m, args.time_limit)
    table = sweep_delay_tolerance(s, contacts, args.grid, solver=solver, workers=args.workers)

    out = _out_dir(args, "sweep-delay")
    write_table_csv(out / "delay_sweep.csv", table)
    write_manifest(out, "sweep-delay", _arguments(args), s, ["delay_sweep.csv"])
    print(table.to_string(index=False))
    return 0


def _plan(args, s: Scenario, contacts: ContactSet) -> SolveResult:
    if args.algorithm == "greedy":
        return greedy(s, contacts)
    kind = _problem_kind(args, s, args.kind)
    return solve_exact(build_model(s, contacts, kind), args.time_limit)


def cmd_penetration(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    plan = _plan(args, s, contacts)
    table = run_penetration_grid(
        plan, s, contacts, args.rates, args.seeds, args.recompute_solver, args.workers, args.time_limit,
    )
    out = _out_dir(args, "penetration")
    write_table_csv(out / "penetration.csv", table)
    write_manifest(out, "penetration", _arguments(args), s, ["penetration.csv"])
    print(table.to_string(index=False))
    return 0


def cmd_compare_baseline(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    plan = _plan(args, s, contacts)
    base = baseline_units(plan.total_spend, args.direct_price_per_mb, s.params.unit_size_bytes)
    ratio = cost_comparison(plan, s, args.direct_price_per_mb)

    out = _out_dir(args, "compare-baseline")
    write_json(out / "baseline.json", {
        "algorithm": plan.algorithm,
        "throughput": plan.throughput,
        "total_spend": str(plan.total_spend),
        "baseline_units": base,
        "ratio": ratio,
    })
    write_manifest(out, "compare-baseline", _arguments(args), s, ["baseline.json"])
    print(f"relayed {plan.throughput} units vs {base} direct units: ratio {ratio:.4f}")
    return 0


def cmd_compare(args) -> int:
    s = _scenario(args)
    bbox = BBox.parse(args.bbox)
    deployments = generate_deployments(bbox, args.sensors, args.deployments, args.seed)
    table = compare_algorithms(s, deployments, args.direct_price_per_mb, args.time_limit, args.workers)

    out = _out_dir(args, "compare")
    write_table_csv(out / "comparison.csv", table)
    write_manifest(out, "compare", _arguments(args), s, ["comparison.csv"])
    summary = table.groupby("algorithm", sort=False)[["throughput", "participants", "fairness_gap"]].mean()
    print(summary.to_string())
    return 0


def cmd_bench(args) -> int:
    bbox = BBox.parse(args.bbox)
    params = ParamSet.from_price_per_mb(
        to_fraction(args.price_per_mb),
        c_min=to_fraction(args.c_min),
        c_max=to_fraction(args.c_max),
        gen_rate=to_fraction(args.gen_rate),
        range_m=float(args.range_m),
    )
    rows = []
    for size in args.sizes:
        trips = generate_trajectories(size, bbox, args.horizon, args.seed)
        sensors = generate_deployment(bbox, args.sensors, args.seed)
        s = Scenario(TimeGrid(args.horizon), tuple(trips), tuple(sensors), params)

        start = time.monotonic()
        contacts = extract_contacts(s, workers=args.workers)
        extract_s = time.monotonic() - start

        start = time.monotonic()
        heuristic = greedy(s, contacts)
        greedy_s = time.monotonic() - start

        exact = solve_exact(build_model(s, contacts, ProblemKind.cspv()), args.time_limit, warm_start=heuristic.schedule)

        rows.append({
            "vehicles": size,
            "contact_events": len(contacts),
            "extract_s": round(extract_s, 4),
            "exact_s": round(exact.solver_stats.wall_time_s, 4),
            "exact_proven_optimal": exact.solver_stats.proven_optimal,
            "exact_throughput": exact.throughput,
            "greedy_s": round(greedy_s, 4),
            "greedy_throughput": heuristic.throughput,
        })
        logger.info(f"Bench {size} vehicles: exact {rows[-1]['exact_s']}s, greedy {rows[-1]['greedy_s']}s")

    table = pd.DataFrame(rows)
    out = _out_dir(args, "bench")
    write_table_csv(out / "bench.csv", table)
    write_manifest(out, "bench", _arguments(args), None, ["bench.csv"])
    print(table.to_string(index=False))
    return 0


def cmd_export_lp(args) -> int:
    s = _scenario(args)
    contacts = extract_contacts(s, workers=args.workers)
    model = build_model(s, contacts, _problem_kind(args, s, args.kind))
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_lp_text(model), encoding="utf-8")
    write_manifest(path.parent, "export-lp", _arguments(args), s, [path.name])
    print(f"wrote {path}: {model.summary()}")
    return 0


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadside_relay", description="Schedule sensor data relayed by passing vehicles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--scenario", required=True, help="scenario JSON file")
    scenario.add_argument("--out", help=f"output directory (default {config.OUTPUT_DIR}/<command>)")
    scenario.add_argument("--workers", type=int, default=1)
    scenario.add_argument("--time-limit", type=float, default=config.SOLVE_TIME_LIMIT_S)
    scenario.add_argument("--price-per-mb")
    scenario.add_argument("--c-min", dest="c_min")
    scenario.add_argument("--c-max", dest="c_max")
    scenario.add_argument("--gen-rate", dest="gen_rate")
    scenario.add_argument("--range", dest="range_m", type=float)
    scenario.add_argument("--fairness-weight", dest="fairness_weight")
    scenario.add_argument("--delay-bound", dest="delay_bound_s")
    scenario.add_argument("--delay-tolerance", dest="delay_tolerance")
    scenario.add_argument("--per-vehicle-cap", type=int)
    scenario.add_argument("--vehicle-exclusive", action="store_true")
    scenario.add_argument("--reachable-only", action="store_true")

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("ingest", help="build a scenario from T-Drive logs")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--bbox", required=True, help="lat_min,lon_min,lat_max,lon_max")
    p.add_argument("--day", nargs="+", required=True, help="YYYY-MM-DD, several with --mean-of-days")
    p.add_argument("--epoch", help="ISO date-time of slot 0 (default: midnight of the day)")
    p.add_argument("--mean-of-days", action="store_true")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--horizon", type=int, default=config.DAY_SECONDS)
    p.add_argument("--sensors", type=int, default=config.N_SENSORS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="scenario JSON to write")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("deploy", help="seeded random sensor deployments")
    p.add_argument("--scenario", required=True)
    p.add_argument("--bbox", required=True)
    p.add_argument("--sensors", type=int, default=config.N_SENSORS)
    p.add_argument("--deployments", type=int, default=config.N_DEPLOYMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_deploy)

    p = sub.add_parser("solve", parents=[scenario], help="optimal schedule")
    p.add_argument("kind", choices=[k.value for k in Kind])
    p.add_argument("--solver", choices=sorted(SOLVERS), default="exact")
    p.set_defaults(handler=cmd_solve)

    for name in ("greedy", "greedyn"):
        p = sub.add_parser(name, parents=[scenario], help="greedy baseline")
        p.add_argument("--return-excluded-units", action="store_true", help="Greedy-N: excluded units go back to the buffers")
        p.set_defaults(handler=cmd_greedy)

    p = sub.add_parser("oracle", parents=[scenario], help="brute-force optimum of a tiny scenario")
    p.add_argument("--kind", choices=[k.value for k in Kind], default="cspv")
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("sweep-fairness", parents=[scenario], help="select the fairness weight")
    p.add_argument("--grid", type=_fraction_list, default=list(config.FAIRNESS_GRID))
    p.set_defaults(handler=cmd_sweep_fairness)

    p = sub.add_parser("sweep-delay", parents=[scenario], help="throughput and delay across delay tolerances")
    p.add_argument("--grid", type=_fraction_list, default=list(config.DELAY_TOLERANCE_GRID))
    p.set_defaults(handler=cmd_sweep_delay)

    plan = argparse.ArgumentParser(add_help=False)
    plan.add_argument("--algorithm", choices=["exact", "greedy"], default="exact")
    plan.add_argument("--kind", choices=[k.value for k in Kind], default="cspv")

    p = sub.add_parser("penetration", parents=[scenario, plan], help="no-shows with and without recomputation")
    p.add_argument("--rates", type=_fraction_list, default=list(config.PENETRATION_RATES))
    p.add_argument("--seeds", type=_int_list, default=list(config.PENETRATION_SEEDS))
    p.add_argument("--recompute-solver", choices=["exact", "greedy"], default="exact")
    p.set_defaults(handler=cmd_penetration)

    p = sub.add_parser("compare-baseline", parents=[scenario, plan], help="relay vs direct LPWAN cost")
    p.add_argument("--direct-price-per-mb", type=to_fraction, default=config.DIRECT_PRICE_PER_MB)
    p.set_defaults(handler=cmd_compare_baseline)

    p = sub.add_parser("compare", parents=[scenario], help="optimal vs Greedy vs Greedy-N over deployments")
    p.add_argument("--bbox", required=True)
    p.add_argument("--sensors", type=int, default=config.N_SENSORS)
    p.add_argument("--deployments", type=int, default=config.N_DEPLOYMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direct-price-per-mb", type=to_fraction, default=config.DIRECT_PRICE_PER_MB)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("bench", help="execution time on synthetic trajectories")
    p.add_argument("--sizes", type=_int_list, default=list(config.BENCH_SIZES))
    p.add_argument("--bbox", default=",".join(str(x) for x in config.BENCH_BBOX))
    p.add_argument("--horizon", type=int, default=config.BENCH_HORIZON_S)
    p.add_argument("--sensors", type=int, default=config.N_SENSORS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=config.SOLVE_TIME_LIMIT_S)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--price-per-mb", default=str(config.PRICE_PER_MB))
    p.add_argument("--c-min", dest="c_min", default=str(config.BENCH_C_MIN))
    p.add_argument("--c-max", dest="c_max", default=str(config.BENCH_C_MAX))
    p.add_argument("--gen-rate", dest="gen_rate", default=str(config.GEN_RATE))
    p.add_argument("--range", dest="range_m", type=float, default=config.RANGE_M)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("export-lp", parents=[scenario], help="write the model in LP format")
    p.add_argument("--kind", choices=[k.value for k in Kind], default="cspv")
    p.add_argument("--output", required=True)
    p.set_defaults(handler=cmd_export_lp)

    return parser


def run_command(argv: Sequence[str]) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exit_:
        return int(exit_.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except (RelayError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))
