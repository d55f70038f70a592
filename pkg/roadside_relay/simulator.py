"""
Experiment harness: vehicle no-shows under partial penetration, recomputation
with backup vehicles, and cost comparison against direct LPWAN delivery.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import config
from .formulation import ProblemKind, build_model
from .geo import ContactSet, extract_contacts
from .greedy import greedy, greedy_n, greedy_with_commitments
from .metrics import MetricsReport, report
from .models import Number, Scenario, Schedule, Sensor, SolveResult, to_fraction
from .solver import solve_exact

logger = logging.getLogger(__name__)

RECOMPUTE_SOLVERS = ("exact", "greedy")


@dataclass(frozen=True)
class PenetrationConfig:
    """Share of planned vehicles that show up, the RNG seed, and whether to recompute."""

    rate: Fraction
    rng_seed: int = 0
    recompute: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rate", to_fraction(self.rate))
        if not 0 <= self.rate <= 1:
            raise ValueError(f"penetration rate must lie in [0, 1], got {self.rate}")


@dataclass(frozen=True)
class ExperimentOutcome:
    planned: SolveResult
    realized: Schedule
    realized_metrics: MetricsReport
    no_show_vehicles: FrozenSet[int]


def draw_no_shows(plan: SolveResult, cfg: PenetrationConfig) -> FrozenSet[int]:
    """
    One PCG64 draw per planned participant, in increasing vehicle order; a
    vehicle shows up when its draw is below the rate.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    rate = float(cfg.rate)
    planned = sorted(plan.schedule.vehicle_counts())
    return frozenset(v for v in planned if not rng.random() < rate)


def apply_penetration(
    plan: SolveResult,
    cfg: PenetrationConfig,
    s: Scenario,
    contacts: Optional[ContactSet] = None,
    solver: str = "exact",
    time_limit_s: Optional[float] = None,
) -> ExperimentOutcome:
    """Drop no-show vehicles' transmissions and, if configured, recompute with backups."""
    no_shows = draw_no_shows(plan, cfg)
    realized = plan.schedule.without(no_shows)
    outcome = ExperimentOutcome(plan, realized, report(realized, s), no_shows)
    logger.debug(f"Penetration {cfg.rate} seed {cfg.rng_seed}: {len(no_shows)} no-shows, {len(realized)} units survive")
    if cfg.recompute:
        if contacts is None:
            contacts = extract_contacts(s)
        outcome = recompute_with_backups(outcome, s, contacts, solver, time_limit_s=time_limit_s)
    return outcome


def recompute_with_backups(
    outcome: ExperimentOutcome,
    s: Scenario,
    contacts: ContactSet,
    solver: str = "exact",
    kind: Optional[ProblemKind] = None,
    time_limit_s: Optional[float] = None,
) -> ExperimentOutcome:
    """
    Re-plan after the no-shows are known. Transmissions of vehicles that
    showed up stay committed; vehicles that were never planned act as
    backups for the money the no-shows left unspent. Committed vehicles are
    never dropped.
    """
    if not outcome.no_show_vehicles:
        return outcome
    if solver not in RECOMPUTE_SOLVERS:
        raise ValueError(f"unknown recompute solver {solver!r}, expected one of {RECOMPUTE_SOLVERS}")

    available = [v for v in range(s.n_vehicles) if v not in outcome.no_show_vehicles]
    committed = outcome.realized
    backup = greedy_with_commitments(s, contacts, committed, available)
    if solver == "exact":
        kind = kind or ProblemKind.from_params("cspv", s.params)
        model = build_model(s, contacts, kind, fixed=list(committed), vehicles=available)
        result = solve_exact(model, time_limit_s, warm_start=backup.schedule)
    else:
        result = backup

    realized = result.schedule
    logger.info(
        f"Recomputed with {solver}: {len(committed)} committed units, {len(realized)} after backups"
    )
    return ExperimentOutcome(outcome.planned, realized, report(realized, s), outcome.no_show_vehicles)


def baseline_units(spend: Number, direct_price_per_mb: Number = config.DIRECT_PRICE_PER_MB, unit_size_bytes: int = config.UNIT_SIZE_BYTES) -> int:
    """Units the same money buys over the LPWAN subscription, without relays."""
    spend = to_fraction(spend)
    price = to_fraction(direct_price_per_mb)
    if spend < 0:
        raise ValueError(f"spend must be non-negative, got {spend}")
    if price <= 0 or unit_size_bytes <= 0:
        raise ValueError("direct price and unit size must be positive")
    return math.floor(spend / (price * unit_size_bytes / config.BYTES_PER_MB))


def cost_comparison(plan: SolveResult, s: Scenario, direct_price_per_mb: Number = config.DIRECT_PRICE_PER_MB) -> float:
    """
    Relayed throughput over what direct delivery buys with the same spend.
    A ratio of 2.0 means relaying halves the cost of the same service.
    """
    base = baseline_units(plan.total_spend, direct_price_per_mb, s.params.unit_size_bytes)
    if base == 0:
        return 1.0 if plan.throughput == 0 else math.inf
    return plan.throughput / base


def run_penetration_grid(
    plan: SolveResult,
    s: Scenario,
    contacts: ContactSet,
    rates: Sequence[Number] = config.PENETRATION_RATES,
    seeds: Sequence[int] = config.PENETRATION_SEEDS,
    solver: str = "exact",
    workers: int = 1,
    time_limit_s: Optional[float] = None,
) -> pd.DataFrame:
    """Realized throughput and fairness per (rate, seed), with and without recomputation."""
    cells = [(to_fraction(rate), seed) for rate, seed in itertools.product(rates, seeds)]

    def run_cell(cell):
        rate, seed = cell
        plain = apply_penetration(plan, PenetrationConfig(rate, seed, False), s, contacts)
        rerun = recompute_with_backups(plain, s, contacts, solver, time_limit_s=time_limit_s)
        return [
            _cell_row(rate, seed, False, plain),
            _cell_row(rate, seed, True, rerun),
        ]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(run_cell, cells))
    else:
        nested = [run_cell(cell) for cell in cells]

    logger.info(f"Penetration grid: {len(rates)} rates x {len(seeds)} seeds")
    return pd.DataFrame([row for rows in nested for row in rows])


def _cell_row(rate: Fraction, seed: int, recompute: bool, outcome: ExperimentOutcome) -> dict:
    return {
        "rate": float(rate),
        "seed": seed,
        "recompute": recompute,
        "no_shows": len(outcome.no_show_vehicles),
        "throughput": outcome.realized_metrics.throughput_units,
        "fairness_gap": outcome.realized_metrics.fairness_gap_units,
        "spend": float(outcome.realized_metrics.total_spend),
    }


def compare_algorithms(
    s: Scenario,
    deployments: Sequence[Sequence[Sensor]],
    direct_price_per_mb: Number = config.DIRECT_PRICE_PER_MB,
    time_limit_s: Optional[float] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Optimal, Greedy and Greedy-N schedules side by side for each sensor
    deployment, with the direct-delivery baseline for the same spend.
    """
    rows: List[dict] = []
    for k, sensors in enumerate(deployments):
        scenario = s.with_sensors(sensors)
        contacts = extract_contacts(scenario, workers=workers)
        model = build_model(scenario, contacts, ProblemKind.from_params("cspv", scenario.params))
        heuristic = greedy(scenario, contacts)
        results = [
            ("optimal", solve_exact(model, time_limit_s, warm_start=heuristic.schedule)),
            ("greedy", heuristic),
            ("greedy-n", greedy_n(scenario, contacts)),
        ]
        for name, result in results:
            metrics = report(result, scenario)
            rows.append({
                "deployment": k,
                "algorithm": name,
                "throughput": metrics.throughput_units,
                "participants": metrics.participant_count,
                "fairness_gap": metrics.fairness_gap_units,
                "mean_delay_s": metrics.mean_delay_s,
                "spend": float(metrics.total_spend),
                "baseline_units": baseline_units(metrics.total_spend, direct_price_per_mb, scenario.params.unit_size_bytes),
                "cost_ratio": cost_comparison(result, scenario, direct_price_per_mb),
                "proven_optimal": result.solver_stats.proven_optimal,
            })
        logger.info(f"Deployment {k}: {', '.join(f'{n}={r.throughput}' for n, r in results)}")
    return pd.DataFrame(rows)
