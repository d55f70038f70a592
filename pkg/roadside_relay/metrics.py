"""Throughput, fairness and delay metrics, and the parameter sweeps built on them."""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from . import config
from .formulation import LinearModel, ProblemKind, build_model
from .geo import ContactSet
from .models import Number, RelayError, Scenario, Schedule, SolveResult, to_fraction
from .solver import solve_exact

logger = logging.getLogger(__name__)

Solver = Callable[[LinearModel], SolveResult]


class CausalityError(RelayError):
    """A schedule sends units its sensor has not generated yet."""


@dataclass(frozen=True)
class MetricsReport:
    """Quantities reported for one realized schedule."""

    throughput_units: int
    fairness_gap_units: int
    per_unit_delays_s: Tuple[Fraction, ...]
    total_spend: Fraction
    participant_count: int

    @property
    def mean_delay_s(self) -> Optional[float]:
        if not self.per_unit_delays_s:
            return None
        return float(sum(self.per_unit_delays_s) / len(self.per_unit_delays_s))

    @property
    def max_delay_s(self) -> Optional[float]:
        if not self.per_unit_delays_s:
            return None
        return float(max(self.per_unit_delays_s))

    def to_row(self) -> Dict[str, object]:
        """One flat CSV row."""
        return {
            "throughput_units": self.throughput_units,
            "fairness_gap_units": self.fairness_gap_units,
            "mean_delay_s": self.mean_delay_s,
            "max_delay_s": self.max_delay_s,
            "total_spend": float(self.total_spend),
            "participant_count": self.participant_count,
        }


def throughput(sched: Schedule) -> int:
    return len(sched)


def fairness_gap(sched: Schedule, s: Scenario) -> int:
    """Largest minus smallest per-sensor count, over every sensor of the scenario."""
    counts = sched.sensor_counts()
    if s.n_sensors == 0:
        return 0
    return max(counts) - min(counts)


def delays(sched: Schedule, s: Scenario, buffer_includes_current_slot: bool = True) -> List[Fraction]:
    """
    Per-unit delays in seconds, units matched first-in first-out.

    The k-th unit a sensor transmits was generated at k / gen_rate and the
    delay is its transmission slot minus that. A slot's own generation counts
    as available, so a unit may leave in the slot that completes it and its
    delay is then negative, never below -1 s. A 1 unit/s sensor sending in
    every slot from slot 0 shows -1 s on each unit.
    """
    rate = s.params.gen_rate
    gen_slots = 1 if buffer_includes_current_slot else 0
    sent: Dict[int, int] = {}
    result: List[Fraction] = []
    for tx in sched.ordered():
        k = sent.get(tx.sensor, 0) + 1
        sent[tx.sensor] = k
        if k > math.floor((tx.slot + gen_slots) * rate):
            raise CausalityError(f"sensor {tx.sensor} sends unit {k} at slot {tx.slot} before generating it")
        result.append(tx.slot - Fraction(k) / rate)
    return result


def delay_cdf(values: Iterable[Number]) -> List[Tuple[Fraction, Fraction]]:
    """Empirical CDF: sorted distinct delays with the fraction at or below each."""
    counts = Counter(to_fraction(v) for v in values)
    total = sum(counts.values())
    cdf = []
    running = 0
    for delay in sorted(counts):
        running += counts[delay]
        cdf.append((delay, Fraction(running, total)))
    return cdf


def report(result: Union[SolveResult, Schedule], s: Scenario) -> MetricsReport:
    """MetricsReport of a solve result, or of a bare schedule."""
    if isinstance(result, SolveResult):
        sched = result.schedule
        spend, participants = result.total_spend, len(result.participants)
    else:
        sched = result
        spend = s.params.unit_cost * len(sched)
        participants = sum(1 for n in sched.vehicle_counts().values() if s.params.unit_cost * n > s.params.c_min)
    return MetricsReport(
        throughput_units=throughput(sched),
        fairness_gap_units=fairness_gap(sched, s),
        per_unit_delays_s=tuple(delays(sched, s)),
        total_spend=spend,
        participant_count=participants,
    )


def _parallel(fn, items: Sequence, workers: int) -> List:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def sweep_fairness(
    s: Scenario,
    contacts: ContactSet,
    grid: Sequence[Number] = config.FAIRNESS_GRID,
    solver: Solver = solve_exact,
    base: Optional[ProblemKind] = None,
    workers: int = 1,
) -> Tuple[Fraction, pd.DataFrame]:
    """
    Solve F-CSPV at each fairness weight and pick the weight whose optimum
    has the largest objective (ties go to the smallest weight).

    The table holds, per weight, throughput and gap with their normalized
    terms, X / (|S||V||T|) and gap / (|V||T|), and the objective.
    """
    weights = [to_fraction(w) for w in grid]
    if not weights:
        raise ValueError("fairness grid is empty")
    if any(not 0 <= w <= 1 for w in weights):
        raise ValueError(f"fairness weights must lie in [0, 1]: {[str(w) for w in weights]}")

    kind = base or ProblemKind.fcspv(weights[0])

    def solve_at(weight: Fraction) -> SolveResult:
        return solver(build_model(s, contacts, kind.with_weight(weight)))

    results = _parallel(solve_at, weights, workers)
    n_s, n_v, n_t = s.n_sensors, s.n_vehicles, s.horizon

    rows = []
    for weight, result in zip(weights, results):
        x = result.throughput
        gap = fairness_gap(result.schedule, s)
        throughput_term = Fraction(x, n_s * n_v * n_t)
        gap_term = Fraction(gap, n_v * n_t)
        rows.append({
            "fairness_weight": weight,
            "throughput": x,
            "fairness_gap": gap,
            "throughput_term": throughput_term,
            "gap_term": gap_term,
            "objective": weight * throughput_term - (1 - weight) * gap_term,
        })

    best = rows[0]
    for row in rows[1:]:
        if row["objective"] > best["objective"] or (row["objective"] == best["objective"] and row["fairness_weight"] < best["fairness_weight"]):
            best = row
    logger.info(f"Fairness sweep over {len(weights)} weights selected F={best['fairness_weight']}")
    return best["fairness_weight"], pd.DataFrame(rows)


def sweep_delay_tolerance(
    s: Scenario,
    contacts: ContactSet,
    grid: Sequence[Number] = config.DELAY_TOLERANCE_GRID,
    fairness_weight: Optional[Number] = None,
    delay_bound_s: Optional[Number] = None,
    solver: Solver = solve_exact,
    workers: int = 1,
) -> pd.DataFrame:
    """Solve DF-CSPV across delay tolerances; throughput and delay per point."""
    weight = s.params.fairness_weight if fairness_weight is None else fairness_weight
    bound = delay_bound_s or s.params.delay_bound_s or config.DELAY_BOUND_S
    tolerances = [to_fraction(a) for a in grid]

    def solve_at(tolerance: Fraction) -> SolveResult:
        kind = ProblemKind.dfcspv(weight, bound, tolerance, per_vehicle_cap=s.params.per_vehicle_cap)
        return solver(build_model(s, contacts, kind))

    results = _parallel(solve_at, tolerances, workers)
    rows = []
    for tolerance, result in zip(tolerances, results):
        metrics = report(result, s)
        rows.append({
            "delay_tolerance": tolerance,
            "delay_limit_s": to_fraction(bound) * (1 + tolerance),
            "throughput": metrics.throughput_units,
            "fairness_gap": metrics.fairness_gap_units,
            "mean_delay_s": metrics.mean_delay_s,
            "max_delay_s": metrics.max_delay_s,
        })
    logger.info(f"Delay tolerance sweep over {len(tolerances)} points")
    return pd.DataFrame(rows)
