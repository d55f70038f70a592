"""
Independent schedule validator.

Every check is re-derived from the scenario itself (trajectories, sensor
positions, parameters), never from a model or contact set, so it can judge
the output of any scheduler.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional

from .geo import haversine_distance, position_at
from .models import RelayError, Scenario, Schedule, Violation


class InfeasibleScheduleError(RelayError):
    """A schedule breaks one of the scheduling constraints."""


@dataclass(frozen=True)
class FeasibilityOptions:
    """Constraints beyond the base problem that a schedule may be held to."""

    vehicle_exclusive: bool = False
    per_vehicle_cap: Optional[int] = None
    delay_limit_s: Optional[Fraction] = None
    buffer_includes_current_slot: bool = True
    range_tolerance_m: float = 1e-6


def check_schedule(s: Scenario, sched: Schedule, options: FeasibilityOptions = FeasibilityOptions()) -> List[Violation]:
    """Return every constraint the schedule violates; empty means feasible."""
    p = s.params
    violations: List[Violation] = []

    for tx in sched.ordered():
        label = f"vehicle {tx.vehicle} sensor {tx.sensor} slot {tx.slot}"
        if not 0 <= tx.slot < s.horizon:
            violations.append(Violation("SlotOutOfHorizon", label))
            continue
        position = position_at(s.vehicles[tx.vehicle], tx.slot)
        if position is None:
            violations.append(Violation("VehicleOffRoad", label))
            continue
        distance = haversine_distance(position, s.sensors[tx.sensor].position)
        if distance > p.range_m + options.range_tolerance_m:
            violations.append(Violation("OutOfRange", f"{label}: {distance:.1f} m"))

    gen_slots = 1 if options.buffer_includes_current_slot else 0
    sent: Dict[int, int] = {}
    for tx in sched.ordered():
        sent[tx.sensor] = sent.get(tx.sensor, 0) + 1
        k = sent[tx.sensor]
        if k > math.floor((tx.slot + gen_slots) * p.gen_rate):
            violations.append(Violation("CausalityViolation", f"sensor {tx.sensor} sends unit {k} at slot {tx.slot}"))
        if options.delay_limit_s is not None and tx.slot - Fraction(k) / p.gen_rate >= options.delay_limit_s:
            violations.append(Violation("DelayBoundExceeded", f"sensor {tx.sensor} unit {k} at slot {tx.slot}"))

    spend = p.unit_cost * len(sched)
    if spend > p.c_max:
        violations.append(Violation("BudgetExceeded", f"spend {spend} > c_max {p.c_max}"))

    counts = sched.vehicle_counts()
    for v, n in sorted(counts.items()):
        if p.unit_cost * n <= p.c_min:
            violations.append(Violation("UnderCompensated", f"vehicle {v} paid {p.unit_cost * n}"))
        if options.per_vehicle_cap is not None and n >= options.per_vehicle_cap:
            violations.append(Violation("PerVehicleCapExceeded", f"vehicle {v} relays {n} units"))

    if options.vehicle_exclusive:
        seen = set()
        for tx in sched.ordered():
            if (tx.vehicle, tx.slot) in seen:
                violations.append(Violation("VehicleNotExclusive", f"vehicle {tx.vehicle} slot {tx.slot}"))
            seen.add((tx.vehicle, tx.slot))

    return violations


def require_feasible(s: Scenario, sched: Schedule, options: FeasibilityOptions = FeasibilityOptions()) -> None:
    violations = check_schedule(s, sched, options)
    if violations:
        raise InfeasibleScheduleError("infeasible schedule: " + "; ".join(str(v) for v in violations))
