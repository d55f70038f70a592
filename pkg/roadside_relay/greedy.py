"""Greedy scheduling baselines: a single greedy pass and Greedy-N budget recycling."""

import bisect
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .geo import ContactSet
from .models import (
    ParamSet, Scenario, Schedule, SolveResult, SolverStats, Transmission, require_valid,
)

logger = logging.getLogger(__name__)


@dataclass
class _Ledger:
    """Units already sent per sensor (sorted slots) and occupied (sensor, slot) pairs."""

    sent_slots: Dict[int, List[int]] = field(default_factory=dict)
    occupied: Set[Tuple[int, int]] = field(default_factory=set)

    def record(self, sensor: int, slot: int) -> None:
        bisect.insort(self.sent_slots.setdefault(sensor, []), slot)
        self.occupied.add((sensor, slot))

    def headroom_ok(self, sensor: int, slot: int, cap) -> bool:
        """
        Whether one more unit at `slot` keeps every later cumulative count
        within the units the sensor has generated by then.
        """
        slots = self.sent_slots.get(sensor, [])
        pos = bisect.bisect_right(slots, slot)
        if pos + 1 > cap(slot):
            return False
        for k in range(pos, len(slots)):
            if k + 2 > cap(slots[k]):
                return False
        return True


def _buffer_cap(params: ParamSet, includes_current_slot: bool):
    gen_slots = 1 if includes_current_slot else 0
    return lambda slot: math.floor((slot + gen_slots) * params.gen_rate)


def _greedy_pass(
    contacts: ContactSet,
    params: ParamSet,
    vehicles: Set[int],
    budget_units: int,
    ledger: _Ledger,
    per_vehicle_cap: Optional[int],
    includes_current_slot: bool,
) -> List[Transmission]:
    """
    One run of the greedy algorithm over the given vehicles.

    Slots are visited in increasing order and sensors in input order. A
    sensor with a full unit buffered sends it to the first in-range vehicle
    (input order) that has not yet received anything in this slot. The
    budget is checked before each unit, and the run stops once it is spent.
    """
    cap = _buffer_cap(params, includes_current_slot)
    sent: List[Transmission] = []
    counts: Dict[int, int] = {}
    busy_slot: Dict[int, int] = {}

    for slot, sensor in sorted(contacts.by_slot_sensor):
        if len(sent) >= budget_units:
            break
        if (sensor, slot) in ledger.occupied or not ledger.headroom_ok(sensor, slot, cap):
            continue
        for i in contacts.by_slot_sensor[(slot, sensor)]:
            v = contacts.events[i].vehicle
            if v not in vehicles or busy_slot.get(v) == slot:
                continue
            if per_vehicle_cap is not None and counts.get(v, 0) + 1 > per_vehicle_cap - 1:
                continue
            sent.append(Transmission(v, sensor, slot))
            counts[v] = counts.get(v, 0) + 1
            busy_slot[v] = slot
            ledger.record(sensor, slot)
            break
    return sent


def _split_by_participation(txs: List[Transmission], params: ParamSet) -> Tuple[List[Transmission], List[Transmission]]:
    """Keep transmissions of vehicles paid strictly more than c_min."""
    counts: Dict[int, int] = {}
    for tx in txs:
        counts[tx.vehicle] = counts.get(tx.vehicle, 0) + 1
    kept = [tx for tx in txs if counts[tx.vehicle] >= params.min_units]
    dropped = [tx for tx in txs if counts[tx.vehicle] < params.min_units]
    return kept, dropped


def greedy(
    s: Scenario,
    contacts: ContactSet,
    per_vehicle_cap: Optional[int] = None,
    includes_current_slot: bool = True,
) -> SolveResult:
    """
    Greedy schedule; vehicles whose compensation does not exceed c_min are
    excluded afterwards and their transmissions removed.
    """
    require_valid(s)
    start = time.monotonic()
    p = s.params
    cap_n = per_vehicle_cap if per_vehicle_cap is not None else p.per_vehicle_cap

    raw = _greedy_pass(contacts, p, set(range(s.n_vehicles)), p.budget_units, _Ledger(), cap_n, includes_current_slot)
    kept, dropped = _split_by_participation(raw, p)
    if dropped:
        logger.info(f"Greedy excluded {len({tx.vehicle for tx in dropped})} vehicles below c_min")

    schedule = Schedule.of(kept, s.n_vehicles, s.n_sensors)
    stats = SolverStats(wall_time_s=time.monotonic() - start, proven_optimal=False)
    result = SolveResult.from_schedule(schedule, p, float(len(kept)), stats, "greedy")
    logger.info(f"Greedy: {result.throughput} units, {len(result.participants)} participants")
    return result


def greedy_n(
    s: Scenario,
    contacts: ContactSet,
    per_vehicle_cap: Optional[int] = None,
    includes_current_slot: bool = True,
    excluded_units_consumed: bool = True,
) -> SolveResult:
    """
    Greedy-N: rerun the greedy algorithm with the compensation reclaimed
    from excluded vehicles, over vehicles not tried before, until the
    reclaimed budget falls below c_min or a rerun adds nothing.

    With excluded_units_consumed the units sent to excluded vehicles stay
    spent from the sensors' buffers and their slots stay occupied;
    otherwise they return to the buffers.
    """
    require_valid(s)
    start = time.monotonic()
    p = s.params
    cap_n = per_vehicle_cap if per_vehicle_cap is not None else p.per_vehicle_cap

    ledger = _Ledger()
    untried = set(range(s.n_vehicles))
    budget_units = p.budget_units
    retained: List[Transmission] = []
    rounds = 0

    while True:
        rounds += 1
        raw = _greedy_pass(contacts, p, untried, budget_units, ledger, cap_n, includes_current_slot)
        kept, dropped = _split_by_participation(raw, p)
        retained.extend(kept)
        untried -= {tx.vehicle for tx in raw}

        if not excluded_units_consumed and dropped:
            ledger = _Ledger()
            for tx in retained:
                ledger.record(tx.sensor, tx.slot)

        reclaimed = p.unit_cost * len(dropped)
        logger.debug(f"Greedy-N round {rounds}: {len(kept)} kept, {len(dropped)} dropped, reclaimed ${float(reclaimed):.4f}")
        if not kept and rounds > 1 or reclaimed < p.c_min or not dropped:
            break
        budget_units = math.floor(reclaimed / p.unit_cost)

    schedule = Schedule.of(retained, s.n_vehicles, s.n_sensors)
    stats = SolverStats(nodes_explored=rounds, wall_time_s=time.monotonic() - start, proven_optimal=False)
    result = SolveResult.from_schedule(schedule, p, float(len(retained)), stats, "greedy-n")
    logger.info(f"Greedy-N: {result.throughput} units, {len(result.participants)} participants after {rounds} rounds")
    return result


def greedy_with_commitments(
    s: Scenario,
    contacts: ContactSet,
    committed: Schedule,
    vehicles: Iterable[int],
    includes_current_slot: bool = True,
) -> SolveResult:
    """
    Extend committed transmissions greedily with the given backup vehicles,
    within what is left of the budget. Backups that end up at or below
    c_min are dropped; committed transmissions are never touched.
    """
    p = s.params
    start = time.monotonic()
    ledger = _Ledger()
    for tx in committed:
        ledger.record(tx.sensor, tx.slot)

    backups = set(vehicles) - set(committed.vehicle_counts())
    budget_units = max(0, p.budget_units - len(committed))
    raw = _greedy_pass(contacts, p, backups, budget_units, ledger, p.per_vehicle_cap, includes_current_slot)
    kept, _ = _split_by_participation(raw, p)

    schedule = Schedule.of(list(committed) + kept, s.n_vehicles, s.n_sensors)
    stats = SolverStats(wall_time_s=time.monotonic() - start, proven_optimal=False)
    return SolveResult.from_schedule(schedule, p, float(len(schedule)), stats, "greedy-recompute")
