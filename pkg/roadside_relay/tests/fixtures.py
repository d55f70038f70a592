"""Shared scenarios for the test suite."""

import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from roadside_relay.geo import ContactSet, extract_contacts
from roadside_relay.models import ParamSet, Scenario, Sensor, TimeGrid, VehicleTrajectory

# Sensors on the equator, about 11.1 km apart
SENSOR_SPACING_DEG = 0.1


def sensor_row(n: int) -> Tuple[Sensor, ...]:
    return tuple(Sensor(f"s{j}", 0.0, SENSOR_SPACING_DEG * j) for j in range(n))


def parked(vehicle_id: str, stays: Sequence[Tuple[int, int, int]]) -> VehicleTrajectory:
    """A vehicle parked at sensor j from slot a through slot b, for each (a, b, j)."""
    samples: List[Tuple[int, float, float]] = []
    for a, b, j in stays:
        samples.append((a, 0.0, SENSOR_SPACING_DEG * j))
        if b > a:
            samples.append((b, 0.0, SENSOR_SPACING_DEG * j))
    return VehicleTrajectory(vehicle_id, tuple(samples))


def unit_params(**changes) -> ParamSet:
    """Whole-dollar units so budgets read as unit counts."""
    values = dict(unit_cost=Fraction(1), gen_rate=Fraction(1), c_min=Fraction(2), c_max=Fraction(5))
    values.update(changes)
    return ParamSet(**values)


def t1_scenario(**changes) -> Scenario:
    """One vehicle in range of one sensor during slots 3..8 of 10; budget of 5 units."""
    return Scenario(TimeGrid(10), (parked("v0", [(3, 8, 0)]),), sensor_row(1), unit_params(**changes))


def saturated_scenario(horizon: int = 100) -> Scenario:
    """
    A vehicle in range of the only sensor for the whole horizon, relaying at
    half the direct price ($0.5/MB against $1/MB).
    """
    params = ParamSet.from_price_per_mb(Fraction(1, 2), c_min=Fraction(0), c_max=Fraction(1))
    return Scenario(TimeGrid(horizon), (parked("v0", [(0, horizon - 1, 0)]),), sensor_row(1), params)


def greedy_trap_scenario() -> Scenario:
    """
    The first vehicle in input order is only briefly in range, so greedy
    feeds it two units and then has to drop it for being under c_min.
    """
    vehicles = (parked("v0", [(0, 1, 0)]), parked("v1", [(0, 5, 0)]))
    return Scenario(TimeGrid(6), vehicles, sensor_row(1), unit_params(c_max=Fraction(100)))


def late_contact_scenario() -> Scenario:
    """Contacts only late in the day, long after the sensor started buffering."""
    return Scenario(
        TimeGrid(30), (parked("v0", [(20, 29, 0)]),), sensor_row(1),
        unit_params(c_min=Fraction(0), c_max=Fraction(100)),
    )


GEN_RATES = (Fraction(1, 2), Fraction(1), Fraction(2))


def random_tiny_scenario(seed: int, max_events: int = 14, horizon: int = 12) -> Tuple[Scenario, ContactSet]:
    """
    A seeded scenario with up to 3 vehicles and 3 sensors and at most
    `max_events` contact events.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(200):
        n_vehicles = int(rng.integers(1, 4))
        n_sensors = int(rng.integers(1, 4))
        vehicles = []
        for v in range(n_vehicles):
            stays = []
            t = int(rng.integers(0, 6))
            for _ in range(int(rng.integers(1, 3))):
                if t > horizon - 1:
                    break
                end = min(horizon - 1, t + int(rng.integers(0, 4)))
                stays.append((t, end, int(rng.integers(0, n_sensors))))
                t = end + 2 + int(rng.integers(0, 3))
            vehicles.append(parked(f"v{v}", stays))
        params = unit_params(
            gen_rate=GEN_RATES[int(rng.integers(0, len(GEN_RATES)))],
            c_min=Fraction(int(rng.integers(0, 3))),
            c_max=Fraction(int(rng.integers(3, 9))),
        )
        s = Scenario(TimeGrid(horizon), tuple(vehicles), sensor_row(n_sensors), params)
        contacts = extract_contacts(s)
        if 0 < len(contacts) <= max_events:
            return s, contacts
    raise AssertionError(f"no tiny scenario for seed {seed}")
