"""Data models for scenarios, schedules and solver results."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Tuple, Union

from . import config

Number = Union[int, float, str, Fraction]


class RelayError(Exception):
    """Base class for all errors raised by roadside_relay."""


class ScenarioError(RelayError, ValueError):
    """A scenario does not satisfy the invariants an operation requires."""


class UnknownVehicleError(RelayError, KeyError):
    """A vehicle index outside the scenario was requested."""


def to_fraction(value: Number) -> Fraction:
    """
    Convert a number or a rational string ("1/1024", "0.05") to a Fraction.
    Floats go through their shortest decimal repr so 0.05 becomes 1/20.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"not a finite number: {value}")
        return Fraction(repr(value))
    return Fraction(str(value).strip())


def fraction_str(value: Optional[Fraction]) -> Optional[str]:
    """Canonical text form of a rational ("2", "1/1024")."""
    return None if value is None else str(value)


@dataclass(frozen=True)
class TimeGrid:
    """The discretized time period: 1-second slots 0 .. horizon_slots-1."""

    horizon_slots: int

    def __contains__(self, slot: int) -> bool:
        return 0 <= slot < self.horizon_slots


@dataclass(frozen=True)
class VehicleTrajectory:
    """A vehicle and its GPS samples as (seconds since epoch, lat, lon)."""

    vehicle_id: str
    samples: Tuple[Tuple[float, float, float], ...]

    @property
    def timestamps(self) -> List[float]:
        return [s[0] for s in self.samples]

    @property
    def start(self) -> float:
        return self.samples[0][0]

    @property
    def end(self) -> float:
        return self.samples[-1][0]

    def to_dict(self) -> dict:
        return {
            "id": self.vehicle_id,
            "samples": [[t, lat, lon] for t, lat, lon in self.samples],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleTrajectory":
        samples = tuple(
            (_plain_number(t), float(lat), float(lon)) for t, lat, lon in data["samples"]
        )
        return cls(vehicle_id=str(data["id"]), samples=samples)


@dataclass(frozen=True)
class Sensor:
    """A roadside sensor at a fixed GPS location."""

    sensor_id: str
    lat: float
    lon: float

    @property
    def position(self) -> Tuple[float, float]:
        return (self.lat, self.lon)

    def to_dict(self) -> dict:
        return {"id": self.sensor_id, "lat": self.lat, "lon": self.lon}

    @classmethod
    def from_dict(cls, data: dict) -> "Sensor":
        return cls(sensor_id=str(data["id"]), lat=float(data["lat"]), lon=float(data["lon"]))


@dataclass(frozen=True)
class ParamSet:
    """
    Cost, radio and budget parameters of one scheduling instance.

    Money is held in exact dollars (Fraction). A data unit is what a sensor
    transmits in one slot, unit_size_bytes bytes.
    """

    unit_cost: Fraction = config.PRICE_PER_MB * config.UNIT_SIZE_BYTES / config.BYTES_PER_MB
    range_m: float = config.RANGE_M
    gen_rate: Fraction = config.GEN_RATE
    c_min: Fraction = config.C_MIN
    c_max: Fraction = config.C_MAX
    fairness_weight: Fraction = config.FAIRNESS_WEIGHT
    delay_bound_s: Optional[Fraction] = None
    delay_tolerance: Optional[Fraction] = None
    per_vehicle_cap: Optional[int] = None
    unit_size_bytes: int = config.UNIT_SIZE_BYTES

    @classmethod
    def from_price_per_mb(
        cls, price_per_mb: Number = config.PRICE_PER_MB,
        unit_size_bytes: int = config.UNIT_SIZE_BYTES, **kwargs
    ) -> "ParamSet":
        """Build a parameter set whose unit cost derives from a per-MB price."""
        unit_cost = to_fraction(price_per_mb) * unit_size_bytes / config.BYTES_PER_MB
        return cls(unit_cost=unit_cost, unit_size_bytes=unit_size_bytes, **kwargs)

    @property
    def budget_units(self) -> int:
        """Number of data units the budget c_max can pay for."""
        return math.floor(self.c_max / self.unit_cost)

    @property
    def min_units(self) -> int:
        """Fewest units a vehicle must relay to earn strictly more than c_min."""
        return math.floor(self.c_min / self.unit_cost) + 1

    @property
    def delay_limit_s(self) -> Optional[Fraction]:
        """The delay bound relaxed by the tolerance, delta * (1 + alpha_delay)."""
        if self.delay_bound_s is None:
            return None
        return self.delay_bound_s * (1 + (self.delay_tolerance or 0))

    def replace(self, **changes) -> "ParamSet":
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data.update(changes)
        return ParamSet(**data)

    def to_dict(self) -> dict:
        return {
            "unit_cost": fraction_str(self.unit_cost),
            "range_m": self.range_m,
            "gen_rate": fraction_str(self.gen_rate),
            "c_min": fraction_str(self.c_min),
            "c_max": fraction_str(self.c_max),
            "fairness_weight": fraction_str(self.fairness_weight),
            "delay_bound_s": fraction_str(self.delay_bound_s),
            "delay_tolerance": fraction_str(self.delay_tolerance),
            "per_vehicle_cap": self.per_vehicle_cap,
            "unit_size_bytes": self.unit_size_bytes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSet":
        def opt(key):
            value = data.get(key)
            return None if value is None else to_fraction(value)

        defaults = cls()
        return cls(
            unit_cost=to_fraction(data.get("unit_cost", defaults.unit_cost)),
            range_m=float(data.get("range_m", defaults.range_m)),
            gen_rate=to_fraction(data.get("gen_rate", defaults.gen_rate)),
            c_min=to_fraction(data.get("c_min", defaults.c_min)),
            c_max=to_fraction(data.get("c_max", defaults.c_max)),
            fairness_weight=to_fraction(data.get("fairness_weight", defaults.fairness_weight)),
            delay_bound_s=opt("delay_bound_s"),
            delay_tolerance=opt("delay_tolerance"),
            per_vehicle_cap=data.get("per_vehicle_cap"),
            unit_size_bytes=int(data.get("unit_size_bytes", defaults.unit_size_bytes)),
        )


@dataclass(frozen=True)
class Scenario:
    """A full problem instance: time grid, vehicles, sensors and parameters."""

    grid: TimeGrid
    vehicles: Tuple[VehicleTrajectory, ...]
    sensors: Tuple[Sensor, ...]
    params: ParamSet = field(default_factory=ParamSet)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def horizon(self) -> int:
        return self.grid.horizon_slots

    def with_params(self, **changes) -> "Scenario":
        return Scenario(self.grid, self.vehicles, self.sensors, self.params.replace(**changes))

    def with_sensors(self, sensors: Iterable[Sensor]) -> "Scenario":
        return Scenario(self.grid, self.vehicles, tuple(sensors), self.params)

    def empty_schedule(self) -> "Schedule":
        return Schedule(frozenset(), self.n_vehicles, self.n_sensors)

    def to_dict(self) -> dict:
        return {
            "grid": {"horizon_slots": self.grid.horizon_slots},
            "vehicles": [v.to_dict() for v in self.vehicles],
            "sensors": [s.to_dict() for s in self.sensors],
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            grid=TimeGrid(int(data["grid"]["horizon_slots"])),
            vehicles=tuple(VehicleTrajectory.from_dict(v) for v in data["vehicles"]),
            sensors=tuple(Sensor.from_dict(s) for s in data["sensors"]),
            params=ParamSet.from_dict(data.get("params", {})),
        )


class Transmission(NamedTuple):
    """One relayed data unit: sensor -> vehicle during a slot."""

    vehicle: int
    sensor: int
    slot: int

    @property
    def canonical_key(self) -> Tuple[int, int, int]:
        return (self.slot, self.sensor, self.vehicle)


@dataclass(frozen=True)
class Schedule:
    """The set of chosen transmissions."""

    transmissions: FrozenSet[Transmission]
    n_vehicles: int
    n_sensors: int

    def __post_init__(self):
        seen = set()
        for tx in self.transmissions:
            if not (0 <= tx.vehicle < self.n_vehicles and 0 <= tx.sensor < self.n_sensors):
                raise ScenarioError(f"transmission {tx} references an unknown vehicle or sensor")
            if tx.slot < 0:
                raise ScenarioError(f"transmission {tx} has a negative slot")
            key = (tx.sensor, tx.slot)
            if key in seen:
                raise ScenarioError(f"sensor {tx.sensor} transmits twice in slot {tx.slot}")
            seen.add(key)

    @classmethod
    def of(cls, transmissions: Iterable[Tuple[int, int, int]], n_vehicles: int, n_sensors: int) -> "Schedule":
        return cls(frozenset(Transmission(*tx) for tx in transmissions), n_vehicles, n_sensors)

    def __len__(self) -> int:
        return len(self.transmissions)

    def __iter__(self):
        return iter(self.ordered())

    def ordered(self) -> List[Transmission]:
        """Transmissions in canonical (slot, sensor, vehicle) order."""
        return sorted(self.transmissions, key=lambda tx: tx.canonical_key)

    def vehicle_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for tx in self.transmissions:
            counts[tx.vehicle] = counts.get(tx.vehicle, 0) + 1
        return counts

    def sensor_counts(self) -> List[int]:
        counts = [0] * self.n_sensors
        for tx in self.transmissions:
            counts[tx.sensor] += 1
        return counts

    def restrict(self, vehicles: Iterable[int]) -> "Schedule":
        """Keep only the transmissions of the given vehicles."""
        keep = set(vehicles)
        return Schedule(
            frozenset(tx for tx in self.transmissions if tx.vehicle in keep),
            self.n_vehicles, self.n_sensors,
        )

    def without(self, vehicles: Iterable[int]) -> "Schedule":
        drop = set(vehicles)
        return Schedule(
            frozenset(tx for tx in self.transmissions if tx.vehicle not in drop),
            self.n_vehicles, self.n_sensors,
        )

    def union(self, other: "Schedule") -> "Schedule":
        return Schedule(self.transmissions | other.transmissions, self.n_vehicles, self.n_sensors)


@dataclass(frozen=True)
class SolverStats:
    """Search statistics reported alongside a solution."""

    nodes_explored: int = 0
    wall_time_s: float = 0.0
    proven_optimal: bool = True
    dual_bound: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "nodes_explored": self.nodes_explored,
            "wall_time_s": self.wall_time_s,
            "proven_optimal": self.proven_optimal,
            "dual_bound": self.dual_bound,
        }


@dataclass(frozen=True)
class SolveResult:
    """A schedule with its participants, compensation and objective."""

    schedule: Schedule
    participants: FrozenSet[int]
    compensation: Mapping[int, Fraction]
    objective_value: float
    total_spend: Fraction
    solver_stats: SolverStats = field(default_factory=SolverStats)
    algorithm: str = ""

    @classmethod
    def from_schedule(
        cls, schedule: Schedule, params: ParamSet, objective_value: float,
        solver_stats: Optional[SolverStats] = None, algorithm: str = "",
    ) -> "SolveResult":
        """Derive compensation, participants and spend from a schedule."""
        compensation = {
            v: params.unit_cost * n for v, n in sorted(schedule.vehicle_counts().items())
        }
        return cls(
            schedule=schedule,
            participants=frozenset(participants_of(schedule, params)),
            compensation=compensation,
            objective_value=objective_value,
            total_spend=sum(compensation.values(), Fraction(0)),
            solver_stats=solver_stats or SolverStats(),
            algorithm=algorithm,
        )

    @property
    def throughput(self) -> int:
        return len(self.schedule)


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_scenario."""

    code: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else self.code


def validate_scenario(s: Scenario) -> List[Violation]:
    """
    Return every invariant violation of a scenario, in a deterministic order.
    An empty list means the scenario is valid.
    """
    violations: List[Violation] = []
    horizon = s.grid.horizon_slots

    if horizon < 1:
        violations.append(Violation("NonPositiveHorizon", f"horizon_slots={horizon}"))
    if not s.vehicles:
        violations.append(Violation("NoVehicles"))
    if not s.sensors:
        violations.append(Violation("NoSensors"))

    seen_vehicles = set()
    for v in s.vehicles:
        if v.vehicle_id in seen_vehicles:
            violations.append(Violation("DuplicateVehicleId", v.vehicle_id))
        seen_vehicles.add(v.vehicle_id)

        if not v.samples:
            violations.append(Violation("EmptyTrajectory", v.vehicle_id))
            continue
        timestamps = v.timestamps
        if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
            violations.append(Violation("NonMonotoneTimestamps", v.vehicle_id))
        if any(t < 0 or t >= horizon for t in timestamps):
            violations.append(Violation("TimestampOutOfHorizon", v.vehicle_id))
        if any(not -90 <= lat <= 90 for _, lat, _ in v.samples):
            violations.append(Violation("LatitudeOutOfRange", v.vehicle_id))
        if any(not -180 <= lon <= 180 for _, _, lon in v.samples):
            violations.append(Violation("LongitudeOutOfRange", v.vehicle_id))

    seen_sensors = set()
    for sensor in s.sensors:
        if sensor.sensor_id in seen_sensors:
            violations.append(Violation("DuplicateSensorId", sensor.sensor_id))
        seen_sensors.add(sensor.sensor_id)
        if not -90 <= sensor.lat <= 90:
            violations.append(Violation("LatitudeOutOfRange", sensor.sensor_id))
        if not -180 <= sensor.lon <= 180:
            violations.append(Violation("LongitudeOutOfRange", sensor.sensor_id))

    violations.extend(_validate_params(s.params))
    return violations


def _validate_params(p: ParamSet) -> List[Violation]:
    checks = [
        (0 <= p.fairness_weight <= 1, "FairnessWeightOutOfRange", f"fairness_weight={p.fairness_weight}"),
        (p.c_min >= 0, "NegativeMinCompensation", f"c_min={p.c_min}"),
        (p.c_max > 0, "NonPositiveBudget", f"c_max={p.c_max}"),
        (p.c_min < p.c_max, "MinCompensationNotBelowBudget", f"c_min={p.c_min} c_max={p.c_max}"),
        (p.range_m > 0, "NonPositiveRange", f"range_m={p.range_m}"),
        (p.gen_rate > 0, "NonPositiveGenRate", f"gen_rate={p.gen_rate}"),
        (p.unit_cost > 0, "NonPositiveUnitCost", f"unit_cost={p.unit_cost}"),
        (p.unit_size_bytes > 0, "NonPositiveUnitSize", f"unit_size_bytes={p.unit_size_bytes}"),
        (p.delay_bound_s is None or p.delay_bound_s > 0, "NonPositiveDelayBound", f"delay_bound_s={p.delay_bound_s}"),
        (p.delay_tolerance is None or p.delay_tolerance >= 0, "NegativeDelayTolerance", f"delay_tolerance={p.delay_tolerance}"),
        (p.per_vehicle_cap is None or p.per_vehicle_cap >= 1, "NonPositivePerVehicleCap", f"per_vehicle_cap={p.per_vehicle_cap}"),
    ]
    return [Violation(code, detail) for ok, code, detail in checks if not ok]


def require_valid(s: Scenario) -> None:
    """Raise ScenarioError listing all violations if the scenario is invalid."""
    violations = validate_scenario(s)
    if violations:
        raise ScenarioError("invalid scenario: " + "; ".join(str(v) for v in violations))


def compensation_of(sched: Schedule, v: int, p: ParamSet) -> Fraction:
    """Dollars owed to vehicle v: unit cost times the units it relayed."""
    if not 0 <= v < sched.n_vehicles:
        raise UnknownVehicleError(v)
    return p.unit_cost * sum(1 for tx in sched.transmissions if tx.vehicle == v)


def participants_of(sched: Schedule, p: ParamSet) -> FrozenSet[int]:
    """Vehicles whose compensation is strictly greater than c_min."""
    return frozenset(
        v for v, n in sched.vehicle_counts().items() if p.unit_cost * n > p.c_min
    )


def _plain_number(value) -> Union[int, float]:
    """Keep integral timestamps as int so JSON round-trips stay canonical."""
    number = float(value)
    return int(number) if number.is_integer() else number
