"""0-1 linear programs for the CSPV, F-CSPV and DF-CSPV scheduling problems."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .geo import ContactEvent, ContactSet
from .models import (
    Number, ParamSet, RelayError, Scenario, Schedule, SolveResult, SolverStats,
    Transmission, participants_of, require_valid, to_fraction,
)

logger = logging.getLogger(__name__)

TOLERANCE = 1e-6
OBJECTIVE_TOLERANCE = 1e-9


class ModelError(RelayError, ValueError):
    """A problem kind or model cannot be built or solved as requested."""


class ConsistencyError(RelayError):
    """A decoded solution disagrees with the model or with its own objective."""


class Kind(str, Enum):
    CSPV = "cspv"
    F_CSPV = "fcspv"
    DF_CSPV = "dfcspv"


@dataclass(frozen=True)
class ProblemKind:
    """
    Which formulation to build and its parameters.

    The flags select variants of the base formulation: vehicle_exclusive lets
    a vehicle receive from one sensor per slot, reachable_sensors_only bounds
    z_min over sensors with a contact opportunity only, and
    buffer_includes_current_slot lets data generated during a slot be sent in
    that slot.
    """

    kind: Kind = Kind.CSPV
    fairness_weight: Optional[Fraction] = None
    delay_bound_s: Optional[Fraction] = None
    delay_tolerance: Fraction = Fraction(0)
    per_vehicle_cap: Optional[int] = None
    vehicle_exclusive: bool = False
    reachable_sensors_only: bool = False
    buffer_includes_current_slot: bool = True

    def __post_init__(self):
        if self.kind in (Kind.F_CSPV, Kind.DF_CSPV):
            if self.fairness_weight is None or not 0 <= self.fairness_weight <= 1:
                raise ModelError(f"{self.kind.value} needs a fairness weight in [0, 1], got {self.fairness_weight}")
        if self.kind is Kind.DF_CSPV:
            if self.delay_bound_s is None or self.delay_bound_s <= 0:
                raise ModelError(f"dfcspv needs a positive delay bound, got {self.delay_bound_s}")
        if self.delay_tolerance < 0:
            raise ModelError(f"delay tolerance must be non-negative, got {self.delay_tolerance}")
        if self.per_vehicle_cap is not None and self.per_vehicle_cap < 1:
            raise ModelError(f"per-vehicle cap must be positive, got {self.per_vehicle_cap}")

    @classmethod
    def cspv(cls, **flags) -> "ProblemKind":
        return cls(Kind.CSPV, **flags)

    @classmethod
    def fcspv(cls, fairness_weight: Number, **flags) -> "ProblemKind":
        return cls(Kind.F_CSPV, fairness_weight=to_fraction(fairness_weight), **flags)

    @classmethod
    def dfcspv(cls, fairness_weight: Number, delay_bound_s: Number, delay_tolerance: Number = 0, **flags) -> "ProblemKind":
        return cls(
            Kind.DF_CSPV,
            fairness_weight=to_fraction(fairness_weight),
            delay_bound_s=to_fraction(delay_bound_s),
            delay_tolerance=to_fraction(delay_tolerance),
            **flags,
        )

    @classmethod
    def from_params(cls, kind: "Kind | str", params: ParamSet, **flags) -> "ProblemKind":
        """Take the kind's weights and bounds from a scenario's parameter set."""
        kind = Kind(kind)
        flags.setdefault("per_vehicle_cap", params.per_vehicle_cap)
        if kind is Kind.CSPV:
            return cls(kind, **flags)
        if kind is Kind.F_CSPV:
            return cls(kind, fairness_weight=params.fairness_weight, **flags)
        return cls(
            kind,
            fairness_weight=params.fairness_weight,
            delay_bound_s=params.delay_bound_s,
            delay_tolerance=params.delay_tolerance or Fraction(0),
            **flags,
        )

    @property
    def fair(self) -> bool:
        return self.kind is not Kind.CSPV

    @property
    def delay_limit_s(self) -> Optional[Fraction]:
        if self.kind is not Kind.DF_CSPV:
            return None
        return self.delay_bound_s * (1 + self.delay_tolerance)

    def with_weight(self, fairness_weight: Number) -> "ProblemKind":
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data["fairness_weight"] = to_fraction(fairness_weight)
        return ProblemKind(**data)

    def describe(self) -> str:
        parts = [self.kind.value]
        if self.fair:
            parts.append(f"F={self.fairness_weight}")
        if self.kind is Kind.DF_CSPV:
            parts.append(f"delta={self.delay_bound_s}")
            if self.delay_tolerance:
                parts.append(f"alpha_delay={self.delay_tolerance}")
        if self.per_vehicle_cap is not None:
            parts.append(f"N={self.per_vehicle_cap}")
        return " ".join(parts)


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" or "continuous"
    lower: Fraction
    upper: Fraction


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Tuple[Tuple[int, int], ...]  # (variable index, coefficient)
    sense: str  # "<=", ">=" or "="
    rhs: int

    def activity(self, values: Sequence[float]) -> float:
        return sum(c * values[i] for i, c in self.coeffs)

    def satisfied(self, values: Sequence[float], tol: float = TOLERANCE) -> bool:
        lhs = self.activity(values)
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


@dataclass(frozen=True)
class LinearModel:
    """
    A solver-agnostic 0-1 linear program (maximize). Transmission variables
    come first, one per contact event, in canonical event order; then one
    participation variable per vehicle; then z_max and z_min when the
    objective is fair.

    Alongside the rows the model keeps the structure the combinatorial
    solvers need: per-transmission metadata, the buffer caps and the
    objective as integers over a common scale.
    """

    variables: Tuple[Variable, ...]
    objective: Tuple[Tuple[int, Fraction], ...]
    constraints: Tuple[Constraint, ...]
    kind: ProblemKind
    params: ParamSet
    events: Tuple[ContactEvent, ...]
    participation_vars: Mapping[int, int]
    zmax_var: Optional[int]
    zmin_var: Optional[int]
    n_vehicles: int
    n_sensors: int
    horizon: int
    budget_units: int
    min_units: int
    fixed: FrozenSet[int] = frozenset()
    # minimum count through its slot that a transmission needs to meet the delay limit
    delay_min_count: Tuple[Optional[int], ...] = ()
    fairness_sensors: Tuple[int, ...] = ()
    throughput_weight: int = 1
    gap_weight: int = 0
    objective_scale: int = 1

    @property
    def n_tx(self) -> int:
        return len(self.events)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def decode_map(self) -> Dict[int, object]:
        """Variable index -> Transmission (x vars) or vehicle index (y vars)."""
        mapping: Dict[int, object] = {
            i: Transmission(e.vehicle, e.sensor, e.slot) for i, e in enumerate(self.events)
        }
        mapping.update({var: v for v, var in self.participation_vars.items()})
        return mapping

    def buffer_cap(self, slot: int) -> int:
        """Units a sensor may have sent in total through the given slot."""
        generated_slots = slot + 1 if self.kind.buffer_includes_current_slot else slot
        return math.floor(generated_slots * self.params.gen_rate)

    def scaled_objective(self, throughput: int, gap: int) -> int:
        return self.throughput_weight * throughput - self.gap_weight * gap

    def objective_of(self, throughput: int, gap: int) -> Fraction:
        """Objective value from first principles: throughput and fairness gap."""
        return Fraction(self.scaled_objective(throughput, gap), self.objective_scale)

    def gap_of(self, sensor_counts: Sequence[int]) -> int:
        if not self.kind.fair or not self.fairness_sensors:
            return 0
        counts = [sensor_counts[j] for j in self.fairness_sensors]
        return max(counts) - min(counts)

    def summary(self) -> str:
        return (
            f"{self.kind.describe()}: {self.n_tx} transmission vars, "
            f"{len(self.participation_vars)} participation vars, {len(self.constraints)} rows, "
            f"budget {self.budget_units} units, participation from {self.min_units} units"
        )


def build_model(
    s: Scenario,
    contacts: ContactSet,
    kind: ProblemKind,
    fixed: Iterable[Tuple[int, int, int]] = (),
    vehicles: Optional[Iterable[int]] = None,
) -> LinearModel:
    """
    Build the 0-1 program of the given kind over the sparse contact set.

    Transmission variables exist only for contact events, so the range
    constraint holds by construction. `fixed` forces transmissions to 1 and
    `vehicles` restricts the program to a subset of vehicles; both are used
    when recomputing a schedule around committed transmissions.
    """
    require_valid(s)
    p = s.params
    allowed = set(range(s.n_vehicles)) if vehicles is None else set(vehicles)
    events = tuple(e for e in contacts.events if e.vehicle in allowed)
    n_tx = len(events)

    fixed_keys = {tuple(tx) for tx in fixed}
    fixed_idx = frozenset(
        i for i, e in enumerate(events) if (e.vehicle, e.sensor, e.slot) in fixed_keys
    )
    if len(fixed_idx) != len(fixed_keys):
        raise ModelError("fixed transmissions must be contact events of allowed vehicles")

    variables: List[Variable] = [
        Variable(
            f"x_v{e.vehicle}_s{e.sensor}_t{e.slot}", "binary",
            Fraction(1) if i in fixed_idx else Fraction(0), Fraction(1),
        )
        for i, e in enumerate(events)
    ]
    participation_vars: Dict[int, int] = {}
    for v in sorted(allowed):
        participation_vars[v] = len(variables)
        variables.append(Variable(f"y_v{v}", "binary", Fraction(0), Fraction(1)))

    by_vehicle: Dict[int, List[int]] = {}
    by_sensor: Dict[int, List[int]] = {}
    by_slot_sensor: Dict[Tuple[int, int], List[int]] = {}
    by_slot_vehicle: Dict[Tuple[int, int], List[int]] = {}
    for i, e in enumerate(events):
        by_vehicle.setdefault(e.vehicle, []).append(i)
        by_sensor.setdefault(e.sensor, []).append(i)
        by_slot_sensor.setdefault((e.slot, e.sensor), []).append(i)
        by_slot_vehicle.setdefault((e.slot, e.vehicle), []).append(i)

    budget_units = p.budget_units
    min_units = p.min_units
    constraints: List[Constraint] = []

    # budget, in units
    constraints.append(Constraint("budget", tuple((i, 1) for i in range(n_tx)), "<=", budget_units))

    # y_v = 1 iff v relays, and then at least min_units units
    for v, y in participation_vars.items():
        own = by_vehicle.get(v, [])
        if own:
            constraints.append(Constraint(
                f"link_up_v{v}", tuple((i, 1) for i in own) + ((y, -len(own)),), "<=", 0,
            ))
        constraints.append(Constraint(
            f"link_low_v{v}", tuple((i, 1) for i in own) + ((y, -min_units),), ">=", 0,
        ))

    # per-vehicle cap: strictly fewer than N units
    if kind.per_vehicle_cap is not None:
        for v, own in sorted(by_vehicle.items()):
            constraints.append(Constraint(
                f"cap_v{v}", tuple((i, 1) for i in own), "<=", kind.per_vehicle_cap - 1,
            ))

    # unicast: one vehicle per sensor and slot
    for (t, j), group in sorted(by_slot_sensor.items()):
        if len(group) > 1:
            constraints.append(Constraint(f"unicast_s{j}_t{t}", tuple((i, 1) for i in group), "<=", 1))

    if kind.vehicle_exclusive:
        for (t, v), group in sorted(by_slot_vehicle.items()):
            if len(group) > 1:
                constraints.append(Constraint(f"exclusive_v{v}_t{t}", tuple((i, 1) for i in group), "<=", 1))

    # causality: cumulative sends through slot t within generated units
    gen_slots = 1 if kind.buffer_includes_current_slot else 0
    for j, own in sorted(by_sensor.items()):
        prefix: List[int] = []
        k = 0
        while k < len(own):
            slot = events[own[k]].slot
            while k < len(own) and events[own[k]].slot == slot:
                prefix.append(own[k])
                k += 1
            cap = math.floor((slot + gen_slots) * p.gen_rate)
            if len(prefix) > cap:
                constraints.append(Constraint(f"buffer_s{j}_t{slot}", tuple((i, 1) for i in prefix), "<=", cap))

    # delay: a unit sent at t must leave t - count/rate below the limit
    delay_min_count: List[Optional[int]] = [None] * n_tx
    limit = kind.delay_limit_s
    if limit is not None:
        for j, own in sorted(by_sensor.items()):
            for pos, i in enumerate(own):
                if i in fixed_idx:
                    continue
                e = events[i]
                need = math.floor(p.gen_rate * (e.slot - limit)) + 1
                delay_min_count[i] = need
                if need <= 1:
                    continue
                through = [q for q in own if events[q].slot <= e.slot]
                coeffs = {q: 1 for q in through}
                coeffs[i] = coeffs.get(i, 0) - need
                constraints.append(Constraint(
                    f"delay_v{e.vehicle}_s{j}_t{e.slot}",
                    tuple((q, c) for q, c in sorted(coeffs.items()) if c != 0), ">=", 0,
                ))

    zmax_var = zmin_var = None
    fairness_sensors: Tuple[int, ...] = ()
    objective: List[Tuple[int, Fraction]]
    n_s, n_v, n_t = s.n_sensors, s.n_vehicles, s.horizon
    if kind.fair:
        fairness_sensors = tuple(sorted(by_sensor)) if kind.reachable_sensors_only else tuple(range(n_s))
        zmax_var = len(variables)
        variables.append(Variable("z_max", "continuous", Fraction(0), Fraction(n_tx)))
        zmin_var = len(variables)
        variables.append(Variable("z_min", "continuous", Fraction(0), Fraction(n_tx)))
        # z_max bounds every sensor count from above, z_min from below
        for j in fairness_sensors:
            own = by_sensor.get(j, [])
            constraints.append(Constraint(f"zmax_s{j}", ((zmax_var, 1),) + tuple((i, -1) for i in own), ">=", 0))
        for j in fairness_sensors:
            own = by_sensor.get(j, [])
            constraints.append(Constraint(f"zmin_s{j}", ((zmin_var, 1),) + tuple((i, -1) for i in own), "<=", 0))

        weight = kind.fairness_weight
        x_coeff = weight / (n_s * n_v * n_t)
        z_coeff = (1 - weight) / (n_v * n_t)
        objective = [(i, x_coeff) for i in range(n_tx)]
        objective += [(zmax_var, -z_coeff), (zmin_var, z_coeff)]
        throughput_weight = weight.numerator
        gap_weight = (weight.denominator - weight.numerator) * n_s
        objective_scale = weight.denominator * n_s * n_v * n_t
    else:
        objective = [(i, Fraction(1)) for i in range(n_tx)]
        throughput_weight, gap_weight, objective_scale = 1, 0, 1

    model = LinearModel(
        variables=tuple(variables),
        objective=tuple(objective),
        constraints=tuple(constraints),
        kind=kind,
        params=p,
        events=events,
        participation_vars=participation_vars,
        zmax_var=zmax_var,
        zmin_var=zmin_var,
        n_vehicles=s.n_vehicles,
        n_sensors=s.n_sensors,
        horizon=s.horizon,
        budget_units=budget_units,
        min_units=min_units,
        fixed=fixed_idx,
        delay_min_count=tuple(delay_min_count),
        fairness_sensors=fairness_sensors,
        throughput_weight=throughput_weight,
        gap_weight=gap_weight,
        objective_scale=objective_scale,
    )
    logger.info(f"Built model {model.summary()}")
    return model


def complete_assignment(m: LinearModel, chosen: Iterable[int]) -> List[float]:
    """
    Full variable assignment for a set of chosen transmission variables:
    participation and z variables take the values the rows force.
    """
    values = [0.0] * m.n_vars
    vehicle_counts: Dict[int, int] = {}
    sensor_counts = [0] * m.n_sensors
    for i in chosen:
        values[i] = 1.0
        e = m.events[i]
        vehicle_counts[e.vehicle] = vehicle_counts.get(e.vehicle, 0) + 1
        sensor_counts[e.sensor] += 1
    for v, var in m.participation_vars.items():
        values[var] = 1.0 if vehicle_counts.get(v, 0) > 0 else 0.0
    if m.zmax_var is not None and m.fairness_sensors:
        counts = [sensor_counts[j] for j in m.fairness_sensors]
        values[m.zmax_var] = float(max(counts))
        values[m.zmin_var] = float(min(counts))
    return values


def decode_solution(
    m: LinearModel,
    assignment: Sequence[float],
    objective: Optional[float] = None,
    solver_stats: Optional[SolverStats] = None,
    algorithm: str = "",
) -> SolveResult:
    """
    Turn a variable assignment into a SolveResult.

    The assignment is checked against every row of the model, participation
    is checked against the participation variables, and the objective is
    recomputed from throughput and fairness gap. When the solver's objective
    is given, the two must agree within 1e-9.
    """
    if len(assignment) != m.n_vars:
        raise ConsistencyError(f"assignment has {len(assignment)} values for {m.n_vars} variables")

    values = [float(x) for x in assignment]
    for var, value in zip(m.variables, values):
        if var.kind == "binary" and min(abs(value), abs(value - 1)) > TOLERANCE:
            raise ConsistencyError(f"binary variable {var.name} has value {value}")
        if value < float(var.lower) - TOLERANCE or value > float(var.upper) + TOLERANCE:
            raise ConsistencyError(f"variable {var.name}={value} outside its bounds")

    for row in m.constraints:
        if not row.satisfied(values):
            raise ConsistencyError(f"assignment violates {row.name}")

    chosen = [i for i in range(m.n_tx) if values[i] > 0.5]
    try:
        schedule = Schedule.of(
            ((m.events[i].vehicle, m.events[i].sensor, m.events[i].slot) for i in chosen),
            m.n_vehicles, m.n_sensors,
        )
    except RelayError as err:
        raise ConsistencyError(str(err)) from err

    flagged = frozenset(v for v, var in m.participation_vars.items() if values[var] > 0.5)
    if flagged != participants_of(schedule, m.params):
        raise ConsistencyError(
            f"participation variables {sorted(flagged)} disagree with compensation "
            f"{sorted(participants_of(schedule, m.params))}"
        )

    value = m.objective_of(len(chosen), m.gap_of(schedule.sensor_counts()))
    if objective is not None and abs(float(value) - float(objective)) > OBJECTIVE_TOLERANCE:
        raise ConsistencyError(f"objective {objective} does not match recomputed {float(value)}")

    return SolveResult.from_schedule(schedule, m.params, float(value), solver_stats, algorithm)


def _fmt(value) -> str:
    return format(float(value), ".12g")


def _terms(coeffs: Iterable[Tuple[int, object]], m: LinearModel) -> str:
    parts = []
    for i, c in coeffs:
        text = _fmt(c)
        sign = "" if text.startswith("-") else "+"
        parts.append(f"{sign}{text} {m.variables[i].name}")
    return " ".join(parts) if parts else "0"


def to_lp_text(m: LinearModel) -> str:
    """Export the model in the CPLEX LP text format for external solvers."""
    lines = [f"\\ roadside_relay {m.kind.describe()}", "Maximize", f" obj: {_terms(m.objective, m)}", "Subject To"]
    for row in m.constraints:
        lines.append(f" {row.name}: {_terms(row.coeffs, m)} {row.sense} {_fmt(row.rhs)}")

    lines.append("Bounds")
    for var in m.variables:
        if var.kind == "continuous":
            lines.append(f" {_fmt(var.lower)} <= {var.name} <= {_fmt(var.upper)}")
        elif var.lower == var.upper:
            lines.append(f" {var.name} = {_fmt(var.lower)}")

    binaries = [var.name for var in m.variables if var.kind == "binary"]
    if binaries:
        lines.append("Binaries")
        for k in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"
