"""Exact solvers for the scheduling programs built by formulation.py."""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import config
from .formulation import LinearModel, ModelError, complete_assignment, decode_solution
from .models import SolveResult, SolverStats

logger = logging.getLogger(__name__)


class InfeasibleModelError(ModelError):
    """No assignment satisfies the model (only possible with fixed transmissions)."""


@dataclass
class _SearchState:
    """Incremental counters of a partial assignment in canonical order."""

    vehicle_taken: Dict[int, List[int]] = field(default_factory=dict)  # slots taken per vehicle
    vehicle_remaining: Dict[int, int] = field(default_factory=dict)
    sensor_taken: List[List[int]] = field(default_factory=list)  # slots taken per sensor
    sensor_slots_left: List[int] = field(default_factory=list)
    total: int = 0


class BranchAndBound:
    """
    Depth-first search over transmission variables in canonical event order,
    include branch first.

    Feasibility is checked when a transmission is taken: every constraint of
    the model can be decided at that point because events arrive slot by
    slot. Nodes whose bound does not beat the incumbent are pruned and the
    incumbent only changes on strict improvement, so among optimal schedules
    the one found first (the lexicographically greatest 0/1 vector) is kept.

    A seeded incumbent (the empty schedule or a warm start) is only a
    fallback for the time limit: until the search reaches its first leaf of
    at least the same value, ties go to the leaf, so the result does not
    depend on the seed.
    """

    def __init__(
        self,
        m: LinearModel,
        time_limit_s: Optional[float] = None,
        seed: Optional[Tuple[int, ...]] = None,
    ):
        self.m = m
        self.time_limit_s = time_limit_s
        self.events = m.events
        self.n = m.n_tx
        self.fixed = m.fixed
        self.group_last = [
            k == self.n - 1 or (self.events[k + 1].slot, self.events[k + 1].sensor) != (e.slot, e.sensor)
            for k, e in enumerate(self.events)
        ]
        self.cap_n = m.kind.per_vehicle_cap
        self.exclusive = m.kind.vehicle_exclusive

        last_slot: Dict[int, int] = {}
        for e in self.events:
            last_slot[e.sensor] = e.slot
        self.final_cap = [m.buffer_cap(last_slot[j]) if j in last_slot else 0 for j in range(m.n_sensors)]

        self.state = _SearchState(
            vehicle_taken={v: [] for v in m.participation_vars},
            vehicle_remaining={v: 0 for v in m.participation_vars},
            sensor_taken=[[] for _ in range(m.n_sensors)],
            sensor_slots_left=[0] * m.n_sensors,
        )
        for k, e in enumerate(self.events):
            self.state.vehicle_remaining[e.vehicle] += 1
            if self.group_last[k]:
                self.state.sensor_slots_left[e.sensor] += 1

        self.nodes = 0
        self.best_value: Optional[int] = None
        self.best_choice: Tuple[int, ...] = ()
        self.seeded = seed is not None
        if seed is not None:
            self.best_value = self._value_of(seed)
            self.best_choice = seed

    def _value_of(self, choice: Tuple[int, ...]) -> int:
        counts = [0] * self.m.n_sensors
        for i in choice:
            counts[self.events[i].sensor] += 1
        return self.m.scaled_objective(len(choice), self.m.gap_of(counts))

    def can_take(self, k: int) -> bool:
        m, st, e = self.m, self.state, self.events[k]
        if st.total + 1 > m.budget_units:
            return False
        taken = st.sensor_taken[e.sensor]
        if taken and taken[-1] == e.slot:
            return False
        sent = len(taken) + 1
        if sent > m.buffer_cap(e.slot):
            return False
        need = m.delay_min_count[k] if m.delay_min_count else None
        if need is not None and sent < need:
            return False
        own = st.vehicle_taken[e.vehicle]
        if self.cap_n is not None and len(own) + 1 > self.cap_n - 1:
            return False
        if self.exclusive and own and own[-1] == e.slot:
            return False
        return True

    def _group_taken(self, e) -> bool:
        taken = self.state.sensor_taken[e.sensor]
        return bool(taken) and taken[-1] == e.slot

    def advance(self, k: int, include: bool) -> None:
        st, e = self.state, self.events[k]
        st.vehicle_remaining[e.vehicle] -= 1
        if include:
            st.sensor_slots_left[e.sensor] -= 1
            st.sensor_taken[e.sensor].append(e.slot)
            st.vehicle_taken[e.vehicle].append(e.slot)
            st.total += 1
        elif self.group_last[k] and not self._group_taken(e):
            st.sensor_slots_left[e.sensor] -= 1

    def retreat(self, k: int, include: bool) -> None:
        st, e = self.state, self.events[k]
        st.vehicle_remaining[e.vehicle] += 1
        if include:
            st.sensor_taken[e.sensor].pop()
            st.vehicle_taken[e.vehicle].pop()
            st.sensor_slots_left[e.sensor] += 1
            st.total -= 1
        elif self.group_last[k] and not self._group_taken(e):
            st.sensor_slots_left[e.sensor] += 1

    def participation_ok(self, vehicle: int) -> bool:
        count = len(self.state.vehicle_taken[vehicle])
        return count == 0 or count + self.state.vehicle_remaining[vehicle] >= self.m.min_units

    def bound(self) -> int:
        """Upper bound on the scaled objective of any completion."""
        m, st = self.m, self.state
        extra = [
            min(st.sensor_slots_left[j], max(0, self.final_cap[j] - len(st.sensor_taken[j])))
            for j in range(m.n_sensors)
        ]
        throughput = st.total + min(m.budget_units - st.total, sum(extra))
        gap = 0
        if m.gap_weight and m.fairness_sensors:
            highest = max(len(st.sensor_taken[j]) for j in m.fairness_sensors)
            lowest = min(len(st.sensor_taken[j]) + extra[j] for j in m.fairness_sensors)
            gap = max(0, highest - lowest)
        return m.scaled_objective(throughput, gap)

    def leaf_value(self) -> int:
        counts = [len(taken) for taken in self.state.sensor_taken]
        return self.m.scaled_objective(self.state.total, self.m.gap_of(counts))

    def run(self) -> SolverStats:
        start = time.monotonic()
        deadline = None if self.time_limit_s is None else start + self.time_limit_s
        trail: List[Tuple[int, bool]] = []
        k = 0
        timed_out = False

        while True:
            self.nodes += 1
            if self.nodes % config.SOLVER_LOG_EVERY_NODES == 0:
                logger.info(f"Branch and bound: {self.nodes} nodes, incumbent {self.best_value}")
            if deadline is not None and self.nodes % 1024 == 0 and time.monotonic() > deadline:
                timed_out = True
                break

            alive = not trail or self.participation_ok(self.events[trail[-1][0]].vehicle)
            if alive and self.best_value is not None:
                bound = self.bound()
                if bound < self.best_value or (bound == self.best_value and not self.seeded):
                    alive = False

            if alive and k == self.n:
                value = self.leaf_value()
                if self.best_value is None or value > self.best_value or (self.seeded and value == self.best_value):
                    self.best_value = value
                    self.best_choice = tuple(i for i, inc in trail if inc)
                    self.seeded = False
                alive = False

            if alive:
                if self.can_take(k):
                    self.advance(k, True)
                    trail.append((k, True))
                    k += 1
                    continue
                if k not in self.fixed:
                    self.advance(k, False)
                    trail.append((k, False))
                    k += 1
                    continue

            # backtrack to the deepest include that still has an open exclude branch
            while trail:
                last, included = trail.pop()
                self.retreat(last, included)
                if included and last not in self.fixed:
                    self.advance(last, False)
                    trail.append((last, False))
                    k = last + 1
                    break
            else:
                break

        dual = self._open_bound(trail) if timed_out else self.best_value
        elapsed = time.monotonic() - start
        return SolverStats(
            nodes_explored=self.nodes,
            wall_time_s=elapsed,
            proven_optimal=not timed_out,
            dual_bound=None if dual is None else float(dual) / self.m.objective_scale,
        )

    def _open_bound(self, trail: List[Tuple[int, bool]]) -> int:
        """Largest bound over the nodes left open when the search stopped."""
        best = self.bound()
        while trail:
            last, included = trail.pop()
            self.retreat(last, included)
            if included and last not in self.fixed:
                best = max(best, self.bound())
        if self.best_value is not None:
            best = max(best, self.best_value)
        return best


def _seed_choice(m: LinearModel, warm_start: Optional[Iterable[Tuple[int, int, int]]]) -> Optional[Tuple[int, ...]]:
    """Model indices of a feasible starting schedule, or None when there is none to offer."""
    if warm_start is not None:
        index = {(e.vehicle, e.sensor, e.slot): i for i, e in enumerate(m.events)}
        keys = [tuple(tx) for tx in warm_start]
        if all(key in index for key in keys):
            choice = tuple(sorted(index[key] for key in keys))
            values = complete_assignment(m, choice)
            if m.fixed <= set(choice) and all(row.satisfied(values) for row in m.constraints):
                return choice
        logger.info("Warm start does not satisfy the model, ignoring it")
    if not m.fixed:
        return ()
    return None


def solve_exact(
    m: LinearModel,
    time_limit_s: Optional[float] = None,
    warm_start: Optional[Iterable[Tuple[int, int, int]]] = None,
) -> SolveResult:
    """
    Optimal schedule by branch and bound. With a time limit the best schedule
    found so far is returned with proven_optimal=False and the dual bound.

    The search starts from `warm_start` (transmissions as vehicle, sensor,
    slot) when it satisfies the model, otherwise from the empty schedule when
    nothing is fixed. A proven optimum does not depend on the warm start.
    """
    logger.info(f"Solving {m.summary()}")
    search = BranchAndBound(m, time_limit_s, seed=_seed_choice(m, warm_start))
    stats = search.run()

    if search.best_value is None:
        if not stats.proven_optimal:
            raise ModelError(f"time limit of {time_limit_s}s reached before any feasible schedule")
        raise InfeasibleModelError("no schedule satisfies the fixed transmissions")

    value = float(search.best_value) / m.objective_scale
    result = decode_solution(
        m, complete_assignment(m, search.best_choice), objective=value,
        solver_stats=stats, algorithm=f"exact-{m.kind.kind.value}",
    )
    status = "optimal" if stats.proven_optimal else "time limit"
    logger.info(
        f"Branch and bound {status}: objective {value:.6g}, {result.throughput} units, "
        f"{len(result.participants)} participants, {stats.nodes_explored} nodes in {stats.wall_time_s:.2f}s"
    )
    return result


def _x_only_rows(m: LinearModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense matrix, senses and right-hand sides of rows over transmissions only."""
    rows, senses, rhs = [], [], []
    for row in m.constraints:
        if any(i >= m.n_tx for i, _ in row.coeffs):
            continue
        dense = np.zeros(m.n_tx, dtype=np.int64)
        for i, c in row.coeffs:
            dense[i] += c
        rows.append(dense)
        senses.append({"<=": -1, "=": 0, ">=": 1}[row.sense])
        rhs.append(row.rhs)
    if not rows:
        return np.zeros((0, m.n_tx), dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.array(rows), np.array(senses), np.array(rhs, dtype=np.int64)


def solve_bruteforce(m: LinearModel, chunk_size: int = 1 << 16) -> SolveResult:
    """
    Exhaustive enumeration of every 0/1 transmission vector; the test oracle
    for solve_exact. Vectors are scanned from 1...1 down to 0...0 with the
    first canonical variable most significant, and the first maximum wins.
    """
    n = m.n_tx
    if n > config.BRUTEFORCE_MAX_VARS:
        raise ModelError(f"brute force is limited to {config.BRUTEFORCE_MAX_VARS} variables, model has {n}")

    start = time.monotonic()
    A, senses, rhs = _x_only_rows(m)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    vehicles = sorted(m.participation_vars)
    vehicle_mask = np.array([[e.vehicle == v for e in m.events] for v in vehicles], dtype=np.int64).reshape(len(vehicles), n)
    sensor_mask = np.array([[e.sensor == j for e in m.events] for j in m.fairness_sensors], dtype=np.int64).reshape(len(m.fairness_sensors), n)
    fixed_mask = np.zeros(n, dtype=bool)
    fixed_mask[list(m.fixed)] = True

    best_value: Optional[int] = None
    best_bits: Optional[np.ndarray] = None
    total = 1 << n
    top = total - 1
    while top >= 0:
        codes = np.arange(top, max(top - chunk_size, -1), -1, dtype=np.int64)
        top -= chunk_size
        bits = (codes[:, None] >> shifts[None, :]) & 1

        ok = np.all(bits[:, fixed_mask] == 1, axis=1) if fixed_mask.any() else np.ones(len(codes), dtype=bool)
        if len(rhs):
            activity = bits @ A.T
            ok &= np.all(
                np.where(senses < 0, activity <= rhs, np.where(senses > 0, activity >= rhs, activity == rhs)),
                axis=1,
            )
        if len(vehicles):
            counts = bits @ vehicle_mask.T
            ok &= np.all((counts == 0) | (counts >= m.min_units), axis=1)
        if not ok.any():
            continue

        throughput = bits.sum(axis=1)
        if m.gap_weight and len(m.fairness_sensors):
            per_sensor = bits @ sensor_mask.T
            gap = per_sensor.max(axis=1) - per_sensor.min(axis=1)
        else:
            gap = np.zeros(len(codes), dtype=np.int64)
        values = np.where(ok, m.throughput_weight * throughput - m.gap_weight * gap, np.iinfo(np.int64).min)
        pos = int(np.argmax(values))
        if best_value is None or values[pos] > best_value:
            best_value = int(values[pos])
            best_bits = bits[pos]

    if best_value is None:
        raise InfeasibleModelError("no schedule satisfies the fixed transmissions")

    chosen = [i for i in range(n) if best_bits[i]]
    stats = SolverStats(nodes_explored=total, wall_time_s=time.monotonic() - start, proven_optimal=True)
    return decode_solution(
        m, complete_assignment(m, chosen), objective=float(best_value) / m.objective_scale,
        solver_stats=stats, algorithm=f"bruteforce-{m.kind.kind.value}",
    )


def model_arrays(m: LinearModel):
    """Objective, sparse constraint matrix and bounds as numpy/scipy arrays."""
    from scipy.sparse import csr_matrix

    c = np.zeros(m.n_vars)
    for i, coeff in m.objective:
        c[i] += float(coeff)

    data, row_idx, col_idx = [], [], []
    lower = np.full(len(m.constraints), -np.inf)
    upper = np.full(len(m.constraints), np.inf)
    for r, row in enumerate(m.constraints):
        for i, coeff in row.coeffs:
            data.append(coeff)
            row_idx.append(r)
            col_idx.append(i)
        if row.sense in ("<=", "="):
            upper[r] = row.rhs
        if row.sense in (">=", "="):
            lower[r] = row.rhs
    A = csr_matrix((data, (row_idx, col_idx)), shape=(len(m.constraints), m.n_vars), dtype=float)

    var_lower = np.array([float(v.lower) for v in m.variables])
    var_upper = np.array([float(v.upper) for v in m.variables])
    integrality = np.array([1 if v.kind == "binary" else 0 for v in m.variables])
    return c, A, lower, upper, var_lower, var_upper, integrality


def solve_milp(m: LinearModel, time_limit_s: Optional[float] = None) -> SolveResult:
    """Solve the model with the HiGHS MILP solver shipped in scipy."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    c, A, lower, upper, var_lower, var_upper, integrality = model_arrays(m)
    options = {"mip_rel_gap": 0.0}
    if time_limit_s is not None:
        options["time_limit"] = time_limit_s

    start = time.monotonic()
    constraints = [LinearConstraint(A, lower, upper)] if A.shape[0] else []
    res = milp(-c, constraints=constraints, integrality=integrality, bounds=Bounds(var_lower, var_upper), options=options)
    if res.x is None:
        if res.status == 2:
            raise InfeasibleModelError(res.message)
        raise ModelError(f"MILP solver failed: {res.message}")

    values: List[float] = [
        float(round(x)) if var.kind == "binary" else float(x) for var, x in zip(m.variables, res.x)
    ]
    chosen = [i for i in range(m.n_tx) if values[i] > 0.5]
    dual = getattr(res, "mip_dual_bound", None)
    stats = SolverStats(
        nodes_explored=int(getattr(res, "mip_node_count", 0) or 0),
        wall_time_s=time.monotonic() - start,
        proven_optimal=res.status == 0,
        dual_bound=None if dual is None else -float(dual),
    )
    return decode_solution(m, complete_assignment(m, chosen), objective=None, solver_stats=stats, algorithm=f"milp-{m.kind.kind.value}")
