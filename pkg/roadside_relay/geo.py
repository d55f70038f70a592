"""Geodetic distances, trajectory interpolation and contact extraction."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import atan2, cos, radians, sin, sqrt
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import config
from .models import RelayError, Scenario, VehicleTrajectory, require_valid

logger = logging.getLogger(__name__)

LatLon = Tuple[float, float]


class TrajectoryError(RelayError, ValueError):
    """Trajectories cannot be combined as requested."""


class ContactEvent(NamedTuple):
    """A vehicle within range of a sensor during one slot."""

    vehicle: int
    sensor: int
    slot: int
    distance_m: float

    @property
    def canonical_key(self) -> Tuple[int, int, int]:
        return (self.slot, self.sensor, self.vehicle)


@dataclass(frozen=True)
class ContactSet:
    """
    The feasible support of the distance matrix D: every (vehicle, sensor,
    slot) within range, sorted by (slot, sensor, vehicle).
    """

    events: Tuple[ContactEvent, ...]
    n_vehicles: int
    n_sensors: int
    horizon: int
    by_sensor: Dict[int, Tuple[int, ...]] = field(default_factory=dict, compare=False)
    by_vehicle: Dict[int, Tuple[int, ...]] = field(default_factory=dict, compare=False)
    by_slot_sensor: Dict[Tuple[int, int], Tuple[int, ...]] = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, events: Iterable[ContactEvent], n_vehicles: int, n_sensors: int, horizon: int) -> "ContactSet":
        ordered = tuple(sorted(events, key=lambda e: e.canonical_key))
        by_sensor: Dict[int, List[int]] = {}
        by_vehicle: Dict[int, List[int]] = {}
        by_slot_sensor: Dict[Tuple[int, int], List[int]] = {}
        for i, e in enumerate(ordered):
            by_sensor.setdefault(e.sensor, []).append(i)
            by_vehicle.setdefault(e.vehicle, []).append(i)
            by_slot_sensor.setdefault((e.slot, e.sensor), []).append(i)
        return cls(
            events=ordered,
            n_vehicles=n_vehicles,
            n_sensors=n_sensors,
            horizon=horizon,
            by_sensor={k: tuple(v) for k, v in by_sensor.items()},
            by_vehicle={k: tuple(v) for k, v in by_vehicle.items()},
            by_slot_sensor={k: tuple(v) for k, v in by_slot_sensor.items()},
        )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def vehicles_in_range(self, slot: int, sensor: int) -> List[int]:
        """Vehicles in range of a sensor at a slot, in vehicle input order."""
        return [self.events[i].vehicle for i in self.by_slot_sensor.get((slot, sensor), ())]

    def distance(self, vehicle: int, sensor: int, slot: int) -> Optional[float]:
        for i in self.by_slot_sensor.get((slot, sensor), ()):
            if self.events[i].vehicle == vehicle:
                return self.events[i].distance_m
        return None

    def contact_count(self, vehicle: int) -> int:
        return len(self.by_vehicle.get(vehicle, ()))

    def reachable_sensors(self) -> List[int]:
        return sorted(self.by_sensor)

    def restrict_vehicles(self, vehicles: Iterable[int]) -> "ContactSet":
        """Keep only the events of the given vehicles (indices unchanged)."""
        keep = set(vehicles)
        return ContactSet.build(
            (e for e in self.events if e.vehicle in keep),
            self.n_vehicles, self.n_sensors, self.horizon,
        )


def haversine_distance(a: LatLon, b: LatLon) -> float:
    """
    Great-circle distance in meters between two (lat, lon) points in degrees,
    on a sphere of radius 6,371,000 m.
    """
    lat1, lon1, lat2, lon2 = map(radians, [a[0], a[1], b[0], b[1]])

    dlat = lat2 - lat1
    dlon = lon2 - lon1

    h = sin(dlat / 2) ** 2 + cos(lat1) * cos(lat2) * sin(dlon / 2) ** 2
    c = 2 * atan2(sqrt(h), sqrt(1 - h))

    return config.EARTH_RADIUS_M * c


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine_distance over numpy arrays (broadcasting)."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    h = np.clip(h, 0.0, 1.0)
    return config.EARTH_RADIUS_M * 2 * np.arctan2(np.sqrt(h), np.sqrt(1 - h))


def positions(traj: VehicleTrajectory, slots: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Interpolated (lat, lon) of a trajectory at each slot time, with a mask of
    the slots inside the trajectory's time span.
    """
    samples = np.asarray(traj.samples, dtype=float)
    times = np.asarray(slots, dtype=float)
    lat = np.interp(times, samples[:, 0], samples[:, 1])
    lon = np.interp(times, samples[:, 0], samples[:, 2])
    on_road = (times >= samples[0, 0]) & (times <= samples[-1, 0])
    return lat, lon, on_road


def position_at(traj: VehicleTrajectory, t: float) -> Optional[LatLon]:
    """
    Linear interpolation in lat/lon between the samples bracketing t, or None
    when t lies outside the trajectory (vehicle not on the road).
    """
    lat, lon, on_road = positions(traj, [t])
    if not on_road[0]:
        return None
    return (float(lat[0]), float(lon[0]))


def _vehicle_contacts(vehicle: int, traj: VehicleTrajectory, s: Scenario) -> List[ContactEvent]:
    first = max(0, int(np.ceil(traj.start)))
    last = min(s.horizon - 1, int(np.floor(traj.end)))
    if last < first or not s.sensors:
        return []

    slots = np.arange(first, last + 1)
    lat, lon, on_road = positions(traj, slots)
    sensor_lat = np.array([sensor.lat for sensor in s.sensors])
    sensor_lon = np.array([sensor.lon for sensor in s.sensors])

    # rows: slots, columns: sensors
    dist = haversine_m(lat[:, None], lon[:, None], sensor_lat[None, :], sensor_lon[None, :])
    in_range = (dist <= s.params.range_m) & on_road[:, None]

    rows, cols = np.nonzero(in_range)
    return [
        ContactEvent(vehicle, int(j), int(slots[r]), float(dist[r, j]))
        for r, j in zip(rows, cols)
    ]


def extract_contacts(s: Scenario, workers: int = 1) -> ContactSet:
    """
    All (vehicle, sensor, slot) triples where the vehicle is on the road and
    within range_m of the sensor, with their distances, in canonical order.
    """
    require_valid(s)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda iv: _vehicle_contacts(iv[0], iv[1], s), enumerate(s.vehicles)))
    else:
        chunks = [_vehicle_contacts(i, traj, s) for i, traj in enumerate(s.vehicles)]

    events = [e for chunk in chunks for e in chunk]
    contacts = ContactSet.build(events, s.n_vehicles, s.n_sensors, s.horizon)
    logger.info(
        f"Extracted {len(contacts)} contact events for {s.n_vehicles} vehicles "
        f"and {s.n_sensors} sensors over {s.horizon} slots"
    )
    return contacts


def mean_trajectory(trajs: Sequence[VehicleTrajectory], vehicle_id: Optional[str] = None) -> VehicleTrajectory:
    """
    Average several runs of the same trip: sample i of the result is the mean
    position and mean arrival time of sample i across the inputs.
    """
    if not trajs:
        raise TrajectoryError("mean of no trajectories")
    lengths = {len(t.samples) for t in trajs}
    if len(lengths) != 1:
        raise TrajectoryError(f"trajectories have different sample counts: {sorted(lengths)}")

    stacked = np.array([t.samples for t in trajs], dtype=float)
    mean = stacked.mean(axis=0)
    if np.any(np.diff(mean[:, 0]) <= 0):
        raise TrajectoryError("mean arrival times are not strictly increasing")

    samples = tuple(
        (_as_time(t), float(lat), float(lon)) for t, lat, lon in mean
    )
    return VehicleTrajectory(vehicle_id or trajs[0].vehicle_id, samples)


def _as_time(value: float):
    return int(value) if float(value).is_integer() else float(value)
