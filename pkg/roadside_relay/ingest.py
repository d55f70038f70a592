"""Trajectory ingestion from taxi GPS logs and seeded scenario generation."""

import logging
from datetime import date, datetime
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from . import config
from .geo import TrajectoryError, mean_trajectory
from .models import RelayError, Sensor, VehicleTrajectory

logger = logging.getLogger(__name__)

TDRIVE_COLUMNS = ["vehicle_id", "timestamp", "lon", "lat"]
TDRIVE_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


class IngestError(RelayError, ValueError):
    """Input data cannot be turned into trajectories or sensors."""


class BBox(NamedTuple):
    """A lat/lon rectangle in degrees."""

    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    @classmethod
    def parse(cls, text: str) -> "BBox":
        """Parse "lat_min,lon_min,lat_max,lon_max"."""
        try:
            values = [float(part) for part in text.split(",")]
        except ValueError as err:
            raise IngestError(f"bbox must be four numbers: {text!r}") from err
        if len(values) != 4:
            raise IngestError(f"bbox must be four numbers: {text!r}")
        return cls(*values)

    def validate(self) -> None:
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise IngestError(f"degenerate bbox {tuple(self)}")
        if not (-90 <= self.lat_min and self.lat_max <= 90 and -180 <= self.lon_min and self.lon_max <= 180):
            raise IngestError(f"bbox {tuple(self)} outside valid coordinates")

    def contains(self, lat, lon):
        return (lat >= self.lat_min) & (lat <= self.lat_max) & (lon >= self.lon_min) & (lon <= self.lon_max)


def _read_tdrive_file(path: Union[str, Path], strict: bool) -> pd.DataFrame:
    def bad_line(fields: List[str]):
        if strict:
            raise IngestError(f"{path}: malformed line {','.join(fields)!r}")
        logger.warning(f"{path}: skipping malformed line {','.join(fields)!r}")
        return None

    try:
        frame = pd.read_csv(
            path, header=None, names=TDRIVE_COLUMNS, dtype=str,
            engine="python", on_bad_lines=bad_line, skip_blank_lines=True,
        )
    except OSError as err:
        raise IngestError(f"cannot read {path}: {err}") from err
    frame["source"] = str(path)
    return frame


def ingest_tdrive(
    paths: Iterable[Union[str, Path]],
    bbox: BBox,
    day: date,
    epoch: Optional[datetime] = None,
    strict: bool = False,
) -> List[VehicleTrajectory]:
    """
    Day-long trajectories from T-Drive style logs.

    Each line reads `vehicle_id,YYYY-MM-DD HH:MM:SS,lon,lat`. Samples are
    kept when they fall on `day` and inside `bbox`, their times become
    seconds since `epoch` (midnight of `day` by default), repeated
    timestamps keep the first sample, and vehicles left with fewer than two
    samples are dropped. Vehicles come out in order of first appearance.
    """
    bbox.validate()
    epoch = epoch or datetime.combine(day, datetime.min.time())

    frames = [_read_tdrive_file(path, strict) for path in paths]
    if not frames:
        raise IngestError("no input files")
    raw = pd.concat(frames, ignore_index=True)

    parsed = pd.DataFrame({
        "vehicle_id": raw["vehicle_id"].str.strip(),
        "timestamp": pd.to_datetime(raw["timestamp"].str.strip(), format=TDRIVE_TIME_FORMAT, errors="coerce"),
        "lon": pd.to_numeric(raw["lon"], errors="coerce"),
        "lat": pd.to_numeric(raw["lat"], errors="coerce"),
    })
    malformed = (
        parsed.isna().any(axis=1)
        | (parsed["vehicle_id"] == "")
        | ~parsed["lat"].between(-90, 90)
        | ~parsed["lon"].between(-180, 180)
    )
    if malformed.any():
        if strict:
            first = raw[malformed].iloc[0]
            raise IngestError(f"{first['source']}: malformed record {list(first[TDRIVE_COLUMNS])}")
        for _, row in raw[malformed].iterrows():
            logger.warning(f"{row['source']}: skipping malformed record {list(row[TDRIVE_COLUMNS])}")
    records = parsed[~malformed]

    records = records[(records["timestamp"].dt.date == day) & bbox.contains(records["lat"], records["lon"])]
    records = records.assign(t=(records["timestamp"] - pd.Timestamp(epoch)).dt.total_seconds())
    records = records.drop_duplicates(subset=["vehicle_id", "t"], keep="first")

    trajectories: List[VehicleTrajectory] = []
    for vehicle_id, group in records.groupby("vehicle_id", sort=False):
        group = group.sort_values("t", kind="stable")
        if len(group) < 2:
            logger.info(f"Dropping vehicle {vehicle_id}: {len(group)} sample(s) on {day} inside the bbox")
            continue
        samples = tuple(
            (_seconds(t), float(lat), float(lon)) for t, lat, lon in zip(group["t"], group["lat"], group["lon"])
        )
        trajectories.append(VehicleTrajectory(str(vehicle_id), samples))

    if not trajectories:
        raise IngestError(f"no vehicle has two or more samples on {day} inside the bbox")
    logger.info(f"Ingested {len(trajectories)} trajectories from {len(frames)} file(s)")
    return trajectories


def _seconds(value: float):
    return int(value) if float(value).is_integer() else float(value)


def generate_deployment(bbox: BBox, n_sensors: int = config.N_SENSORS, seed: int = 0) -> List[Sensor]:
    """Sensors placed uniformly at random inside the bbox; same seed, same deployment."""
    bbox.validate()
    if n_sensors < 1:
        raise IngestError(f"need at least one sensor, got {n_sensors}")
    rng = np.random.Generator(np.random.PCG64(seed))
    lats = rng.uniform(bbox.lat_min, bbox.lat_max, size=n_sensors)
    lons = rng.uniform(bbox.lon_min, bbox.lon_max, size=n_sensors)
    return [Sensor(f"s{k}", float(lat), float(lon)) for k, (lat, lon) in enumerate(zip(lats, lons))]


def generate_deployments(bbox: BBox, n_sensors: int, n_deployments: int = config.N_DEPLOYMENTS, seed: int = 0) -> List[List[Sensor]]:
    """Deployment k uses seed + k."""
    return [generate_deployment(bbox, n_sensors, seed + k) for k in range(n_deployments)]


def generate_trajectories(
    n_vehicles: int,
    bbox: BBox,
    horizon_s: int = config.BENCH_HORIZON_S,
    seed: int = 0,
    waypoints: int = 5,
) -> List[VehicleTrajectory]:
    """
    Seeded straight-line trips between two random points of the bbox. Each
    trip starts in the first half of the horizon and lasts between a
    quarter and a half of it.
    """
    bbox.validate()
    if n_vehicles < 1 or horizon_s < 4:
        raise IngestError(f"need at least one vehicle and a horizon of 4 s, got {n_vehicles} and {horizon_s}")
    rng = np.random.Generator(np.random.PCG64(seed))
    trips: List[VehicleTrajectory] = []
    for k in range(n_vehicles):
        start = int(rng.integers(0, horizon_s // 2))
        duration = int(rng.integers(horizon_s // 4, horizon_s // 2 + 1))
        end = min(horizon_s - 1, start + max(duration, waypoints))
        a = (rng.uniform(bbox.lat_min, bbox.lat_max), rng.uniform(bbox.lon_min, bbox.lon_max))
        b = (rng.uniform(bbox.lat_min, bbox.lat_max), rng.uniform(bbox.lon_min, bbox.lon_max))
        times = np.unique(np.linspace(start, end, waypoints).round().astype(int))
        fractions = (times - start) / (end - start)
        samples = tuple(
            (int(t), float(a[0] + f * (b[0] - a[0])), float(a[1] + f * (b[1] - a[1])))
            for t, f in zip(times, fractions)
        )
        trips.append(VehicleTrajectory(f"v{k}", samples))
    return trips


def _resample(traj: VehicleTrajectory, waypoints: int) -> VehicleTrajectory:
    samples = np.asarray(traj.samples, dtype=float)
    times = np.linspace(samples[0, 0], samples[-1, 0], waypoints)
    lat = np.interp(times, samples[:, 0], samples[:, 1])
    lon = np.interp(times, samples[:, 0], samples[:, 2])
    return VehicleTrajectory(traj.vehicle_id, tuple(zip(times.tolist(), lat.tolist(), lon.tolist())))


def mean_trajectories(days: Sequence[Sequence[VehicleTrajectory]], waypoints: int = 50) -> List[VehicleTrajectory]:
    """
    One mean trajectory per vehicle seen on every day. Each day's trip is
    resampled to the same number of evenly timed waypoints before
    averaging; times are relative to each day's own epoch.
    """
    if not days:
        raise IngestError("no days to average")
    by_day: List[Dict[str, VehicleTrajectory]] = [{t.vehicle_id: t for t in day} for day in days]
    order = [t.vehicle_id for t in days[0]]

    result: List[VehicleTrajectory] = []
    for vehicle_id in order:
        if not all(vehicle_id in day for day in by_day):
            logger.warning(f"Vehicle {vehicle_id} is missing on some days; skipped")
            continue
        try:
            mean = mean_trajectory([_resample(day[vehicle_id], waypoints) for day in by_day], vehicle_id)
        except TrajectoryError as err:
            logger.warning(f"Vehicle {vehicle_id}: {err}; skipped")
            continue
        result.append(mean)
    if not result:
        raise IngestError("no vehicle appears on every day")
    return result
