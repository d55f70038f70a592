"""File storage: versioned scenario files, result tables and run manifests."""

import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import pandas as pd

from . import __version__, config
from .geo import ContactSet, haversine_distance, position_at
from .metrics import MetricsReport
from .models import RelayError, Scenario, Schedule, SolveResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCHEDULE_COLUMNS = ["vehicle_id", "sensor_id", "slot", "distance_m"]


class SchemaError(RelayError, ValueError):
    """A scenario file is malformed or of an unsupported schema version."""


def scenario_to_json(s: Scenario) -> str:
    """Canonical JSON text of a scenario file (sorted keys, trailing newline)."""
    document = {"schema_version": config.SCHEMA_VERSION, **s.to_dict()}
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"scenario file is not valid JSON: {err}") from err
    if not isinstance(document, dict):
        raise SchemaError("scenario file must hold a JSON object")

    version = document.get("schema_version")
    if version != config.SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {version!r}, expected {config.SCHEMA_VERSION}")
    try:
        return Scenario.from_dict(document)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as err:
        raise SchemaError(f"malformed scenario file: {err!r}") from err


def save_scenario(s: Scenario, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scenario_to_json(s), encoding="utf-8")
    logger.info(f"Wrote scenario with {s.n_vehicles} vehicles and {s.n_sensors} sensors to {path}")
    return path


def load_scenario(path: PathLike) -> Scenario:
    return scenario_from_json(Path(path).read_text(encoding="utf-8"))


def _plain(value: Any) -> Any:
    """JSON/CSV friendly value: Fractions become floats."""
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def schedule_frame(sched: Schedule, s: Scenario, contacts: Optional[ContactSet] = None) -> pd.DataFrame:
    """One row per transmission in canonical order, with the vehicle-sensor distance."""
    rows = []
    for tx in sched.ordered():
        distance = contacts.distance(tx.vehicle, tx.sensor, tx.slot) if contacts is not None else None
        if distance is None:
            position = position_at(s.vehicles[tx.vehicle], tx.slot)
            distance = haversine_distance(position, s.sensors[tx.sensor].position) if position else float("nan")
        rows.append({
            "vehicle_id": s.vehicles[tx.vehicle].vehicle_id,
            "sensor_id": s.sensors[tx.sensor].sensor_id,
            "slot": tx.slot,
            "distance_m": round(distance, 3),
        })
    return pd.DataFrame(rows, columns=SCHEDULE_COLUMNS)


def write_schedule_csv(path: PathLike, sched: Schedule, s: Scenario, contacts: Optional[ContactSet] = None) -> Path:
    path = Path(path)
    schedule_frame(sched, s, contacts).to_csv(path, index=False)
    return path


def result_document(result: SolveResult, metrics: MetricsReport, s: Scenario) -> Dict[str, Any]:
    """The report JSON of one solve: metrics, participants, compensation, solver stats."""
    return {
        "algorithm": result.algorithm,
        "objective_value": result.objective_value,
        "throughput": metrics.throughput_units,
        "fairness_gap": metrics.fairness_gap_units,
        "mean_delay_s": metrics.mean_delay_s,
        "max_delay_s": metrics.max_delay_s,
        "total_spend": str(result.total_spend),
        "participants": [s.vehicles[v].vehicle_id for v in sorted(result.participants)],
        "compensation": {s.vehicles[v].vehicle_id: str(c) for v, c in sorted(result.compensation.items())},
        "solver": {
            "proven_optimal": result.solver_stats.proven_optimal,
            "dual_bound": result.solver_stats.dual_bound,
            "nodes_explored": result.solver_stats.nodes_explored,
        },
    }


def write_json(path: PathLike, document: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(document), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_table_csv(path: PathLike, table: pd.DataFrame) -> Path:
    path = Path(path)
    table.map(_plain).to_csv(path, index=False)
    return path


def write_metrics_csv(path: PathLike, metrics: MetricsReport) -> Path:
    return write_table_csv(path, pd.DataFrame([metrics.to_row()]))


def write_delay_cdf_csv(path: PathLike, cdf: Sequence[Tuple[Fraction, Fraction]]) -> Path:
    frame = pd.DataFrame(
        [{"delay_s": float(d), "cumulative_fraction": float(f)} for d, f in cdf],
        columns=["delay_s", "cumulative_fraction"],
    )
    return write_table_csv(path, frame)


def write_manifest(
    out_dir: PathLike,
    command: str,
    arguments: Dict[str, Any],
    s: Optional[Scenario] = None,
    outputs: Iterable[str] = (),
) -> Path:
    """
    Everything needed to rerun a command to byte-identical outputs: the
    command, its arguments (seeds included), the parameter set and the
    tool and schema versions.
    """
    document = {
        "tool": "roadside_relay",
        "version": __version__,
        "schema_version": config.SCHEMA_VERSION,
        "command": command,
        "arguments": {k: _plain(v) if not isinstance(v, Path) else str(v) for k, v in sorted(arguments.items())},
        "parameters": s.params.to_dict() if s is not None else None,
        "outputs": sorted(outputs),
    }
    return write_json(Path(out_dir) / "manifest.json", document)
