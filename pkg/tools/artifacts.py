"""
Artifact readers and writers
CSV tables (events, trajectories, ground truth, line candidates), scene and report JSON,
and an in-memory bundle written to disk in one step
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
from pydantic import ValidationError

from core.baselines import LineCandidate
from core.detect import EntryEvent, Peak
from core.forward_sim import GroundTruth, Scene, VehicleTruth
from core.track import Trajectory

logger = logging.getLogger("Artifacts")

SCHEMA_VERSION = 1

EVENT_FIELDS = ["vehicle_id", "entry_row", "entry_time_s", "peak_height", "peak_width", "entry_col"]
TRAJECTORY_FIELDS = ["vehicle_id", "row", "time_s", "col", "position_m", "class", "fitted_velocity_kmh", "residual_rms"]
TRUTH_FIELDS = ["vehicle_id", "row", "true_col", "true_velocity_mps"]
CANDIDATE_FIELDS = ["rank", "rho", "theta", "score", "velocity_kmh", "entry_row"]

PathLike = Union[str, Path]


def _num(value) -> str:
    """Shortest exact decimal for floats, plain digits for ints"""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _table(fields: List[str], rows: List[List[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(fields)
    writer.writerows(rows)
    return buffer.getvalue()


def _read_table(path: PathLike, fields: List[str]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Table not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [name for name in fields if name not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return list(reader)


def to_json(obj: Dict) -> str:
    """Deterministic JSON with a schema_version key"""
    payload = {"schema_version": SCHEMA_VERSION, **obj}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_json(path: PathLike) -> Dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"JSON file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON format in {path}: {e}")


# === Events ===

def events_csv(events: List[EntryEvent]) -> str:
    return _table(EVENT_FIELDS, [
        [e.vehicle_id, e.entry_row, _num(e.entry_time_s), _num(e.peak.height), e.peak.width, e.entry_col]
        for e in events
    ])


def read_events(path: PathLike) -> List[EntryEvent]:
    events = []
    for record in _read_table(path, EVENT_FIELDS):
        peak = Peak(index=int(record["entry_row"]), height=float(record["peak_height"]), width=int(record["peak_width"]))
        events.append(EntryEvent(
            vehicle_id=int(record["vehicle_id"]),
            entry_row=peak.index,
            entry_col=int(record["entry_col"]),
            entry_time_s=float(record["entry_time_s"]),
            peak=peak,
        ))
    return events


# === Trajectories ===

def trajectories_csv(trajs: List[Trajectory]) -> str:
    rows = []
    for traj in trajs:
        for row, col in zip(traj.rows, traj.cols):
            rows.append([
                traj.vehicle_id, int(row), _num(traj.time_of_row(int(row))), int(col),
                _num(traj.x0 + int(col) * traj.dx), traj.vehicle_class,
                _num(traj.fitted_velocity_kmh), _num(traj.residual_rms),
            ])
    return _table(TRAJECTORY_FIELDS, rows)


def trajectory_summary(trajs: List[Trajectory]) -> Dict:
    return {
        "trajectories": [
            {
                "vehicle_id": traj.vehicle_id,
                "class": traj.vehicle_class,
                "points": len(traj.rows),
                "single_point": traj.single_point,
                "entry_row": int(traj.rows[0]),
                "exit_row": int(traj.rows[-1]),
                "coefficients": [float(c) for c in traj.coefficients],
                "fitted_velocity_kmh": traj.fitted_velocity_kmh,
                "residual_rms": traj.residual_rms,
                "entry_peak": None if traj.entry_peak is None else {
                    "index": traj.entry_peak.index,
                    "height": traj.entry_peak.height,
                    "width": traj.entry_peak.width,
                },
                "dt": traj.dt,
                "dx": traj.dx,
                "t0": traj.t0,
                "x0": traj.x0,
            }
            for traj in trajs
        ]
    }


def summary_path(csv_path: PathLike) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".summary.json")


def read_trajectories(csv_path: PathLike) -> List[Trajectory]:
    """Key points from the CSV, fitted model from the adjacent summary JSON"""
    points: Dict[int, List[tuple]] = {}
    for record in _read_table(csv_path, TRAJECTORY_FIELDS):
        points.setdefault(int(record["vehicle_id"]), []).append((int(record["row"]), int(record["col"])))

    summary = read_json(summary_path(csv_path))
    trajs = []
    for entry in summary.get("trajectories", []):
        vehicle_id = entry["vehicle_id"]
        if vehicle_id not in points:
            raise ValueError(f"vehicle {vehicle_id} listed in summary but has no key points")
        rows, cols = zip(*points[vehicle_id])
        peak = entry.get("entry_peak")
        trajs.append(Trajectory(
            vehicle_id=vehicle_id,
            rows=np.array(rows, dtype=int),
            cols=np.array(cols, dtype=int),
            coefficients=np.array(entry["coefficients"], dtype=np.float64),
            fitted_velocity_kmh=entry["fitted_velocity_kmh"],
            residual_rms=entry["residual_rms"],
            vehicle_class=entry["class"],
            dt=entry["dt"],
            dx=entry["dx"],
            t0=entry["t0"],
            x0=entry["x0"],
            entry_peak=None if peak is None else Peak(**peak),
        ))
    return trajs


# === Ground truth and scenes ===

def ground_truth_csv(truth: GroundTruth) -> str:
    rows = []
    for v in truth.vehicles:
        for row, col in zip(v.rows, v.cols):
            rows.append([v.vehicle_id, int(row), _num(col), _num(v.velocity_mps)])
    return _table(TRUTH_FIELDS, rows)


def read_ground_truth(path: PathLike) -> GroundTruth:
    grouped: Dict[int, Dict[str, list]] = {}
    for record in _read_table(path, TRUTH_FIELDS):
        entry = grouped.setdefault(int(record["vehicle_id"]), {"rows": [], "cols": [], "v": float(record["true_velocity_mps"])})
        entry["rows"].append(int(record["row"]))
        entry["cols"].append(float(record["true_col"]))
    return GroundTruth([
        VehicleTruth(vehicle_id=vid, velocity_mps=g["v"], rows=np.array(g["rows"], dtype=int), cols=np.array(g["cols"]))
        for vid, g in sorted(grouped.items())
    ])


def scene_json(scene: Scene) -> str:
    return to_json(scene.model_dump(mode="json"))


def load_scene(path: PathLike) -> Scene:
    data = read_json(path)
    data.pop("schema_version", None)
    try:
        return Scene.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid scene {path}: {e}")
        raise


# === Baseline candidates ===

def candidates_csv(candidates: List[LineCandidate]) -> str:
    return _table(CANDIDATE_FIELDS, [
        [rank, _num(c.rho), _num(c.theta), _num(c.score), _num(c.velocity_kmh), _num(c.entry_row)]
        for rank, c in enumerate(candidates, start=1)
    ])


class ArtifactBundle:
    """Named artifacts held in memory until every stage has succeeded"""

    def __init__(self):
        self.files: Dict[str, bytes] = {}

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text.encode("utf-8")

    def add_bytes(self, name: str, blob: bytes) -> None:
        self.files[name] = blob

    def add_json(self, name: str, obj: Dict) -> None:
        self.add_text(name, to_json(obj))

    def manifest(self) -> Dict:
        return {"files": sorted(self.files)}

    def write(self, output_dir: PathLike) -> List[Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.files):
            path = output_dir / name
            path.write_bytes(self.files[name])
            written.append(path)
        logger.info(f"Wrote {len(written)} artifacts to {output_dir}")
        return written
