"""Persistent capture-log format: JSON tables plus binary point blobs.

Directory layout::

    scenario.json            # serialized synthetic world
    sample.json              # keyframes: token, timestamp
    sample_data.json         # all sweeps: token, sensor, timestamp,
                             #   ego_pose_token, calibrated_sensor_token,
                             #   is_key_frame, filename, point_count
    ego_pose.json            # token, timestamp, rotation wxyz, translation
    calibrated_sensor.json   # sensor-to-ego extrinsics (identity in sim)
    blobs/<token>.bin        # little-endian float32 records

Radar blob records are 5 floats (x, y, z, vx, vy); LiDAR records are 3
floats (x, y, z). Parsing is strict: any corruption yields a structured
error, never a crash or silent acceptance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frames import Pose, Rotation
from .sensors import CaptureRecord, Sensor
from .worldsim import Scenario, scenario_from_dict, scenario_to_dict

TABLE_NAMES = ("sample", "sample_data", "ego_pose", "calibrated_sensor")
STRIDES = {Sensor.RADAR.value: 20, Sensor.LIDAR.value: 12}  # bytes per record
FLOATS = {Sensor.RADAR.value: 5, Sensor.LIDAR.value: 3}


class LogError(Exception):
    """Base class for capture-log failures."""


class SchemaError(LogError):
    """A table or required field is missing."""


class ParseError(LogError):
    """Malformed JSON; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


class ReferentialError(LogError):
    """A row references a token that does not exist."""


class BlobError(LogError):
    """A point blob is missing or has the wrong length."""


class OrderingError(LogError):
    """Per-sensor timestamps are not strictly increasing."""


class ValidationError(LogError):
    """Catch-all for remaining invariant violations."""


@dataclass(frozen=True)
class Violation:
    kind: str  # referential | ordering | blob | keyframes
    message: str


@dataclass(frozen=True)
class SampleRow:
    token: str
    timestamp: int


@dataclass(frozen=True)
class SampleDataRow:
    token: str
    sensor: str
    timestamp: int
    ego_pose_token: str
    calibrated_sensor_token: str
    is_key_frame: bool
    filename: str | None
    point_count: int


@dataclass(frozen=True)
class EgoPoseRow:
    token: str
    timestamp: int
    rotation: tuple[float, float, float, float]
    translation: tuple[float, float, float]


@dataclass(frozen=True)
class CalibratedSensorRow:
    token: str
    sensor: str
    rotation: tuple[float, float, float, float]
    translation: tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class CaptureLog:
    scenario: Scenario
    samples: list[SampleRow]
    sample_data: list[SampleDataRow]
    ego_poses: dict[str, EgoPoseRow]
    calibrated_sensors: dict[str, CalibratedSensorRow]
    points: dict[str, np.ndarray] = field(default_factory=dict)
    root: Path | None = None

    def pose_of(self, ego_pose_token: str) -> Pose:
        row = self.ego_poses[ego_pose_token]
        return Pose(Rotation(*row.rotation), np.array(row.translation))

    def extrinsics_of(self, calibrated_sensor_token: str) -> Pose:
        row = self.calibrated_sensors[calibrated_sensor_token]
        return Pose(Rotation(*row.rotation), np.array(row.translation))


def build_log(records: list[CaptureRecord], scenario: Scenario) -> CaptureLog:
    """Materialize records into the relational log shape, in memory.

    Records must be time-sorted per sensor (write_log's precondition).
    """
    last_seen: dict[str, int] = {}
    for record in records:
        prev = last_seen.get(record.sensor.value)
        if prev is not None and record.timestamp <= prev:
            raise ValueError(f"records not time-sorted for sensor {record.sensor.value}")
        last_seen[record.sensor.value] = record.timestamp

    calibrated = {
        f"cs_{sensor.value}": CalibratedSensorRow(
            token=f"cs_{sensor.value}",
            sensor=sensor.value,
            rotation=(1.0, 0.0, 0.0, 0.0),
            translation=(0.0, 0.0, 0.0),
        )
        for sensor in Sensor
    }
    samples = []
    sample_data = []
    ego_poses = {}
    points = {}
    for i, record in enumerate(records):
        ep_token = f"ep_{i:06d}"
        sd_token = f"sd_{i:06d}"
        ego_poses[ep_token] = EgoPoseRow(
            token=ep_token,
            timestamp=record.timestamp,
            rotation=record.ego_pose.rotation.wxyz(),
            translation=tuple(float(v) for v in record.ego_pose.translation),
        )
        is_key = record.sensor is Sensor.CAM_FRONT_TRIGGER
        if is_key:
            samples.append(SampleRow(token=f"sm_{len(samples):04d}", timestamp=record.timestamp))
            filename = None
            count = 0
        else:
            filename = f"blobs/{sd_token}.bin"
            count = len(record.points)
            points[sd_token] = np.asarray(record.points, dtype=float)
        sample_data.append(
            SampleDataRow(
                token=sd_token,
                sensor=record.sensor.value,
                timestamp=record.timestamp,
                ego_pose_token=ep_token,
                calibrated_sensor_token=f"cs_{record.sensor.value}",
                is_key_frame=is_key,
                filename=filename,
                point_count=count,
            )
        )
    return CaptureLog(
        scenario=scenario,
        samples=samples,
        sample_data=sample_data,
        ego_poses=ego_poses,
        calibrated_sensors=calibrated,
        points=points,
    )


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _serialize_tables(log: CaptureLog) -> dict[str, list[dict]]:
    return {
        "sample": [{"token": r.token, "timestamp": r.timestamp} for r in log.samples],
        "sample_data": [
            {
                "token": r.token,
                "sensor": r.sensor,
                "timestamp": r.timestamp,
                "ego_pose_token": r.ego_pose_token,
                "calibrated_sensor_token": r.calibrated_sensor_token,
                "is_key_frame": r.is_key_frame,
                "filename": r.filename,
                "point_count": r.point_count,
            }
            for r in log.sample_data
        ],
        "ego_pose": [
            {
                "token": r.token,
                "timestamp": r.timestamp,
                "rotation": list(r.rotation),
                "translation": list(r.translation),
            }
            for r in log.ego_poses.values()
        ],
        "calibrated_sensor": [
            {
                "token": r.token,
                "sensor": r.sensor,
                "rotation": list(r.rotation),
                "translation": list(r.translation),
            }
            for r in log.calibrated_sensors.values()
        ],
    }


def write_log_dir(log: CaptureLog, directory) -> CaptureLog:
    """Serialize a materialized log to a directory (blobs as float32 LE)."""
    root = Path(directory)
    try:
        (root / "blobs").mkdir(parents=True, exist_ok=True)
        _dump_json(root / "scenario.json", scenario_to_dict(log.scenario))
        for name, rows in _serialize_tables(log).items():
            _dump_json(root / f"{name}.json", rows)
        for row in log.sample_data:
            if row.filename is None:
                continue
            payload = log.points[row.token].astype("<f4")
            (root / row.filename).write_bytes(payload.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing capture log under {root}: {exc}") from exc
    return CaptureLog(
        scenario=log.scenario,
        samples=log.samples,
        sample_data=log.sample_data,
        ego_poses=log.ego_poses,
        calibrated_sensors=log.calibrated_sensors,
        points=log.points,
        root=root,
    )


def write_log(records: list[CaptureRecord], scenario: Scenario, directory) -> CaptureLog:
    """Materialize and serialize capture records; returns the written log."""
    return write_log_dir(build_log(records, scenario), directory)


def _load_table(root: Path, name: str) -> list[dict]:
    path = root / f"{name}.json"
    if not path.exists():
        raise SchemaError(f"schema error: missing table {name}")
    text = path.read_text(encoding="utf-8")
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"parse error in {name}.json at byte {offset}: {exc.msg}", offset) from exc
    if not isinstance(rows, list):
        raise SchemaError(f"schema error: table {name} is not a row array")
    return rows


def _require(row: dict, table: str, fields: tuple[str, ...]) -> None:
    for f in fields:
        if f not in row:
            raise SchemaError(f"schema error: table {table} row missing field {f}")


def read_log(directory, validate: bool = True) -> CaptureLog:
    """Load and materialize a capture-log directory.

    With validate=True (default), any invariant violation is raised as its
    structured error; validate=False defers that to `validate_log`.
    """
    root = Path(directory)
    if not root.is_dir():
        raise SchemaError(f"schema error: {root} is not a directory")
    scenario_path = root / "scenario.json"
    if not scenario_path.exists():
        raise SchemaError("schema error: missing table scenario")
    text = scenario_path.read_text(encoding="utf-8")
    try:
        scenario = scenario_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"parse error in scenario.json at byte {offset}: {exc.msg}", offset) from exc
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"schema error: scenario.json missing field {exc}") from exc

    samples = []
    for row in _load_table(root, "sample"):
        _require(row, "sample", ("token", "timestamp"))
        samples.append(SampleRow(token=row["token"], timestamp=int(row["timestamp"])))
    sample_data = []
    for row in _load_table(root, "sample_data"):
        _require(
            row,
            "sample_data",
            (
                "token",
                "sensor",
                "timestamp",
                "ego_pose_token",
                "calibrated_sensor_token",
                "is_key_frame",
                "filename",
                "point_count",
            ),
        )
        sample_data.append(
            SampleDataRow(
                token=row["token"],
                sensor=row["sensor"],
                timestamp=int(row["timestamp"]),
                ego_pose_token=row["ego_pose_token"],
                calibrated_sensor_token=row["calibrated_sensor_token"],
                is_key_frame=bool(row["is_key_frame"]),
                filename=row["filename"],
                point_count=int(row["point_count"]),
            )
        )
    ego_poses = {}
    for row in _load_table(root, "ego_pose"):
        _require(row, "ego_pose", ("token", "timestamp", "rotation", "translation"))
        ego_poses[row["token"]] = EgoPoseRow(
            token=row["token"],
            timestamp=int(row["timestamp"]),
            rotation=tuple(float(v) for v in row["rotation"]),
            translation=tuple(float(v) for v in row["translation"]),
        )
    calibrated = {}
    for row in _load_table(root, "calibrated_sensor"):
        _require(row, "calibrated_sensor", ("token", "sensor", "rotation", "translation"))
        calibrated[row["token"]] = CalibratedSensorRow(
            token=row["token"],
            sensor=row["sensor"],
            rotation=tuple(float(v) for v in row["rotation"]),
            translation=tuple(float(v) for v in row["translation"]),
        )

    points = {}
    for row in sample_data:
        if row.filename is None:
            continue
        if row.sensor not in STRIDES:
            raise SchemaError(f"schema error: unknown sensor {row.sensor} in sample_data")
        blob_path = root / row.filename
        if not blob_path.exists():
            raise BlobError(f"blob error: missing blob {row.filename} for row {row.token}")
        data = blob_path.read_bytes()
        expected = row.point_count * STRIDES[row.sensor]
        if len(data) != expected:
            raise BlobError(
                f"blob error: {row.filename} expected {expected} bytes got {len(data)}"
            )
        floats = np.frombuffer(data, dtype="<f4").astype(float)
        points[row.token] = floats.reshape(row.point_count, FLOATS[row.sensor])

    log = CaptureLog(
        scenario=scenario,
        samples=samples,
        sample_data=sample_data,
        ego_poses=ego_poses,
        calibrated_sensors=calibrated,
        points=points,
        root=root,
    )
    if validate:
        violations = validate_log(log)
        if violations:
            raise _violation_error(violations[0])
    return log


def _violation_error(v: Violation) -> LogError:
    cls = {
        "referential": ReferentialError,
        "ordering": OrderingError,
        "blob": BlobError,
        "keyframes": ValidationError,
    }.get(v.kind, ValidationError)
    return cls(v.message)


def validate_log(log: CaptureLog) -> list[Violation]:
    """Check every CaptureLog invariant; returns all violations found."""
    violations = []
    for row in log.sample_data:
        if row.ego_pose_token not in log.ego_poses:
            violations.append(
                Violation(
                    "referential",
                    f"referential error: row {row.token} references missing "
                    f"ego_pose {row.ego_pose_token}",
                )
            )
        if row.calibrated_sensor_token not in log.calibrated_sensors:
            violations.append(
                Violation(
                    "referential",
                    f"referential error: row {row.token} references missing "
                    f"calibrated_sensor {row.calibrated_sensor_token}",
                )
            )
    by_sensor: dict[str, list[int]] = {}
    for row in log.sample_data:
        by_sensor.setdefault(row.sensor, []).append(row.timestamp)
    for sensor, times in by_sensor.items():
        if any(b <= a for a, b in zip(times, times[1:])):
            violations.append(
                Violation(
                    "ordering",
                    f"ordering violation: sensor {sensor} timestamps not strictly increasing",
                )
            )
    for row in log.sample_data:
        if row.filename is None:
            continue
        stride = STRIDES.get(row.sensor)
        if stride is None:
            continue
        if log.root is not None:
            blob_path = log.root / row.filename
            if not blob_path.exists():
                violations.append(
                    Violation("blob", f"blob error: missing blob {row.filename} for row {row.token}")
                )
                continue
            actual = blob_path.stat().st_size
        else:
            actual = log.points[row.token].size * 4
        expected = row.point_count * stride
        if actual != expected:
            violations.append(
                Violation(
                    "blob",
                    f"blob error: {row.filename} expected {expected} bytes got {actual}",
                )
            )
    if len(log.samples) < 3:
        violations.append(
            Violation(
                "keyframes",
                f"insufficient keyframes: have {len(log.samples)}, the dataset "
                "builder drops the first two and needs at least one more",
            )
        )
    return violations


def log_to_records(log: CaptureLog) -> list[CaptureRecord]:
    """Rebuild CaptureRecords from a materialized log (sample_data order)."""
    records = []
    for row in log.sample_data:
        pose = log.pose_of(row.ego_pose_token)
        payload = None if row.filename is None else log.points[row.token]
        records.append(CaptureRecord(Sensor(row.sensor), row.timestamp, pose, payload))
    return records
