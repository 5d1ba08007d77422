"""Synchronous/asynchronous dataset variants from a capture log.

For each surviving keyframe the builder picks the latest sweep of the
requested modality that is at least `target_latency` old, retargets its
points from the capture ego frame into the reference ego frame at the
camera trigger, and optionally extrapolates radar points forward along
their measured velocities.

Latency is a target satisfied by "latest sweep at least that old": the
ladder values do not align with the 76.9 ms radar period, so the
per-frame achieved latency is recorded alongside.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import Pose, retarget_points, to_seconds
from .ingest import (
    CalibratedSensorRow,
    CaptureLog,
    EgoPoseRow,
    SampleDataRow,
    SampleRow,
    write_log_dir,
)
from .sensors import Sensor

logger = logging.getLogger(__name__)

KEYFRAMES_DROPPED = 2  # consistency of prior sweeps between variants


class ConfigError(ValueError):
    """Invalid latency configuration."""


@dataclass(frozen=True)
class LatencyConfig:
    target_latency: int  # microseconds
    modality: Sensor
    compensate: bool = False

    def __post_init__(self):
        if self.target_latency < 0:
            raise ConfigError("target latency must be non-negative")
        if self.modality not in (Sensor.RADAR, Sensor.LIDAR):
            raise ConfigError("modality must be RADAR or LIDAR")
        if self.compensate and self.modality is not Sensor.RADAR:
            raise ConfigError("compensation requires radar (LiDAR has no velocity)")


@dataclass(frozen=True, eq=False)
class VariantFrame:
    t_cam: int
    ref_pose: Pose  # ego-to-global at the camera trigger
    points: np.ndarray  # retargeted payload, radar (N,5) / lidar (N,3)
    achieved_latency: int  # t_cam - source sweep timestamp
    source_timestamp: int


@dataclass(frozen=True, eq=False)
class DatasetVariant:
    config: LatencyConfig
    frames: list[VariantFrame]


def shift_by_velocity(points: np.ndarray, dt_micros: int) -> np.ndarray:
    """Translate radar points by their own planar velocity over dt."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 5:
        raise ValueError("radar points must be (N, 5): x, y, z, vx, vy")
    dt = to_seconds(dt_micros)
    out = points.copy()
    out[:, 0] += points[:, 3] * dt
    out[:, 1] += points[:, 4] * dt
    return out


def compensate_radar(points: np.ndarray, t_radar: int, t_cam: int) -> np.ndarray:
    """Predict radar point positions at t_cam from their planar velocities.

    position += (vx, vy, 0) * (t_cam - t_radar) seconds; z and velocities
    untouched, count and order preserved. Points must already be in the
    reference frame.
    """
    if t_cam < t_radar:
        raise ValueError(f"t_cam {t_cam} precedes t_radar {t_radar}")
    return shift_by_velocity(points, t_cam - t_radar)


def _reference_poses(log: CaptureLog) -> dict[int, Pose]:
    """Keyframe timestamp -> ego pose at the camera trigger."""
    refs = {}
    for row in log.sample_data:
        if row.sensor == Sensor.CAM_FRONT_TRIGGER.value:
            refs[row.timestamp] = log.pose_of(row.ego_pose_token)
    return refs


def build_variant(log: CaptureLog, cfg: LatencyConfig) -> DatasetVariant:
    """Construct one dataset variant; see module docstring for semantics."""
    if not isinstance(cfg, LatencyConfig):
        raise ConfigError("cfg must be a LatencyConfig")
    keyframes = sorted(log.samples, key=lambda s: s.timestamp)
    if len(keyframes) < 3:
        raise ValueError(f"log has {len(keyframes)} keyframes; need at least 3")
    keyframes = keyframes[KEYFRAMES_DROPPED:]
    refs = _reference_poses(log)

    sweeps = sorted(
        (r for r in log.sample_data if r.sensor == cfg.modality.value),
        key=lambda r: r.timestamp,
    )
    sweep_times = [r.timestamp for r in sweeps]

    frames = []
    for keyframe in keyframes:
        t_cam = keyframe.timestamp
        cutoff = t_cam - cfg.target_latency
        i = bisect_right(sweep_times, cutoff) - 1
        if i < 0:
            logger.warning(
                "keyframe %s at %d us dropped: no %s sweep at least %d us old",
                keyframe.token,
                t_cam,
                cfg.modality.value,
                cfg.target_latency,
            )
            continue
        row = sweeps[i]
        try:
            ref_pose = refs[t_cam]
        except KeyError:
            raise ValueError(f"keyframe {keyframe.token} has no camera-trigger ego pose")
        src_pose = log.pose_of(row.ego_pose_token).compose(
            log.extrinsics_of(row.calibrated_sensor_token)
        )
        raw = log.points[row.token]
        points = raw.copy()
        points[:, :3] = retarget_points(raw[:, :3], src_pose, ref_pose)
        if cfg.modality is Sensor.RADAR:
            # velocities are direction quantities: rotate, don't translate
            rel_rot = ref_pose.inverse().compose(src_pose).rotation
            v3 = np.column_stack([raw[:, 3], raw[:, 4], np.zeros(len(raw))])
            points[:, 3:5] = rel_rot.rotate(v3)[:, :2]
        if cfg.compensate:
            points = compensate_radar(points, row.timestamp, t_cam)
        frames.append(
            VariantFrame(
                t_cam=t_cam,
                ref_pose=ref_pose,
                points=points,
                achieved_latency=t_cam - row.timestamp,
                source_timestamp=row.timestamp,
            )
        )
    return DatasetVariant(config=cfg, frames=frames)


def write_variant(variant: DatasetVariant, log: CaptureLog, directory) -> None:
    """Serialize a variant in the capture-log layout plus a manifest.

    The output directory is itself a readable log (every frame is a
    keyframe of the variant's modality); achieved latencies and source
    sweep timestamps live in variant_manifest.json.
    """
    sensor = variant.config.modality.value
    samples = []
    sample_data = []
    ego_poses = {}
    points = {}
    for i, frame in enumerate(variant.frames):
        sd_token = f"sd_{i:06d}"
        ep_token = f"ep_{i:06d}"
        samples.append(SampleRow(token=f"sm_{i:04d}", timestamp=frame.t_cam))
        ego_poses[ep_token] = EgoPoseRow(
            token=ep_token,
            timestamp=frame.t_cam,
            rotation=frame.ref_pose.rotation.wxyz(),
            translation=tuple(float(v) for v in frame.ref_pose.translation),
        )
        sample_data.append(
            SampleDataRow(
                token=sd_token,
                sensor=sensor,
                timestamp=frame.t_cam,
                ego_pose_token=ep_token,
                calibrated_sensor_token=f"cs_{sensor}",
                is_key_frame=True,
                filename=f"blobs/{sd_token}.bin",
                point_count=len(frame.points),
            )
        )
        points[sd_token] = frame.points
    calibrated = {
        f"cs_{sensor}": CalibratedSensorRow(
            token=f"cs_{sensor}",
            sensor=sensor,
            rotation=(1.0, 0.0, 0.0, 0.0),
            translation=(0.0, 0.0, 0.0),
        )
    }
    variant_log = CaptureLog(
        scenario=log.scenario,
        samples=samples,
        sample_data=sample_data,
        ego_poses=ego_poses,
        calibrated_sensors=calibrated,
        points=points,
    )
    write_log_dir(variant_log, directory)
    manifest = {
        "modality": sensor,
        "target_latency_us": variant.config.target_latency,
        "compensate": variant.config.compensate,
        "frames": [
            {
                "t_cam": f.t_cam,
                "achieved_latency_us": f.achieved_latency,
                "source_timestamp": f.source_timestamp,
            }
            for f in variant.frames
        ],
    }
    (Path(directory) / "variant_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def read_variant(directory) -> tuple[DatasetVariant, CaptureLog]:
    """Load a serialized variant directory back into memory."""
    from .ingest import SchemaError, read_log

    manifest_path = Path(directory) / "variant_manifest.json"
    if not manifest_path.exists():
        raise SchemaError("schema error: missing table variant_manifest")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    log = read_log(directory, validate=False)
    cfg = LatencyConfig(
        target_latency=manifest["target_latency_us"],
        modality=Sensor(manifest["modality"]),
        compensate=manifest["compensate"],
    )
    rows = {r.timestamp: r for r in log.sample_data}
    frames = []
    for entry in manifest["frames"]:
        row = rows[entry["t_cam"]]
        frames.append(
            VariantFrame(
                t_cam=entry["t_cam"],
                ref_pose=log.pose_of(row.ego_pose_token),
                points=log.points[row.token],
                achieved_latency=entry["achieved_latency_us"],
                source_timestamp=entry["source_timestamp"],
            )
        )
    return DatasetVariant(config=cfg, frames=frames), log
