"""Simulated radar and LiDAR capture with nuScenes-like timing.

LiDAR sweeps at 20 Hz with camera triggers locked to the keyframe rate;
radar runs at 13 Hz with per-event phase jitter so its offset to the
keyframes is sporadic. LiDAR is 40x denser than radar per agent and
carries no velocity.

All randomness is derived from the scenario seed, keyed by sensor, agent
and point index. The measurement pattern is therefore anchored to the
world, not the sweep: repeated captures of a static world are
bit-identical, which keeps the latency sweep's invariance properties
exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .frames import Pose
from .worldsim import Scenario, agent_state_at, ego_pose_at

# rng domain codes (camera/scenario live in worldsim as 6/7)
DOMAIN_SCHEDULE = 1
DOMAIN_RADAR_AGENT = 2
DOMAIN_LIDAR_AGENT = 3
DOMAIN_RADAR_CLUTTER = 4
DOMAIN_LIDAR_CLUTTER = 5

LIDAR_ROOF_FRACTION = 0.35


class Sensor(str, enum.Enum):
    RADAR = "RADAR"
    LIDAR = "LIDAR"
    CAM_FRONT_TRIGGER = "CAM_FRONT_TRIGGER"


@dataclass(frozen=True)
class SensorConfig:
    lidar_rate: float = 20.0  # Hz
    radar_rate: float = 13.0  # Hz
    keyframe_rate: float = 2.0  # Hz
    radar_phase_jitter: int = 15_000  # +/- microseconds per radar event
    lidar_points_per_agent: int = 200
    radar_points_per_agent: int = 5  # 40:1 density ratio vs LiDAR
    clutter_points_per_sweep: int = 20
    position_noise_sigma: float = 0.05  # meters, per horizontal component
    radar_velocity_noise_bound: float = 0.0278  # m/s (= 0.1 km/h), uniform bound
    camera_offset: int = 12_000  # microseconds after the keyframe LiDAR sweep

    def __post_init__(self):
        if min(self.lidar_rate, self.radar_rate, self.keyframe_rate) <= 0:
            raise ValueError("sensor rates must be positive")
        if self.radar_phase_jitter < 0 or self.camera_offset < 0:
            raise ValueError("time offsets must be non-negative")


@dataclass(frozen=True, eq=False)
class CaptureRecord:
    """One sensor sweep: radar points are (N, 5) columns x,y,z,vx,vy in the
    capture ego frame; LiDAR points are (N, 3); camera triggers carry None."""

    sensor: Sensor
    timestamp: int
    ego_pose: Pose
    points: np.ndarray | None

    def __post_init__(self):
        if self.sensor is Sensor.CAM_FRONT_TRIGGER:
            if self.points is not None:
                raise ValueError("camera trigger records carry no points")
        else:
            width = 5 if self.sensor is Sensor.RADAR else 3
            if self.points is None or self.points.ndim != 2 or self.points.shape[1] != width:
                raise ValueError(f"{self.sensor.value} payload must be (N, {width})")


def _event_times(rate: float, duration: int, offset: int = 0) -> list[int]:
    period = 1e6 / rate
    times = []
    k = 0
    while True:
        t = int(round(k * period)) + offset
        if t > duration:
            break
        times.append(t)
        k += 1
    return times


def schedule_captures(
    scenario: Scenario, config: SensorConfig, rng_seed: int | None = None
) -> list[tuple[Sensor, int]]:
    """All (sensor, timestamp) capture events over the scenario.

    LiDAR and camera triggers are exactly periodic; radar gets a per-event
    uniform phase jitter from the seeded generator.
    """
    seed = scenario.seed if rng_seed is None else rng_seed
    events = [(Sensor.LIDAR, t) for t in _event_times(config.lidar_rate, scenario.duration)]
    events += [
        (Sensor.CAM_FRONT_TRIGGER, t)
        for t in _event_times(config.keyframe_rate, scenario.duration, config.camera_offset)
    ]
    rng = np.random.default_rng(np.random.SeedSequence([seed, DOMAIN_SCHEDULE]))
    for base in _event_times(config.radar_rate, scenario.duration):
        jitter = int(rng.integers(-config.radar_phase_jitter, config.radar_phase_jitter + 1))
        t = base + jitter
        if 0 <= t <= scenario.duration:
            events.append((Sensor.RADAR, t))
    events.sort(key=lambda e: (e[1], e[0].value))
    return events


def _perimeter_points(u: np.ndarray, length: float, width: float) -> np.ndarray:
    """Map arc fractions in [0,1) onto the rectangle perimeter (body frame xy)."""
    perimeter = 2.0 * (length + width)
    s = u * perimeter
    x = np.empty_like(s)
    y = np.empty_like(s)
    hl, hw = 0.5 * length, 0.5 * width
    side = s < length  # front edge, y = -hw
    x[side] = s[side] - hl
    y[side] = -hw
    m = (s >= length) & (s < length + width)  # right edge, x = +hl
    x[m] = hl
    y[m] = s[m] - length - hw
    m = (s >= length + width) & (s < 2 * length + width)  # back edge, y = +hw
    x[m] = hl - (s[m] - length - width)
    y[m] = hw
    m = s >= 2 * length + width  # left edge, x = -hl
    x[m] = -hl
    y[m] = hw - (s[m] - 2 * length - width)
    return np.column_stack([x, y])


def _agent_rng(seed: int, domain: int, agent_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, domain, agent_id]))


def _clutter_global(seed: int, domain: int, count: int, bounds: float) -> np.ndarray:
    """World-anchored clutter returns, fixed per scenario."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, domain]))
    xy = rng.uniform(-bounds, bounds, size=(count, 2))
    return np.column_stack([xy, np.zeros(count)])


def capture_radar(scenario: Scenario, t: int, config: SensorConfig) -> CaptureRecord:
    """Radar sweep at t: per-agent perimeter returns with compensated planar
    velocity, plus zero-velocity clutter. Points are in the capture ego
    frame with z = 0 (sensor plane)."""
    ego = ego_pose_at(scenario.ego, t)
    inv = ego.inverse()
    rows = []
    for agent in scenario.agents:
        state = agent_state_at(agent, t, scenario.duration)
        n = config.radar_points_per_agent
        rng = _agent_rng(scenario.seed, DOMAIN_RADAR_AGENT, agent.id)
        u = rng.random(n)
        eps = rng.standard_normal((n, 2)) * config.position_noise_sigma
        eta = rng.uniform(-1.0, 1.0, size=(n, 2)) * config.radar_velocity_noise_bound
        body = _perimeter_points(u, state.dims[0], state.dims[1])
        c, s = np.cos(state.yaw), np.sin(state.yaw)
        gx = state.center[0] + c * body[:, 0] - s * body[:, 1] + eps[:, 0]
        gy = state.center[1] + s * body[:, 0] + c * body[:, 1] + eps[:, 1]
        local = inv.apply(np.column_stack([gx, gy, np.zeros(n)]))
        v_local = inv.rotation.rotate(np.array([state.velocity[0], state.velocity[1], 0.0]))[:2]
        rows.append(np.column_stack([local, np.tile(v_local, (n, 1)) + eta]))
    clutter = _clutter_global(
        scenario.seed, DOMAIN_RADAR_CLUTTER, config.clutter_points_per_sweep, scenario.bounds
    )
    if len(clutter):
        local = inv.apply(clutter)
        rows.append(np.column_stack([local, np.zeros((len(clutter), 2))]))
    points = np.concatenate(rows, axis=0) if rows else np.zeros((0, 5))
    return CaptureRecord(Sensor.RADAR, t, ego, points)


def capture_lidar(scenario: Scenario, t: int, config: SensorConfig) -> CaptureRecord:
    """LiDAR sweep at t: dense returns on agent walls and roof plane plus
    ground clutter; no velocity information."""
    ego = ego_pose_at(scenario.ego, t)
    inv = ego.inverse()
    rows = []
    for agent in scenario.agents:
        state = agent_state_at(agent, t, scenario.duration)
        n = config.lidar_points_per_agent
        length, width, height = state.dims
        rng = _agent_rng(scenario.seed, DOMAIN_LIDAR_AGENT, agent.id)
        u = rng.random(n)
        zfrac = rng.random(n)
        interior = rng.random((n, 2))
        eps = rng.standard_normal((n, 2)) * config.position_noise_sigma
        roof = rng.random(n) < LIDAR_ROOF_FRACTION
        body = _perimeter_points(u, length, width)
        z = zfrac * height
        body[roof, 0] = (interior[roof, 0] - 0.5) * length
        body[roof, 1] = (interior[roof, 1] - 0.5) * width
        z[roof] = height
        c, s = np.cos(state.yaw), np.sin(state.yaw)
        gx = state.center[0] + c * body[:, 0] - s * body[:, 1] + eps[:, 0]
        gy = state.center[1] + s * body[:, 0] + c * body[:, 1] + eps[:, 1]
        rows.append(inv.apply(np.column_stack([gx, gy, z])))
    clutter = _clutter_global(
        scenario.seed, DOMAIN_LIDAR_CLUTTER, config.clutter_points_per_sweep, scenario.bounds
    )
    if len(clutter):
        rows.append(inv.apply(clutter))
    points = np.concatenate(rows, axis=0) if rows else np.zeros((0, 3))
    return CaptureRecord(Sensor.LIDAR, t, ego, points)


def capture_trigger(scenario: Scenario, t: int) -> CaptureRecord:
    return CaptureRecord(Sensor.CAM_FRONT_TRIGGER, t, ego_pose_at(scenario.ego, t), None)


def capture_all(
    scenario: Scenario, config: SensorConfig, rng_seed: int | None = None
) -> list[CaptureRecord]:
    """Run the full schedule and capture every event, time-sorted."""
    records = []
    for sensor, t in schedule_captures(scenario, config, rng_seed):
        if sensor is Sensor.RADAR:
            records.append(capture_radar(scenario, t, config))
        elif sensor is Sensor.LIDAR:
            records.append(capture_lidar(scenario, t, config))
        else:
            records.append(capture_trigger(scenario, t))
    return records
