"""Deterministic synthetic world: ego trajectory plus dynamic vehicle agents.

Everything is queryable at any timestamp and fully determined by the
scenario seed. Agents follow a constant-velocity model with optional
constant yaw rate; the default generator places lanes-parallel traffic
with zero yaw rate so velocity extrapolation is analytically exact.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .bevgrid import BevGrid, GridSpec, rasterize_rectangles
from .frames import Pose, Rotation, slerp

# rng domain codes, shared with sensors.py so streams never collide
DOMAIN_SCENARIO = 7
DOMAIN_CAMERA = 6


class RangeError(ValueError):
    """Timestamp outside the scenario or trajectory range."""


@dataclass(frozen=True, eq=False)
class AgentState:
    """One vehicle at an instant, in the global frame."""

    id: int
    center: np.ndarray  # (3,) meters
    yaw: float  # radians
    dims: tuple[float, float, float]  # length, width, height
    velocity: np.ndarray  # (2,) m/s planar
    yaw_rate: float = 0.0  # rad/s

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))
        if min(self.dims) <= 0:
            raise ValueError("agent dims must be positive")
        if np.linalg.norm(self.velocity) > 40.0:
            raise ValueError("agent speed exceeds 40 m/s")


@dataclass(frozen=True, eq=False)
class EgoTrajectory:
    """Time-ordered ego-to-global pose samples."""

    times: np.ndarray  # (K,) int64 microseconds, strictly increasing
    poses: list[Pose]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        object.__setattr__(self, "times", times)
        if len(times) != len(self.poses) or len(times) == 0:
            raise ValueError("trajectory needs matching, non-empty times and poses")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory timestamps must strictly increase")
        steps = np.diff(np.stack([p.translation for p in self.poses], axis=0), axis=0)
        if len(steps) and np.max(np.linalg.norm(steps, axis=1)) > 2.0:
            raise ValueError("consecutive ego waypoints displaced more than 2 m")


@dataclass(frozen=True, eq=False)
class Scenario:
    seed: int
    duration: int  # microseconds
    agents: list[AgentState]  # states at t=0
    ego: EgoTrajectory
    bounds: float  # square half-extent, meters

    def __post_init__(self):
        for agent in self.agents:
            if np.max(np.abs(agent.center[:2])) > self.bounds:
                raise ValueError(f"agent {agent.id} starts outside bounds")


def agent_state_at(agent: AgentState, t: int, duration: int | None = None) -> AgentState:
    """Propagate from t=0 by constant velocity and constant yaw rate.

    With yaw_rate = 0 this is exactly linear motion. With a yaw rate the
    velocity vector rotates at that rate (CTRV arc).
    """
    if t < 0 or (duration is not None and t > duration):
        raise RangeError(f"timestamp {t} outside scenario range")
    dt = t / 1e6
    omega = agent.yaw_rate
    v = agent.velocity
    if omega == 0.0:
        offset = v * dt
        new_v = v
    else:
        s, c = math.sin(omega * dt), math.cos(omega * dt)
        offset = np.array(
            [(s * v[0] - (1.0 - c) * v[1]) / omega, ((1.0 - c) * v[0] + s * v[1]) / omega]
        )
        new_v = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
    center = agent.center + np.array([offset[0], offset[1], 0.0])
    return replace(agent, center=center, yaw=agent.yaw + omega * dt, velocity=new_v)


def agents_at(scenario: Scenario, t: int) -> list[AgentState]:
    if t < 0 or t > scenario.duration:
        raise RangeError(f"timestamp {t} outside scenario range")
    return [agent_state_at(a, t) for a in scenario.agents]


def ego_pose_at(traj: EgoTrajectory, t: int) -> Pose:
    """Interpolated ego-to-global pose: lerp translation, slerp rotation."""
    times = traj.times
    if t < times[0] or t > times[-1]:
        raise RangeError(f"timestamp {t} outside trajectory range")
    i = bisect_right(times, t) - 1
    if times[i] == t:
        return traj.poses[i]
    a, b = traj.poses[i], traj.poses[i + 1]
    u = (t - times[i]) / (times[i + 1] - times[i])
    translation = a.translation + u * (b.translation - a.translation)
    return Pose(slerp(a.rotation, b.rotation, u), translation)


def agent_rects_in_frame(agents: list[AgentState], ref_pose: Pose) -> np.ndarray:
    """(N, 5) footprint rectangles (cx, cy, yaw, length, width) in the ref frame."""
    if not agents:
        return np.zeros((0, 5))
    inv = ref_pose.inverse()
    ego_yaw = ref_pose.rotation.yaw()
    centers = inv.apply(np.stack([a.center for a in agents]))
    return np.column_stack(
        [
            centers[:, 0],
            centers[:, 1],
            [a.yaw - ego_yaw for a in agents],
            [a.dims[0] for a in agents],
            [a.dims[1] for a in agents],
        ]
    )


def gt_bev_at(scenario: Scenario, t: int, spec: GridSpec) -> BevGrid:
    """Binary ground truth in the ego frame at t.

    A cell is 1 iff its centre lies inside some agent's oriented footprint
    rectangle; no occlusion reasoning.
    """
    states = agents_at(scenario, t)
    ref = ego_pose_at(scenario.ego, t)
    return rasterize_rectangles(agent_rects_in_frame(states, ref), spec)


def ray_displaced_rects(rects: np.ndarray, sigma_per_meter: float, rng: np.random.Generator) -> np.ndarray:
    """Displace rectangle centres along the ray from the frame origin.

    One draw per rectangle, std proportional to range. Rectangles at the
    origin are left in place.
    """
    rects = np.asarray(rects, dtype=float).reshape(-1, 5).copy()
    if len(rects) == 0:
        return rects
    ranges = np.hypot(rects[:, 0], rects[:, 1])
    draws = rng.normal(0.0, 1.0, size=len(rects)) * sigma_per_meter * ranges
    safe = np.where(ranges > 0, ranges, 1.0)
    rects[:, 0] += draws * rects[:, 0] / safe
    rects[:, 1] += draws * rects[:, 1] / safe
    return rects


def camera_pseudo_occupancy(
    scenario: Scenario,
    t: int,
    spec: GridSpec,
    depth_noise_sigma_per_meter: float,
    rng: np.random.Generator,
) -> BevGrid:
    """Camera-channel stand-in: range-noised ground-truth footprints.

    Footprints are displaced along the ego-to-agent ray by a per-agent
    Gaussian draw with std sigma_per_meter * range, then rasterized.
    Deterministic for a given generator state.
    """
    states = agents_at(scenario, t)
    ref = ego_pose_at(scenario.ego, t)
    rects = agent_rects_in_frame(states, ref)
    return rasterize_rectangles(ray_displaced_rects(rects, depth_noise_sigma_per_meter, rng), spec)


def camera_rng(scenario_seed: int, t: int) -> np.random.Generator:
    """Per-keyframe camera-channel generator, shared across sweep rungs."""
    return np.random.default_rng(np.random.SeedSequence([scenario_seed, DOMAIN_CAMERA, t]))


def make_ego_trajectory(
    duration: int,
    speed: float = 8.0,
    weave_amplitude: float = 0.10,
    weave_period_s: float = 8.0,
    step: int = 50_000,
) -> EgoTrajectory:
    """Constant-speed path with a gentle sinusoidal heading weave."""
    times = np.arange(0, duration + step, step, dtype=np.int64)
    ts = times / 1e6
    if weave_period_s <= 0:
        raise ValueError("weave period must be positive")
    yaws = weave_amplitude * np.sin(2 * math.pi * ts / weave_period_s)
    xs = np.concatenate([[0.0], np.cumsum(0.5 * (np.cos(yaws[1:]) + np.cos(yaws[:-1])) * np.diff(ts) * speed)])
    ys = np.concatenate([[0.0], np.cumsum(0.5 * (np.sin(yaws[1:]) + np.sin(yaws[:-1])) * np.diff(ts) * speed)])
    poses = [Pose(Rotation.from_yaw(y), np.array([x, yv, 0.0])) for x, yv, y in zip(xs, ys, yaws)]
    return EgoTrajectory(times, poses)


def make_scenario(
    seed: int,
    duration_s: float = 20.0,
    n_agents: int = 12,
    bounds: float = 200.0,
    ego_speed: float = 8.0,
    agent_speed_max: float = 15.0,
    yaw_rate_max: float = 0.0,
    static_ego: bool = False,
) -> Scenario:
    """Seeded traffic scene: agents on lanes parallel to the ego path.

    Speeds are uniform in [0, agent_speed_max]; oncoming lanes (negative
    lateral offset) drive the opposite way.
    """
    duration = int(round(duration_s * 1e6))
    rng = np.random.default_rng(np.random.SeedSequence([seed, DOMAIN_SCENARIO]))
    if static_ego:
        ego = make_ego_trajectory(duration, speed=0.0, weave_amplitude=0.0)
    else:
        ego = make_ego_trajectory(duration, speed=ego_speed)
    path_length = (0.0 if static_ego else ego_speed) * duration_s
    lane_offsets = np.array([3.5, 7.0, -3.5, -7.0])
    agents = []
    x_lo = max(-30.0, -bounds + 10.0)
    x_hi = min(path_length + 30.0, bounds - 10.0)
    for i in range(n_agents):
        lane = lane_offsets[i % len(lane_offsets)]
        x0 = rng.uniform(x_lo, x_hi)
        heading = 0.0 if lane > 0 else math.pi
        speed = rng.uniform(0.0, agent_speed_max)
        yaw_rate = rng.uniform(-yaw_rate_max, yaw_rate_max) if yaw_rate_max > 0 else 0.0
        length = rng.uniform(4.2, 5.0)
        width = rng.uniform(1.8, 2.1)
        height = rng.uniform(1.4, 1.8)
        velocity = speed * np.array([math.cos(heading), math.sin(heading)])
        agents.append(
            AgentState(
                id=i,
                center=np.array([x0, lane, 0.0]),
                yaw=heading,
                dims=(length, width, height),
                velocity=velocity,
                yaw_rate=yaw_rate,
            )
        )
    return Scenario(seed=seed, duration=duration, agents=agents, ego=ego, bounds=bounds)


# ------------------------------------------------------------ serialization


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "duration_us": scenario.duration,
        "bounds": scenario.bounds,
        "agents": [
            {
                "id": a.id,
                "center": [float(v) for v in a.center],
                "yaw": a.yaw,
                "dims": list(a.dims),
                "velocity": [float(v) for v in a.velocity],
                "yaw_rate": a.yaw_rate,
            }
            for a in scenario.agents
        ],
        "ego": {
            "times_us": [int(t) for t in scenario.ego.times],
            "poses": [
                {"rotation": list(p.rotation.wxyz()), "translation": [float(v) for v in p.translation]}
                for p in scenario.ego.poses
            ],
        },
    }


def scenario_from_dict(data: dict) -> Scenario:
    agents = [
        AgentState(
            id=a["id"],
            center=np.array(a["center"]),
            yaw=a["yaw"],
            dims=tuple(a["dims"]),
            velocity=np.array(a["velocity"]),
            yaw_rate=a["yaw_rate"],
        )
        for a in data["agents"]
    ]
    poses = [
        Pose(Rotation(*p["rotation"]), np.array(p["translation"])) for p in data["ego"]["poses"]
    ]
    ego = EgoTrajectory(np.array(data["ego"]["times_us"], dtype=np.int64), poses)
    return Scenario(
        seed=data["seed"],
        duration=data["duration_us"],
        agents=agents,
        ego=ego,
        bounds=data["bounds"],
    )
