"""Command-line pipeline: simulate -> build -> sweep -> render.

Precedence for every setting is flag > config file > built-in default.
The config file is JSON; see the README for the key schema. Exit codes:
0 success, 1 validation or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bevgrid import GridSpec, flatten, predict_segmentation, rasterize_points
from .evaluation import SweepParams, emit_report, iou, render_bev, run_sweep
from .ingest import LogError, read_log, validate_log, write_log
from .plots import plot_sweep
from .sensors import Sensor, SensorConfig, capture_all
from .syncbuild import (
    ConfigError,
    LatencyConfig,
    build_variant,
    compensate_radar,
    read_variant,
    shift_by_velocity,
    write_variant,
)
from .worldsim import (
    RangeError,
    agent_rects_in_frame,
    agents_at,
    camera_pseudo_occupancy,
    camera_rng,
    gt_bev_at,
    make_scenario,
)

JOBS_ENV = "ASYNCBEV_JOBS"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _pick(flag_value, config: dict, key: str, default):
    """flag > config > default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _sensor_config(config: dict) -> SensorConfig:
    return SensorConfig(**config.get("sensors", {}))


def _grid_spec(config: dict) -> GridSpec:
    return GridSpec(**config.get("grid", {}))


def _sweep_params(args, config: dict) -> SweepParams:
    sweep_cfg = config.get("sweep", {})
    jobs = args.jobs
    if jobs is None:
        jobs = sweep_cfg.get("jobs")
    if jobs is None and os.environ.get(JOBS_ENV):
        jobs = int(os.environ[JOBS_ENV])
    return SweepParams(
        grid=_grid_spec(config),
        camera_sigma_per_meter=sweep_cfg.get("camera_sigma_per_meter", SweepParams.camera_sigma_per_meter),
        radar_dilation_radius=sweep_cfg.get("radar_dilation_radius", SweepParams.radar_dilation_radius),
        lidar_dilation_radius=sweep_cfg.get("lidar_dilation_radius", SweepParams.lidar_dilation_radius),
        seed=getattr(args, "seed", None),
        jobs=jobs or 1,
    )


def _ladders(config: dict) -> dict | None:
    sweep_cfg = config.get("sweep", {})
    if "radar_ladder_ms" not in sweep_cfg and "lidar_ladder_ms" not in sweep_cfg:
        return None
    from .evaluation import DEFAULT_LADDERS

    ladders = dict(DEFAULT_LADDERS)
    if "radar_ladder_ms" in sweep_cfg:
        ladders[Sensor.RADAR] = [int(v * 1000) for v in sweep_cfg["radar_ladder_ms"]]
    if "lidar_ladder_ms" in sweep_cfg:
        ladders[Sensor.LIDAR] = [int(v * 1000) for v in sweep_cfg["lidar_ladder_ms"]]
    return ladders


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    scenario = make_scenario(
        seed=_pick(args.seed, config, "seed", 7),
        duration_s=_pick(args.duration, config, "duration_s", 20.0),
        n_agents=_pick(args.agents, config, "agents", 12),
        bounds=_pick(args.bounds, config, "bounds", 200.0),
        ego_speed=config.get("ego_speed", 8.0),
        agent_speed_max=config.get("agent_speed_max", 15.0),
        yaw_rate_max=config.get("yaw_rate_max", 0.0),
        static_ego=config.get("static_ego", False),
    )
    sensor_config = _sensor_config(config)
    records = capture_all(scenario, sensor_config)
    log = write_log(records, scenario, args.out)
    violations = validate_log(log)
    for v in violations:
        print(f"warning: {v.message}", file=sys.stderr)
    print(
        f"wrote capture log to {args.out}: {len(log.samples)} keyframes, "
        f"{len(log.sample_data)} sweeps"
    )
    return 0


def cmd_build(args) -> int:
    config = _load_config(args.config)
    log = read_log(args.log)
    cfg = LatencyConfig(
        target_latency=int(round(args.latency_ms * 1000)),
        modality=Sensor[args.modality.upper()],
        compensate=args.compensate,
    )
    variant = build_variant(log, cfg)
    write_variant(variant, log, args.out)
    achieved = [f.achieved_latency for f in variant.frames]
    mean_achieved = float(np.mean(achieved)) if achieved else 0.0
    print(
        f"wrote variant to {args.out}: {len(variant.frames)} frames, "
        f"mean achieved latency {mean_achieved / 1000:.1f} ms"
    )
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    log = read_log(args.log)
    params = _sweep_params(args, config)
    result = run_sweep(log, _ladders(config), params)
    out = Path(args.out)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    emit_report(result, out)
    written = [out]
    if not args.no_figures:
        written += plot_sweep(result, out)
    for row in result.rows:
        comp = "comp" if row.compensate else "raw "
        print(
            f"{row.modality.value:5s} {row.target_latency // 1000:4d} ms {comp} "
            f"IoU {row.mean_iou:.4f}"
        )
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def cmd_render(args) -> int:
    config = _load_config(args.config)
    variant, log = read_variant(args.variant)
    if variant.config.modality is not Sensor.RADAR:
        print("render requires a radar variant (compensation needs velocity)", file=sys.stderr)
        return 1
    if not 0 <= args.frame < len(variant.frames):
        print(
            f"frame index {args.frame} out of range (variant has {len(variant.frames)} frames)",
            file=sys.stderr,
        )
        return 1
    frame = variant.frames[args.frame]
    params = _sweep_params(args, config)
    scenario = log.scenario

    if variant.config.compensate:
        comp_points = frame.points
        raw_points = shift_by_velocity(frame.points, -frame.achieved_latency)
    else:
        raw_points = frame.points
        comp_points = compensate_radar(frame.points, frame.source_timestamp, frame.t_cam)

    gt = gt_bev_at(scenario, frame.t_cam, params.grid)
    cam = camera_pseudo_occupancy(
        scenario,
        frame.t_cam,
        params.grid,
        params.camera_sigma_per_meter,
        camera_rng(scenario.seed, frame.t_cam),
    )
    rects = agent_rects_in_frame(agents_at(scenario, frame.t_cam), frame.ref_pose)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for name, points in (("raw", raw_points), ("compensated", comp_points)):
        bev = flatten(rasterize_points(points[:, :3], params.grid))
        pred = predict_segmentation(bev, cam, params.radar_dilation_radius)
        path = prefix.with_name(prefix.name + f"_{name}.ppm")
        render_bev(pred, gt, rects, path)
        outputs[name] = (path, iou(pred, gt))
    gt_path = prefix.with_name(prefix.name + "_groundtruth.ppm")
    render_bev(gt, gt, rects, gt_path)
    for name, (path, value) in outputs.items():
        print(f"{name}: IoU {value:.4f} -> {path}")
    print(f"groundtruth -> {gt_path}")
    return 0


def cmd_validate(args) -> int:
    log = read_log(args.log, validate=False)
    violations = validate_log(log)
    if not violations:
        print(f"{args.log}: valid ({len(log.samples)} keyframes, {len(log.sample_data)} sweeps)")
        return 0
    for v in violations:
        print(v.message, file=sys.stderr)
    return 1


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncbev",
        description="Asynchronous sensor-fusion BEV workbench: simulate capture "
        "logs, rebuild latency variants, and sweep segmentation IoU.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario and write its capture log")
    p.add_argument("--out", required=True, help="output log directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="scenario length in seconds")
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--bounds", type=float, default=None, help="square half-extent in meters")
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", help="build one latency variant from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--modality", choices=["radar", "lidar"], required=True)
    p.add_argument("--latency-ms", type=float, required=True)
    p.add_argument("--compensate", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("sweep", help="run the latency ladder and write report.csv + figures")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="CSV path; figures land beside it")
    p.add_argument("--jobs", type=int, default=None, help=f"worker threads (or ${JOBS_ENV})")
    p.add_argument("--seed", type=int, default=None, help="camera-channel seed override")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="render a keyframe's raw/compensated/gt PPM triplet")
    p.add_argument("--variant", required=True, help="variant directory (radar)")
    p.add_argument("--frame", type=int, required=True, help="keyframe index in the variant")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--jobs", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="list a log's invariant violations")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LogError, ConfigError, RangeError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
