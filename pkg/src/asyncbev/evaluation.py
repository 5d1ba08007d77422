"""IoU metric and the latency-sweep experiment harness.

`run_sweep` rebuilds a dataset variant per (modality, latency,
compensation) rung, pushes each keyframe through the BEV pipeline against
ground truth, and assembles a table of mean IoU with degradation and
velocity-improvement columns. The camera pseudo-channel is computed once
per keyframe and shared across every rung.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bevgrid import BevGrid, GridSpec, ShapeError, flatten, predict_segmentation, rasterize_points
from .ingest import CaptureLog
from .sensors import Sensor
from .syncbuild import KEYFRAMES_DROPPED, LatencyConfig, build_variant
from .worldsim import camera_pseudo_occupancy, camera_rng, gt_bev_at

DEFAULT_LADDERS = {
    Sensor.RADAR: [0, 70_000, 140_000, 220_000, 290_000, 360_000, 570_000],
    Sensor.LIDAR: [0, 50_000, 150_000, 200_000, 300_000, 350_000, 550_000],
}

REPORT_HEADER = (
    "modality",
    "target_latency_us",
    "achieved_latency_us",
    "compensate",
    "mean_iou",
    "degradation",
    "improvement",
)


class DomainError(ValueError):
    """IoU inputs must be binary grids."""


def iou(pred: BevGrid, gt: BevGrid) -> float:
    """Cell-count intersection over union of two binary grids.

    Both grids empty is defined as 1.0 (vacuous agreement). False
    positives reduce the score.
    """
    if pred.spec != gt.spec:
        raise ShapeError("IoU inputs must share a grid spec")
    for grid in (pred, gt):
        values = grid.values
        if not np.isin(values, (0, 1)).all():
            raise DomainError("IoU inputs must be binary {0,1} grids")
    p = pred.values > 0
    g = gt.values > 0
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(p & g)) / union


@dataclass(frozen=True)
class IoUReport:
    per_frame: tuple[float, ...]

    def __post_init__(self):
        if any(v < 0.0 or v > 1.0 for v in self.per_frame):
            raise ValueError("IoU values must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_frame)) if self.per_frame else 1.0

    @property
    def frame_count(self) -> int:
        return len(self.per_frame)


@dataclass(frozen=True)
class SweepParams:
    grid: GridSpec = field(default_factory=GridSpec)
    camera_sigma_per_meter: float = 0.02
    radar_dilation_radius: int = 3
    lidar_dilation_radius: int = 2
    seed: int | None = None  # camera-channel seed; defaults to the scenario seed
    jobs: int = 1


@dataclass(frozen=True)
class SweepRow:
    modality: Sensor
    target_latency: int
    mean_achieved_latency: float
    compensate: bool
    mean_iou: float
    degradation: float | None  # sync mean - this mean
    improvement: float | None  # compensated mean - raw mean, same rung


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    frame_count: int

    def row(self, modality: Sensor, target_latency: int, compensate: bool) -> SweepRow:
        for r in self.rows:
            if (
                r.modality is modality
                and r.target_latency == target_latency
                and r.compensate is compensate
            ):
                return r
        raise KeyError((modality, target_latency, compensate))


def _rung_report(log, cfg, grids, params):
    radius = (
        params.radar_dilation_radius
        if cfg.modality is Sensor.RADAR
        else params.lidar_dilation_radius
    )
    variant = build_variant(log, cfg)
    ious = []
    achieved = []
    for frame in variant.frames:
        gt, cam = grids[frame.t_cam]
        point_bev = flatten(rasterize_points(frame.points[:, :3], params.grid))
        pred = predict_segmentation(point_bev, cam, radius)
        ious.append(iou(pred, gt))
        achieved.append(frame.achieved_latency)
    return IoUReport(tuple(ious)), float(np.mean(achieved)) if achieved else 0.0


def run_sweep(
    log: CaptureLog,
    ladders: dict[Sensor, list[int]] | None = None,
    params: SweepParams | None = None,
) -> SweepResult:
    """Evaluate every (modality, latency, compensation) rung of the ladders.

    Radar rungs run with compensation off and on; LiDAR has no velocity
    and runs raw only. Deterministic for a given log and seed.
    """
    ladders = DEFAULT_LADDERS if ladders is None else ladders
    params = params or SweepParams()
    scenario = log.scenario
    seed = scenario.seed if params.seed is None else params.seed

    keyframes = sorted(s.timestamp for s in log.samples)[KEYFRAMES_DROPPED:]
    grids = {}
    for t_cam in keyframes:
        gt = gt_bev_at(scenario, t_cam, params.grid)
        cam = camera_pseudo_occupancy(
            scenario, t_cam, params.grid, params.camera_sigma_per_meter, camera_rng(seed, t_cam)
        )
        grids[t_cam] = (gt, cam)

    configs = []
    for modality in (Sensor.RADAR, Sensor.LIDAR):
        for latency in ladders.get(modality, []):
            flags = (False, True) if modality is Sensor.RADAR else (False,)
            for compensate in flags:
                configs.append(LatencyConfig(latency, modality, compensate))

    def job(cfg):
        try:
            return _rung_report(log, cfg, grids, params)
        except Exception as exc:
            raise RuntimeError(
                f"sweep rung {cfg.modality.value}@{cfg.target_latency}us "
                f"compensate={cfg.compensate} failed: {exc}"
            ) from exc

    if params.jobs > 1:
        with ThreadPoolExecutor(max_workers=params.jobs) as pool:
            reports = list(pool.map(job, configs))
    else:
        reports = [job(cfg) for cfg in configs]

    means = {
        (cfg.modality, cfg.target_latency, cfg.compensate): report.mean
        for cfg, (report, _) in zip(configs, reports)
    }
    sync_mean = {}
    for modality in (Sensor.RADAR, Sensor.LIDAR):
        best_flag = modality is Sensor.RADAR  # paper's sync reference infers position
        sync_mean[modality] = means.get((modality, 0, best_flag), means.get((modality, 0, False)))

    rows = []
    for cfg, (report, mean_achieved) in zip(configs, reports):
        sync = sync_mean[cfg.modality]
        degradation = None if sync is None else sync - report.mean
        improvement = None
        if cfg.modality is Sensor.RADAR and cfg.compensate:
            raw = means.get((Sensor.RADAR, cfg.target_latency, False))
            if raw is not None:
                improvement = report.mean - raw
        rows.append(
            SweepRow(
                modality=cfg.modality,
                target_latency=cfg.target_latency,
                mean_achieved_latency=mean_achieved,
                compensate=cfg.compensate,
                mean_iou=report.mean,
                degradation=degradation,
                improvement=improvement,
            )
        )
    rows.sort(key=lambda r: (r.modality.value, r.target_latency, r.compensate))
    return SweepResult(rows=rows, frame_count=len(keyframes))


# ---------------------------------------------------------------- reports


def emit_report(result: SweepResult, path) -> None:
    """Write the sweep as CSV: fixed 6-decimal floats, rows sorted by
    (modality, latency, compensate); blank cells where a column does not
    apply."""
    rows = sorted(result.rows, key=lambda r: (r.modality.value, r.target_latency, r.compensate))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.modality.value,
                    r.target_latency,
                    f"{r.mean_achieved_latency:.6f}",
                    "true" if r.compensate else "false",
                    f"{r.mean_iou:.6f}",
                    "" if r.degradation is None else f"{r.degradation:.6f}",
                    "" if r.improvement is None else f"{r.improvement:.6f}",
                ]
            )


def parse_report(path) -> list[dict]:
    """Read an emitted CSV back into typed row dicts."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            rows.append(
                {
                    "modality": raw["modality"],
                    "target_latency_us": int(raw["target_latency_us"]),
                    "achieved_latency_us": float(raw["achieved_latency_us"]),
                    "compensate": raw["compensate"] == "true",
                    "mean_iou": float(raw["mean_iou"]),
                    "degradation": float(raw["degradation"]) if raw["degradation"] else None,
                    "improvement": float(raw["improvement"]) if raw["improvement"] else None,
                }
            )
        return rows


# ---------------------------------------------------------------- rendering

BG_COLOR = (15, 15, 15)
GT_ONLY_COLOR = (0, 160, 70)
PRED_ONLY_COLOR = (200, 60, 50)
OVERLAP_COLOR = (235, 220, 80)
OUTLINE_COLOR = (240, 240, 240)


def _outline_cells(rects: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Boolean mask of cells crossed by rectangle edges."""
    mask = np.zeros((spec.cells_x, spec.cells_y), dtype=bool)
    step = spec.cell_size / 3.0
    for cx, cy, yaw, length, width in np.asarray(rects, dtype=float).reshape(-1, 5):
        perimeter = 2.0 * (length + width)
        n = max(int(np.ceil(perimeter / step)), 8)
        s = np.linspace(0.0, perimeter, n, endpoint=False)
        hl, hw = 0.5 * length, 0.5 * width
        x = np.empty_like(s)
        y = np.empty_like(s)
        m0 = s < length
        x[m0], y[m0] = s[m0] - hl, -hw
        m1 = (s >= length) & (s < length + width)
        x[m1], y[m1] = hl, s[m1] - length - hw
        m2 = (s >= length + width) & (s < 2 * length + width)
        x[m2], y[m2] = hl - (s[m2] - length - width), hw
        m3 = s >= 2 * length + width
        x[m3], y[m3] = -hl, hw - (s[m3] - 2 * length - width)
        c, sn = np.cos(yaw), np.sin(yaw)
        gx = cx + c * x - sn * y
        gy = cy + sn * x + c * y
        ix = np.floor((gx - spec.x_min) / spec.cell_size).astype(int)
        iy = np.floor((gy - spec.y_min) / spec.cell_size).astype(int)
        ok = (ix >= 0) & (ix < spec.cells_x) & (iy >= 0) & (iy < spec.cells_y)
        mask[ix[ok], iy[ok]] = True
    return mask


def render_bev(pred: BevGrid, gt: BevGrid, agents: np.ndarray, path) -> None:
    """Write a P6 PPM comparing prediction and ground truth.

    Ground-truth-only, prediction-only and overlap cells get distinct
    colors; agent footprint outlines are overlaid on top. Deterministic
    bytes for fixed inputs. Row 0 is max y, columns run along x.
    """
    if pred.spec != gt.spec:
        raise ShapeError("render inputs must share a grid spec")
    spec = pred.spec
    rgb = np.empty((spec.cells_x, spec.cells_y, 3), dtype=np.uint8)
    rgb[:] = BG_COLOR
    p = pred.values > 0
    g = gt.values > 0
    rgb[g & ~p] = GT_ONLY_COLOR
    rgb[p & ~g] = PRED_ONLY_COLOR
    rgb[p & g] = OVERLAP_COLOR
    rgb[_outline_cells(agents, spec)] = OUTLINE_COLOR
    image = rgb.transpose(1, 0, 2)[::-1]  # rows top-down in y
    header = f"P6\n{spec.cells_x} {spec.cells_y}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(image.tobytes())
