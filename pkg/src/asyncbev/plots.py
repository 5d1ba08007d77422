"""Matplotlib figures for sweep reports, rendered to files next to the CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import SweepResult
from .sensors import Sensor


def _series(result: SweepResult, modality: Sensor, compensate: bool):
    rows = [
        r
        for r in result.rows
        if r.modality is modality and r.compensate is compensate
    ]
    rows.sort(key=lambda r: r.target_latency)
    return [r.target_latency / 1000.0 for r in rows], rows


def plot_sweep(result: SweepResult, csv_path) -> list[Path]:
    """Render IoU-vs-latency and velocity-improvement figures.

    Files land next to the CSV as <stem>_iou.png and <stem>_improvement.png;
    returns the written paths.
    """
    csv_path = Path(csv_path)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    styles = [
        (Sensor.RADAR, False, "C+R raw", "tab:red", "--"),
        (Sensor.RADAR, True, "C+R velocity-compensated", "tab:blue", "-"),
        (Sensor.LIDAR, False, "C+L", "tab:green", "-."),
    ]
    for modality, compensate, label, color, style in styles:
        xs, rows = _series(result, modality, compensate)
        if not rows:
            continue
        ax.plot(xs, [r.mean_iou for r in rows], style, color=color, marker="o", label=label)
    ax.set_xlabel("target latency [ms]")
    ax.set_ylabel("mean IoU")
    ax.set_title("BEV vehicle-segmentation IoU vs sensor latency")
    ax.grid(True, alpha=0.3)
    ax.legend()
    iou_path = csv_path.with_name(csv_path.stem + "_iou.png")
    fig.tight_layout()
    fig.savefig(iou_path, dpi=120)
    plt.close(fig)
    written.append(iou_path)

    xs, rows = _series(result, Sensor.RADAR, True)
    improvements = [(x, r.improvement) for x, r in zip(xs, rows) if r.improvement is not None]
    if improvements:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.bar(
            [x for x, _ in improvements],
            [v for _, v in improvements],
            width=25.0,
            color="tab:blue",
            alpha=0.8,
        )
        ax.set_xlabel("target latency [ms]")
        ax.set_ylabel("IoU improvement (compensated - raw)")
        ax.set_title("Velocity compensation recovery vs latency")
        ax.grid(True, axis="y", alpha=0.3)
        improvement_path = csv_path.with_name(csv_path.stem + "_improvement.png")
        fig.tight_layout()
        fig.savefig(improvement_path, dpi=120)
        plt.close(fig)
        written.append(improvement_path)
    return written
