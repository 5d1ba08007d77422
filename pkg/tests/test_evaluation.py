import numpy as np
import pytest

from asyncbev.bevgrid import BevGrid, GridSpec, ShapeError
from asyncbev.evaluation import (
    DomainError,
    IoUReport,
    SweepParams,
    emit_report,
    iou,
    parse_report,
    render_bev,
    run_sweep,
)
from asyncbev.ingest import build_log
from asyncbev.plots import plot_sweep
from asyncbev.sensors import Sensor

SMALL = GridSpec(cells_x=16, cells_y=16, cells_z=2, extent=8.0, z_min=0.0, z_max=2.0)


def grid(cells):
    values = np.zeros((16, 16), dtype=np.uint8)
    for ix, iy in cells:
        values[ix, iy] = 1
    return BevGrid(values, SMALL)


# ---------------------------------------------------------------- iou


def test_iou_identity():
    g = grid([(1, 1), (2, 2), (3, 3)])
    assert iou(g, g) == 1.0


def test_iou_disjoint():
    assert iou(grid([(0, 0)]), grid([(5, 5)])) == 0.0


def test_iou_half_overlap():
    gt = grid([(i, 0) for i in range(8)])
    pred_half = grid([(i, 0) for i in range(4)])
    assert iou(pred_half, gt) == 0.5
    # equal-area disjoint extension also gives exactly 0.5
    pred_extended = grid([(i, 0) for i in range(8)] + [(i, 5) for i in range(8)])
    assert iou(pred_extended, gt) == 0.5


def test_iou_both_empty_is_one():
    assert iou(grid([]), grid([])) == 1.0


def test_iou_symmetric():
    a = grid([(1, 1), (2, 3), (4, 4)])
    b = grid([(2, 3), (4, 4), (7, 7), (8, 8)])
    assert iou(a, b) == iou(b, a)


def test_iou_invariant_under_common_flip():
    rng = np.random.default_rng(0)
    a_vals = (rng.uniform(size=(16, 16)) > 0.7).astype(np.uint8)
    b_vals = (rng.uniform(size=(16, 16)) > 0.7).astype(np.uint8)
    a, b = BevGrid(a_vals, SMALL), BevGrid(b_vals, SMALL)
    flipped = iou(BevGrid(a_vals[::-1].copy(), SMALL), BevGrid(b_vals[::-1].copy(), SMALL))
    assert iou(a, b) == flipped


def test_iou_false_positive_strictly_decreases():
    gt = grid([(3, 3), (3, 4)])
    pred = grid([(3, 3), (3, 4)])
    worse = grid([(3, 3), (3, 4), (10, 10)])
    assert iou(worse, gt) < iou(pred, gt)


def test_iou_rejects_non_binary():
    values = np.zeros((16, 16), dtype=np.int64)
    values[0, 0] = 2
    with pytest.raises(DomainError):
        iou(BevGrid(values, SMALL), grid([]))


def test_iou_rejects_spec_mismatch():
    other = GridSpec(cells_x=16, cells_y=16, cells_z=2, extent=4.0, z_min=0.0, z_max=2.0)
    with pytest.raises(ShapeError):
        iou(grid([]), BevGrid(np.zeros((16, 16), dtype=np.uint8), other))


def test_iou_report_mean():
    report = IoUReport((0.5, 0.7, 0.9))
    assert abs(report.mean - 0.7) < 1e-12
    assert report.frame_count == 3
    with pytest.raises(ValueError):
        IoUReport((1.2,))


# ---------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def small_sweep(small_scenario, small_records):
    log = build_log(small_records, small_scenario)
    ladders = {Sensor.RADAR: [0, 140_000], Sensor.LIDAR: [0, 150_000]}
    return run_sweep(log, ladders, SweepParams())


def test_sweep_row_count(small_sweep):
    assert len(small_sweep.rows) == 2 * 2 + 2  # radar rungs x {raw, comp} + lidar


def test_sweep_rows_sorted(small_sweep):
    keys = [(r.modality.value, r.target_latency, r.compensate) for r in small_sweep.rows]
    assert keys == sorted(keys)


def test_sweep_degradation_definition(small_sweep):
    sync = small_sweep.row(Sensor.RADAR, 0, True).mean_iou
    for latency in (0, 140_000):
        for compensate in (False, True):
            row = small_sweep.row(Sensor.RADAR, latency, compensate)
            assert row.degradation == pytest.approx(sync - row.mean_iou, abs=1e-15)


def test_sweep_improvement_definition(small_sweep):
    raw = small_sweep.row(Sensor.RADAR, 140_000, False).mean_iou
    comp = small_sweep.row(Sensor.RADAR, 140_000, True)
    assert comp.improvement == pytest.approx(comp.mean_iou - raw, abs=1e-15)
    assert small_sweep.row(Sensor.RADAR, 140_000, False).improvement is None
    assert small_sweep.row(Sensor.LIDAR, 150_000, False).improvement is None


def test_sweep_deterministic(small_scenario, small_records):
    log = build_log(small_records, small_scenario)
    ladders = {Sensor.RADAR: [0], Sensor.LIDAR: []}
    a = run_sweep(log, ladders, SweepParams())
    b = run_sweep(log, ladders, SweepParams())
    assert a == b


def test_sweep_jobs_match_serial(small_scenario, small_records):
    log = build_log(small_records, small_scenario)
    ladders = {Sensor.RADAR: [0, 140_000], Sensor.LIDAR: [0]}
    serial = run_sweep(log, ladders, SweepParams(jobs=1))
    threaded = run_sweep(log, ladders, SweepParams(jobs=4))
    assert serial == threaded


# ---------------------------------------------------------------- report CSV


def test_emit_report_empty(tmp_path):
    from asyncbev.evaluation import SweepResult

    path = tmp_path / "report.csv"
    emit_report(SweepResult(rows=[], frame_count=0), path)
    lines = path.read_text().strip().splitlines()
    assert lines == ["modality,target_latency_us,achieved_latency_us,compensate,mean_iou,degradation,improvement"]


def test_emit_report_round_trip(small_sweep, tmp_path):
    path = tmp_path / "report.csv"
    emit_report(small_sweep, path)
    rows = parse_report(path)
    assert len(rows) == len(small_sweep.rows)
    for parsed, row in zip(rows, small_sweep.rows):
        assert parsed["modality"] == row.modality.value
        assert parsed["target_latency_us"] == row.target_latency
        assert parsed["compensate"] == row.compensate
        assert parsed["mean_iou"] == pytest.approx(row.mean_iou, abs=5e-7)


def test_emit_report_full_ladder_rows(small_scenario, small_records, tmp_path):
    log = build_log(small_records, small_scenario)
    result = run_sweep(log, params=SweepParams())
    path = tmp_path / "report.csv"
    emit_report(result, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + 7 * 2 + 7  # header + radar x {raw, comp} + lidar


# ---------------------------------------------------------------- render


def test_render_identity_only_overlap_and_outline(tmp_path):
    g = grid([(8, 8), (8, 9)])
    path = tmp_path / "frame.ppm"
    render_bev(g, g, np.zeros((0, 5)), path)
    data = path.read_bytes()
    header = b"P6\n16 16\n255\n"
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(16, 16, 3)
    colors = {tuple(c) for c in pixels.reshape(-1, 3)}
    assert colors == {(15, 15, 15), (235, 220, 80)}  # background + overlap only


def test_render_empty_grids_background_and_outline(tmp_path):
    empty = grid([])
    path = tmp_path / "frame.ppm"
    render_bev(empty, empty, np.array([[0.0, 0.0, 0.0, 2.0, 1.0]]), path)
    data = path.read_bytes()
    pixels = np.frombuffer(data[len(b"P6\n16 16\n255\n"):], dtype=np.uint8).reshape(16, 16, 3)
    colors = {tuple(c) for c in pixels.reshape(-1, 3)}
    assert colors == {(15, 15, 15), (240, 240, 240)}


def test_render_golden_fixture(tmp_path):
    # three constructed cells: one gt-only, one pred-only, one overlap.
    # Expected bytes built by hand from the documented palette and the
    # row-0-is-max-y orientation.
    spec = GridSpec(cells_x=2, cells_y=2, cells_z=1, extent=2.0, z_min=0.0, z_max=1.0)
    gt = BevGrid(np.array([[1, 0], [0, 1]], dtype=np.uint8), spec)
    pred = BevGrid(np.array([[0, 1], [0, 1]], dtype=np.uint8), spec)
    path = tmp_path / "golden.ppm"
    render_bev(pred, gt, np.zeros((0, 5)), path)
    # row 0 is y=1: cells (0,1) pred-only, (1,1) overlap
    # row 1 is y=0: cells (0,0) gt-only, (1,0) background
    expected = (
        b"P6\n2 2\n255\n"
        + bytes([200, 60, 50])  # (x=0, y=1): pred-only red
        + bytes([235, 220, 80])  # (x=1, y=1): overlap yellow
        + bytes([0, 160, 70])  # (x=0, y=0): gt-only green
        + bytes([15, 15, 15])  # (x=1, y=0): background
    )
    assert path.read_bytes() == expected


def test_render_deterministic_bytes(tmp_path):
    g = grid([(4, 4)])
    p = grid([(4, 5)])
    agents = np.array([[0.0, 0.0, 0.3, 3.0, 1.5]])
    render_bev(p, g, agents, tmp_path / "a.ppm")
    render_bev(p, g, agents, tmp_path / "b.ppm")
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_render_spec_mismatch(tmp_path):
    other = GridSpec(cells_x=16, cells_y=16, cells_z=2, extent=4.0, z_min=0.0, z_max=2.0)
    with pytest.raises(ShapeError):
        render_bev(grid([]), BevGrid(np.zeros((16, 16), dtype=np.uint8), other), np.zeros((0, 5)), tmp_path / "x.ppm")


# ---------------------------------------------------------------- figures


def test_plot_sweep_writes_figures(small_sweep, tmp_path):
    csv_path = tmp_path / "report.csv"
    emit_report(small_sweep, csv_path)
    written = plot_sweep(small_sweep, csv_path)
    assert [p.name for p in written] == ["report_iou.png", "report_improvement.png"]
    for p in written:
        assert p.exists() and p.stat().st_size > 0
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
