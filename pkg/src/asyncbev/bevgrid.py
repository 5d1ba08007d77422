"""Voxel and BEV occupancy grids.

The grid is centred on the reference ego frame: 200x200x8 voxels over a
100 m square and z in [-5, 3] by default (0.5 m cells). Flattening sums
voxel counts along z. The segmentation head is geometric: point cells
dilated by a disc, unioned with the camera channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class ShapeError(ValueError):
    """Grids with different specs were combined."""


@dataclass(frozen=True)
class GridSpec:
    cells_x: int = 200
    cells_y: int = 200
    cells_z: int = 8
    extent: float = 100.0
    z_min: float = -5.0
    z_max: float = 3.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.cells_x <= 0 or self.cells_y <= 0 or self.cells_z <= 0:
            raise ValueError("cell counts must be positive")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if self.z_max <= self.z_min:
            raise ValueError("z_max must exceed z_min")

    @property
    def cell_size(self) -> float:
        return self.extent / self.cells_x

    @property
    def x_min(self) -> float:
        return self.origin[0] - 0.5 * self.extent

    @property
    def y_min(self) -> float:
        return self.origin[1] - 0.5 * self.extent

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) meshgrids of cell-centre coordinates, indexed [ix, iy]."""
        cs = self.cell_size
        xs = self.x_min + (np.arange(self.cells_x) + 0.5) * cs
        ys = self.y_min + (np.arange(self.cells_y) + 0.5) * cs
        return np.meshgrid(xs, ys, indexing="ij")


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    counts: np.ndarray
    spec: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        expected = (self.spec.cells_x, self.spec.cells_y, self.spec.cells_z)
        if self.counts.shape != expected:
            raise ShapeError(f"voxel grid shape {self.counts.shape} != spec {expected}")


@dataclass(frozen=True, eq=False)
class BevGrid:
    values: np.ndarray
    spec: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        expected = (self.spec.cells_x, self.spec.cells_y)
        if self.values.shape != expected:
            raise ShapeError(f"BEV grid shape {self.values.shape} != spec {expected}")


def _bin_indices(coords: np.ndarray, low: float, size: float, cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Floor binning; points exactly on the max edge belong to the last cell."""
    idx = np.floor((coords - low) / size).astype(np.int64)
    on_max_edge = coords == low + size * cells
    idx[on_max_edge] = cells - 1
    in_range = (idx >= 0) & (idx < cells)
    return idx, in_range


def rasterize_points(points: np.ndarray, spec: GridSpec) -> VoxelGrid:
    """Count points per voxel; out-of-extent points are ignored.

    `points` is (N, 3) (or wider; extra columns ignored) in the reference
    frame.
    """
    points = np.asarray(points, dtype=float)
    counts = np.zeros((spec.cells_x, spec.cells_y, spec.cells_z), dtype=np.int64)
    if points.size == 0:
        return VoxelGrid(counts, spec)
    cs = spec.cell_size
    zs = (spec.z_max - spec.z_min) / spec.cells_z
    ix, okx = _bin_indices(points[:, 0], spec.x_min, cs, spec.cells_x)
    iy, oky = _bin_indices(points[:, 1], spec.y_min, cs, spec.cells_y)
    iz, okz = _bin_indices(points[:, 2], spec.z_min, zs, spec.cells_z)
    ok = okx & oky & okz
    np.add.at(counts, (ix[ok], iy[ok], iz[ok]), 1)
    return VoxelGrid(counts, spec)


def flatten(v: VoxelGrid) -> BevGrid:
    """Sum voxel counts along z; total mass is preserved."""
    return BevGrid(v.counts.sum(axis=2), v.spec)


def rasterize_rectangles(rects: np.ndarray, spec: GridSpec) -> BevGrid:
    """Binary grid of cells whose centre lies inside some oriented rectangle.

    `rects` is (N, 5): centre x, centre y, yaw, length, width, all in the
    reference frame. Boundary is inclusive.
    """
    rects = np.asarray(rects, dtype=float).reshape(-1, 5)
    out = np.zeros((spec.cells_x, spec.cells_y), dtype=np.uint8)
    if len(rects) == 0:
        return BevGrid(out, spec)
    gx, gy = spec.cell_centers()
    for cx, cy, yaw, length, width in rects:
        # bounding box in cells, then exact body-frame test on centres
        reach = 0.5 * float(np.hypot(length, width)) + spec.cell_size
        ix0 = max(int((cx - reach - spec.x_min) / spec.cell_size), 0)
        ix1 = min(int((cx + reach - spec.x_min) / spec.cell_size) + 1, spec.cells_x)
        iy0 = max(int((cy - reach - spec.y_min) / spec.cell_size), 0)
        iy1 = min(int((cy + reach - spec.y_min) / spec.cell_size) + 1, spec.cells_y)
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        dx = gx[ix0:ix1, iy0:iy1] - cx
        dy = gy[ix0:ix1, iy0:iy1] - cy
        c, s = np.cos(yaw), np.sin(yaw)
        u = c * dx + s * dy
        w = -s * dx + c * dy
        inside = (np.abs(u) <= 0.5 * length) & (np.abs(w) <= 0.5 * width)
        out[ix0:ix1, iy0:iy1] |= inside.astype(np.uint8)
    return BevGrid(out, spec)


def disc_structure(radius: int) -> np.ndarray:
    """Boolean disc of cells with dx^2 + dy^2 <= radius^2."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r, indexing="ij")
    return dx * dx + dy * dy <= radius * radius


def dilate(binary: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return binary.astype(bool)
    return ndimage.binary_dilation(binary.astype(bool), structure=disc_structure(radius))


def predict_segmentation(point_bev: BevGrid, camera_bev: BevGrid, dilation_radius_cells: int = 3) -> BevGrid:
    """Fuse point and camera channels into a binary vehicle segmentation.

    Point-occupied cells are dilated by a disc and unioned with the camera
    channel's support. Idempotent on its own output with radius 0.
    """
    if point_bev.spec != camera_bev.spec:
        raise ShapeError("point and camera grids must share a spec")
    points = dilate(point_bev.values > 0, dilation_radius_cells)
    fused = points | (camera_bev.values > 0)
    return BevGrid(fused.astype(np.uint8), point_bev.spec)


def to_pgm(bev: BevGrid, path) -> None:
    """Write the grid as a binary PGM (debug aid); row 0 is max y."""
    values = np.asarray(bev.values, dtype=float)
    peak = values.max()
    scaled = (values * (255.0 / peak)).astype(np.uint8) if peak > 0 else values.astype(np.uint8)
    image = scaled.T[::-1]  # rows top-down in y, columns in x
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(image.tobytes())
