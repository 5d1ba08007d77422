"""Rigid transforms between sensor, ego, and global coordinate frames.

Timestamps are plain integers (microseconds since scenario start) so
duration arithmetic stays exact; conversion to seconds happens only at
the velocity-extrapolation boundary (`to_seconds`).

Rotations are unit quaternions in (w, x, y, z) order, renormalized after
every composition to avoid drift over long compose chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MICROS_PER_SECOND = 1_000_000


def to_seconds(micros: int) -> float:
    """Convert a microsecond duration to float seconds."""
    return micros / MICROS_PER_SECOND


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_yaw(cls, yaw: float) -> "Rotation":
        """Rotation by `yaw` radians about the +z axis."""
        half = 0.5 * yaw
        return cls(math.cos(half), 0.0, 0.0, math.sin(half))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        axis = axis / n
        half = 0.5 * angle
        s = math.sin(half)
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_wxyz(cls, wxyz) -> "Rotation":
        w, x, y, z = (float(v) for v in wxyz)
        return cls(w, x, y, z).normalized()

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Rotation":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero quaternion")
        return Rotation(self.w / n, self.x / n, self.y / n, self.z / n)

    def compose(self, other: "Rotation") -> "Rotation":
        """Hamilton product self * other, renormalized."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ).normalized()

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate one (3,) vector or an (N, 3) stack."""
        vectors = np.asarray(vectors, dtype=float)
        return vectors @ self.as_matrix().T

    def yaw(self) -> float:
        """Heading about +z (exact for yaw-only rotations)."""
        return math.atan2(
            2 * (self.w * self.z + self.x * self.y),
            1 - 2 * (self.y * self.y + self.z * self.z),
        )

    def wxyz(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def approx_equal(self, other: "Rotation", tol: float = 1e-12) -> bool:
        # q and -q represent the same rotation
        d = abs(self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z)
        return abs(d - 1.0) <= tol


def slerp(a: Rotation, b: Rotation, fraction: float) -> Rotation:
    """Spherical interpolation from `a` (fraction 0) to `b` (fraction 1)."""
    if fraction == 0.0:
        return a
    if fraction == 1.0:
        return b
    dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
    bw, bx, by, bz = b.w, b.x, b.y, b.z
    if dot < 0.0:  # take the short arc
        dot, bw, bx, by, bz = -dot, -bw, -bx, -by, -bz
    dot = min(dot, 1.0)
    theta = math.acos(dot)
    if theta < 1e-12:
        return Rotation(
            a.w + fraction * (bw - a.w),
            a.x + fraction * (bx - a.x),
            a.y + fraction * (by - a.y),
            a.z + fraction * (bz - a.z),
        ).normalized()
    s = math.sin(theta)
    ka = math.sin((1.0 - fraction) * theta) / s
    kb = math.sin(fraction * theta) / s
    return Rotation(
        ka * a.w + kb * bw, ka * a.x + kb * bx, ka * a.y + kb * by, ka * a.z + kb * bz
    ).normalized()


@dataclass(frozen=True, eq=False)
class Pose:
    """SE(3) rigid transform: p_out = R @ p_in + t."""

    rotation: Rotation
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float = 0.0) -> "Pose":
        return cls(Rotation.identity(), np.array([x, y, z], dtype=float))

    @classmethod
    def from_yaw_xy(cls, yaw: float, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "Pose":
        return cls(Rotation.from_yaw(yaw), np.array([x, y, z], dtype=float))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return Pose(
            self.rotation.compose(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "Pose":
        rot_inv = self.rotation.inverse()
        return Pose(rot_inv, -rot_inv.rotate(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map one (3,) point or an (N, 3) stack into the target frame."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.as_matrix().T + self.translation

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return self.rotation.approx_equal(other.rotation, tol) and bool(
            np.all(np.abs(self.translation - other.translation) <= tol)
        )


def relative_pose(src: Pose, dst: Pose) -> Pose:
    """Map from src-frame coordinates to dst-frame coordinates.

    Both poses are frame-to-global; the chain is src -> global -> dst.
    """
    return dst.inverse().compose(src)


def retarget_points(points: np.ndarray, src_ego: Pose, dst_ego: Pose) -> np.ndarray:
    """Re-express points captured in the src ego frame in the dst ego frame.

    `src_ego` and `dst_ego` are ego-to-global poses at the capture and
    reference times. Point count and order are preserved.
    """
    return relative_pose(src_ego, dst_ego).apply(points)


def retarget_vectors(vectors: np.ndarray, src_ego: Pose, dst_ego: Pose) -> np.ndarray:
    """Rotate direction quantities (e.g. velocities) between ego frames.

    Vectors transform without translation.
    """
    return relative_pose(src_ego, dst_ego).rotation.rotate(vectors)
