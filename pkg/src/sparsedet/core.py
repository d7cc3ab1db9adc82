"""Geometric value types and frame conventions.

Ego frame: x forward, y left, z up, origin on the ground below the sensor.
Yaw is measured about the ground normal, counter-clockwise from +x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    wrapped -= math.pi
    # fmod rounding can land exactly on +pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def wrap_half_turn(theta: float) -> float:
    """Reduce an axis angle modulo pi to [-pi/2, pi/2)."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    r = math.fmod(theta + math.pi / 2.0, math.pi)
    if r < 0.0:
        r += math.pi
    r -= math.pi / 2.0
    if r >= math.pi / 2.0:
        r -= math.pi
    return r


def signed_heading_difference(a: float, b: float) -> float:
    """Signed rotation a - b modulo pi, in [-pi/2, pi/2)."""
    return wrap_half_turn(a - b)


def heading_difference(a: float, b: float) -> float:
    """Smallest rotation between two box headings, treating yaw and yaw + pi as equal.

    Result lies in [0, pi/2].
    """
    return abs(signed_heading_difference(a, b))


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    ring: Optional[int] = None


class PointCloud:
    """A lidar frame stored column-wise.

    ``xyz`` is an (N, 3) float array in the ego frame; ``ring`` is an (N,)
    integer array of plane indices or ``None`` when the source has no rings.
    """

    __slots__ = ("xyz", "ring", "frame_id", "timestamp")

    def __init__(self, xyz, ring=None, frame_id: str = "ego", timestamp: float = 0.0):
        xyz = np.asarray(xyz, dtype=np.float64)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (N, 3), got {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        if ring is not None:
            ring = np.asarray(ring, dtype=np.int64).reshape(-1)
            if ring.shape[0] != xyz.shape[0]:
                raise ValueError("ring array length does not match point count")
            if ring.size and ring.min() < 0:
                raise ValueError("ring indices must be non-negative")
            ring.setflags(write=False)
        xyz.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "ring", ring)
        object.__setattr__(self, "frame_id", frame_id)
        object.__setattr__(self, "timestamp", float(timestamp))

    def __setattr__(self, name, value):
        raise AttributeError("PointCloud is immutable")

    def __reduce__(self):
        return (PointCloud, (np.array(self.xyz), None if self.ring is None else np.array(self.ring), self.frame_id, self.timestamp))

    @classmethod
    def from_points(cls, points: Iterable[Point3], frame_id: str = "ego", timestamp: float = 0.0) -> "PointCloud":
        points = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)
        rings = [p.ring for p in points]
        if points and all(r is not None for r in rings):
            ring = np.array(rings, dtype=np.int64)
        elif any(r is not None for r in rings):
            raise ValueError("either all points or none must carry a ring index")
        else:
            ring = None
        return cls(xyz, ring, frame_id, timestamp)

    @property
    def points(self) -> list[Point3]:
        return list(self)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __iter__(self) -> Iterator[Point3]:
        for i in range(len(self)):
            x, y, z = self.xyz[i]
            r = None if self.ring is None else int(self.ring[i])
            yield Point3(float(x), float(y), float(z), r)

    def select(self, mask) -> "PointCloud":
        """Subset by boolean mask or index array, order preserved."""
        ring = None if self.ring is None else self.ring[mask]
        return PointCloud(self.xyz[mask], ring, self.frame_id, self.timestamp)

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self.xyz + np.asarray(offset, dtype=np.float64), self.ring, self.frame_id, self.timestamp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.ring is None) != (other.ring is None):
            return False
        same_ring = self.ring is None or np.array_equal(self.ring, other.ring)
        return (
            same_ring
            and np.array_equal(self.xyz, other.xyz)
            and self.frame_id == other.frame_id
            and self.timestamp == other.timestamp
        )

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, frame_id={self.frame_id!r}, timestamp={self.timestamp})"


@dataclass(frozen=True)
class Plane3:
    """Plane {p : normal . p + offset = 0} with a unit normal."""

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = float(np.linalg.norm(n))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got |n|={norm}")
        object.__setattr__(self, "normal", tuple(float(v) for v in n))
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_normal_point(cls, normal, point) -> "Plane3":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(tuple(n), -float(n @ np.asarray(point, dtype=np.float64)))

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def canonical(self) -> "Plane3":
        """Same plane with normal.z >= 0."""
        if self.normal[2] < 0.0:
            return Plane3(tuple(-v for v in self.normal), -self.offset)
        return self

    def signed_distance(self, xyz) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64) @ self.n + self.offset


GROUND_Z0 = Plane3((0.0, 0.0, 1.0), 0.0)


@dataclass(frozen=True)
class GroundFrame:
    """Orthonormal 2D frame on a ground plane.

    The origin is the projection of the ego origin onto the plane, the first
    axis is the ego +x direction projected onto the plane.
    """

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_plane(cls, ground: Plane3) -> "GroundFrame":
        n = ground.canonical().n
        origin = -ground.canonical().offset * n
        x = np.array([1.0, 0.0, 0.0])
        e1 = x - (x @ n) * n
        if np.linalg.norm(e1) < 1e-9:
            raise ValueError("ground normal is parallel to the ego x axis")
        e1 = e1 / np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        e2 = e2 / np.linalg.norm(e2)
        return cls(origin, e1, e2, n)

    def to_ground(self, xyz) -> np.ndarray:
        """(N, 3) ego points to (N, 3) ground coordinates (u, v, height)."""
        d = np.asarray(xyz, dtype=np.float64) - self.origin
        return np.column_stack((d @ self.e1, d @ self.e2, d @ self.normal))

    def project(self, xyz) -> np.ndarray:
        """(N, 3) ego points to (N, 2) ground-plane coordinates."""
        d = np.asarray(xyz, dtype=np.float64).reshape(-1, 3) - self.origin
        return np.column_stack((d @ self.e1, d @ self.e2))

    def to_ego(self, uvh) -> np.ndarray:
        uvh = np.asarray(uvh, dtype=np.float64)
        return self.origin + uvh[..., 0:1] * self.e1 + uvh[..., 1:2] * self.e2 + uvh[..., 2:3] * self.normal

    def direction_to_ego(self, u: float, v: float) -> np.ndarray:
        return u * self.e1 + v * self.e2


@dataclass(frozen=True)
class Line2:
    """Infinite 2D line; ``direction`` has its angle in (-pi/2, pi/2]."""

    point: tuple[float, float]
    direction: tuple[float, float]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"line direction must be unit length, got {norm}")
        dx, dy = float(d[0]), float(d[1])
        if dx < 0.0 or (dx == 0.0 and dy < 0.0):
            dx, dy = -dx, -dy
        # exact zero keeps vertical lines at (0, 1)
        object.__setattr__(self, "direction", (dx + 0.0, dy + 0.0))
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))

    @property
    def angle(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])

    @property
    def normal(self) -> tuple[float, float]:
        return (-self.direction[1], self.direction[0])

    def distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        nx, ny = self.normal
        return np.abs((pts[:, 0] - self.point[0]) * nx + (pts[:, 1] - self.point[1]) * ny)


@dataclass(frozen=True)
class OrientedBox3:
    """Box rotated by ``yaw`` about the vertical axis; ``length`` runs along yaw."""

    center: tuple[float, float, float]
    length: float
    width: float
    height: float
    yaw: float = 0.0
    heading_valid: bool = True
    height_is_lower_bound: bool = False

    def __post_init__(self):
        if not (self.width > 0.0 and self.length >= self.width and self.height > 0.0):
            raise ValueError(
                f"invalid box extents length={self.length}, width={self.width}, height={self.height}"
            )
        if not (-math.pi <= self.yaw < math.pi):
            raise ValueError(f"yaw {self.yaw} outside [-pi, pi)")
        if not self.heading_valid and self.yaw != 0.0:
            raise ValueError("boxes without a heading must use yaw = 0")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def footprint(self) -> np.ndarray:
        """Four ground corners (counter-clockwise) as a (4, 2) array."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.center[:2])

    def corners(self) -> np.ndarray:
        """Eight corners as an (8, 3) array: bottom face then top face."""
        fp = self.footprint()
        z0 = self.center[2] - self.height / 2.0
        z1 = self.center[2] + self.height / 2.0
        bottom = np.column_stack((fp, np.full(4, z0)))
        top = np.column_stack((fp, np.full(4, z1)))
        return np.vstack((bottom, top))

    def nearest_distance(self, point=(0.0, 0.0)) -> float:
        """Ground-plane distance from ``point`` to the box footprint (0 inside)."""
        dx = point[0] - self.center[0]
        dy = point[1] - self.center[1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        ex = max(abs(lx) - self.length / 2.0, 0.0)
        ey = max(abs(ly) - self.width / 2.0, 0.0)
        return math.hypot(ex, ey)


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.yaw)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def inverse_transform(self, x: float, y: float) -> tuple[float, float]:
        """World point into this pose's local frame."""
        dx, dy = x - self.x, y - self.y
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return c * dx + s * dy, -s * dx + c * dy
