"""Synthetic spinning-lidar raycaster, parametric scenarios and ground truth."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cloud_io import FrameRecord
from .core import GROUND_Z0, OrientedBox3, Plane3, PointCloud, Pose2, wrap_angle

SUPPORTED_RING_COUNTS = (4, 8, 16, 32)
OBSTACLE_CLASSES = ("vehicle", "pedestrian", "barrier")
# barriers shape the scene but are not reported as obstacles
TRUTH_CLASSES = ("vehicle", "pedestrian")


class OutOfSpanError(ValueError):
    """Requested time lies outside a trajectory."""


@dataclass(frozen=True)
class LidarModel:
    elevation_angles: tuple[float, ...]
    azimuth_step: float = math.radians(0.2)
    max_range: float = 100.0
    range_noise_sigma: float = 0.01
    mount_height: float = 1.8

    def __post_init__(self):
        el = tuple(float(e) for e in self.elevation_angles)
        if not el or any(b <= a for a, b in zip(el, el[1:])):
            raise ValueError("elevation angles must be non-empty and strictly increasing")
        if not (self.azimuth_step > 0 and self.max_range > 0 and self.range_noise_sigma >= 0):
            raise ValueError("azimuth_step and max_range must be positive, noise non-negative")
        object.__setattr__(self, "elevation_angles", el)

    @classmethod
    def uniform(
        cls,
        rings: int = 16,
        fov_deg: tuple[float, float] = (-15.0, 15.0),
        **kwargs,
    ) -> "LidarModel":
        if rings not in SUPPORTED_RING_COUNTS:
            raise ValueError(f"ring count must be one of {SUPPORTED_RING_COUNTS}")
        el = np.radians(np.linspace(fov_deg[0], fov_deg[1], rings))
        return cls(tuple(el), **kwargs)

    @property
    def rings(self) -> int:
        return len(self.elevation_angles)

    @property
    def azimuths(self) -> np.ndarray:
        n = int(round(2 * math.pi / self.azimuth_step))
        return -math.pi + self.azimuth_step * np.arange(n)

    def ray_directions(self) -> np.ndarray:
        """(rings, azimuths, 3) unit directions in the ego frame."""
        el = np.asarray(self.elevation_angles)[:, None]
        az = self.azimuths[None, :]
        return np.stack(
            (np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.broadcast_to(np.sin(el), (el.shape[0], az.shape[1]))),
            axis=-1,
        )


@dataclass(frozen=True)
class Trajectory:
    """Timestamped poses, interpolated linearly (yaw along the shortest arc)."""

    times: tuple[float, ...]
    poses: tuple[Pose2, ...]

    def __post_init__(self):
        if len(self.times) != len(self.poses) or not self.times:
            raise ValueError("trajectory needs matching, non-empty times and poses")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    @classmethod
    def static(cls, pose: Pose2, t0: float, t1: float) -> "Trajectory":
        return cls((t0, t1), (pose, pose))

    @property
    def span(self) -> tuple[float, float]:
        return self.times[0], self.times[-1]

    def at(self, t: float) -> Pose2:
        t0, t1 = self.span
        if not (t0 - 1e-9 <= t <= t1 + 1e-9):
            raise OutOfSpanError(f"t={t} outside trajectory span [{t0}, {t1}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 1)
        if k == len(self.times) - 1:
            return self.poses[-1]
        ta, tb = self.times[k], self.times[k + 1]
        a, b = self.poses[k], self.poses[k + 1]
        w = (t - ta) / (tb - ta)
        if w <= 0.0:
            return a
        dyaw = wrap_angle(b.yaw - a.yaw)
        return Pose2(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y), a.yaw + w * dyaw)


@dataclass(frozen=True)
class SimObstacle:
    obstacle_id: int
    box: OrientedBox3  # dimensions; center z sets the vertical placement
    cls: str
    trajectory: Trajectory

    def __post_init__(self):
        if self.cls not in OBSTACLE_CLASSES:
            raise ValueError(f"unknown obstacle class {self.cls!r}")


@dataclass(frozen=True)
class Scene:
    ground: Plane3
    obstacles: tuple[SimObstacle, ...]
    ego_trajectory: Trajectory

    @property
    def span(self) -> tuple[float, float]:
        lo, hi = self.ego_trajectory.span
        for ob in self.obstacles:
            a, b = ob.trajectory.span
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi


@dataclass(frozen=True)
class ObstacleTruth:
    obstacle_id: int
    cls: str
    dist_nearest: float
    dist_center: float
    rel_heading: float
    box: OrientedBox3  # ego frame


@dataclass(frozen=True)
class GroundTruthRecord:
    timestamp: float
    obstacles: tuple[ObstacleTruth, ...] = ()


@dataclass(frozen=True)
class RaycastResult:
    xyz: np.ndarray
    ring: np.ndarray
    hit: np.ndarray  # -1 ground, k = index into scene.obstacles
    noise: np.ndarray
    origin: np.ndarray


# --- geometry ---------------------------------------------------------------


def _obstacle_in_ego(ob: SimObstacle, ego: Pose2, t: float) -> tuple[np.ndarray, float]:
    pose = ob.trajectory.at(t)
    cx, cy = ego.inverse_transform(pose.x, pose.y)
    return np.array([cx, cy, ob.box.center[2]]), wrap_angle(pose.yaw - ego.yaw)


def _ground_in_ego(ground: Plane3, ego: Pose2) -> tuple[np.ndarray, float]:
    n = ground.n
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    n_e = rot.T @ n
    d_e = float(n @ np.array([ego.x, ego.y, 0.0]) + ground.offset)
    return n_e, d_e


def _ray_box(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, yaw: float, half: np.ndarray) -> np.ndarray:
    """Entry distance of each ray into an oriented box (inf when missed)."""
    c, s = math.cos(yaw), math.sin(yaw)
    rot_t = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot_t @ (origin - center)
    d = dirs @ rot_t.T
    d = np.where(d == 0.0, 1e-300, d)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    tmin = np.minimum(t1, t2).max(axis=-1)
    tmax = np.maximum(t1, t2).min(axis=-1)
    hit = (tmax >= tmin) & (tmin > 0.0)
    return np.where(hit, tmin, np.inf)


def box_surface_distance(xyz, center, yaw: float, half) -> np.ndarray:
    """Unsigned distance from points to the surface of an oriented box."""
    c, s = math.cos(yaw), math.sin(yaw)
    rot_t = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    local = (np.asarray(xyz, dtype=np.float64) - center) @ rot_t.T
    q = np.abs(local) - np.asarray(half)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return np.abs(outside + inside)


def cast_rays(scene: Scene, lidar: LidarModel, t: float, rng_seed=0) -> RaycastResult:
    """Raycast one revolution at time ``t``; returns points with per-point diagnostics."""
    ego = scene.ego_trajectory.at(t)
    dirs = lidar.ray_directions()
    origin = np.array([0.0, 0.0, lidar.mount_height])
    n_e, d_e = _ground_in_ego(scene.ground, ego)
    denom = dirs @ n_e
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -(n_e @ origin + d_e) / denom
    t_ground = np.where((denom < 0.0) & (t_ground > 0.0), t_ground, np.inf)
    best = t_ground
    hit = np.full(best.shape, -1, dtype=np.int64)
    for k, ob in enumerate(scene.obstacles):
        center, yaw = _obstacle_in_ego(ob, ego, t)
        half = np.array([ob.box.length, ob.box.width, ob.box.height]) / 2.0
        tb = _ray_box(origin, dirs, center, yaw, half)
        closer = tb < best
        best = np.where(closer, tb, best)
        hit = np.where(closer, k, hit)
    # one normal draw per (ring, azimuth) cell, independent of what the ray hits
    noise = lidar.range_noise_sigma * np.random.default_rng(rng_seed).standard_normal(best.shape)
    valid = best <= lidar.max_range
    ring_idx = np.broadcast_to(np.arange(lidar.rings)[:, None], best.shape)
    rng_along = best[valid] + noise[valid]
    xyz = origin + rng_along[:, None] * dirs[valid]
    return RaycastResult(xyz, ring_idx[valid].astype(np.int64), hit[valid], noise[valid], origin)


def raycast_frame(scene: Scene, lidar: LidarModel, t: float, rng_seed=0, frame_id: str = "ego") -> FrameRecord:
    lo, hi = scene.span
    if not (lo - 1e-9 <= t <= hi + 1e-9):
        raise OutOfSpanError(f"t={t} outside scene span [{lo}, {hi}]")
    res = cast_rays(scene, lidar, t, rng_seed)
    return FrameRecord(t, PointCloud(res.xyz, res.ring, frame_id, t))


def ground_truth_at(scene: Scene, t: float) -> GroundTruthRecord:
    ego = scene.ego_trajectory.at(t)
    truths = []
    for ob in scene.obstacles:
        if ob.cls not in TRUTH_CLASSES:
            continue
        center, yaw = _obstacle_in_ego(ob, ego, t)
        box = OrientedBox3(tuple(center), ob.box.length, ob.box.width, ob.box.height, yaw, True, False)
        truths.append(
            ObstacleTruth(
                ob.obstacle_id,
                ob.cls,
                box.nearest_distance((0.0, 0.0)),
                float(math.hypot(center[0], center[1])),
                yaw,
                box,
            )
        )
    return GroundTruthRecord(t, tuple(truths))


# --- scenarios ----------------------------------------------------------------

SCENARIOS = ("approach", "chicane", "lap", "multi_obstacle")


@dataclass(frozen=True)
class ScenarioParams:
    duration: float = 30.0
    knot_dt: float = 0.1
    start_distance: float = 20.0
    end_distance: float = 2.0
    lateral_offset: float = 2.5  # approach: obstacle centre to ego x axis
    chicane_distance: float = 10.0  # gap to the obstacle's rear face at zero yaw
    chicane_amplitude_deg: float = 40.0
    chicane_period: float = 15.0
    transition: float = 3.0  # lap: gap between concatenated segments
    vehicle_size: tuple[float, float, float] = (4.5, 2.0, 2.2)
    second_vehicle_size: tuple[float, float, float] = (4.2, 1.8, 1.5)
    pedestrian_size: tuple[float, float, float] = (0.5, 0.5, 1.75)
    barriers: bool = False

    def __post_init__(self):
        if not (self.duration > 0 and self.knot_dt > 0 and self.chicane_period > 0):
            raise ValueError("duration, knot_dt and chicane_period must be positive")
        if not self.start_distance > 0 or not self.end_distance > 0:
            raise ValueError("approach distances must be positive")
        for dims in (self.vehicle_size, self.second_vehicle_size, self.pedestrian_size):
            if not (dims[0] >= dims[1] > 0 and dims[2] > 0):
                raise ValueError(f"invalid obstacle dimensions {dims}")
        near_side = self.lateral_offset - self.vehicle_size[1] / 2
        if near_side > 0 and self.end_distance < near_side:
            raise ValueError("end_distance is closer than the obstacle's lateral clearance")
        if self.chicane_distance <= 0 or not 0 <= self.chicane_amplitude_deg < 90:
            raise ValueError("invalid chicane parameters")


def _knots(params: ScenarioParams) -> np.ndarray:
    n = int(round(params.duration / params.knot_dt))
    return params.knot_dt * np.arange(n + 1)


def _box(dims) -> OrientedBox3:
    length, width, height = dims
    return OrientedBox3((0.0, 0.0, height / 2), length, width, height)


def _approach_track(params: ScenarioParams, t_offset: float = 0.0) -> Trajectory:
    length, width, _ = params.vehicle_size
    ts = _knots(params)
    frac = ts / params.duration
    dist = params.start_distance + (params.end_distance - params.start_distance) * frac
    near_side = params.lateral_offset - width / 2
    if near_side > 0:
        rear_x = np.sqrt(np.maximum(dist**2 - near_side**2, 0.0))
    else:
        rear_x = dist
    poses = tuple(Pose2(float(x + length / 2), params.lateral_offset, 0.0) for x in rear_x)
    return Trajectory(tuple(float(t + t_offset) for t in ts), poses)


def _chicane_track(params: ScenarioParams, t_offset: float = 0.0) -> Trajectory:
    length = params.vehicle_size[0]
    ts = _knots(params)
    amp = math.radians(params.chicane_amplitude_deg)
    yaw = amp * np.sin(2 * math.pi * ts / params.chicane_period)
    cx = params.chicane_distance + length / 2
    poses = tuple(Pose2(cx, 0.0, float(y)) for y in yaw)
    return Trajectory(tuple(float(t + t_offset) for t in ts), poses)


def _barriers(t0: float, t1: float, start_id: int) -> list[SimObstacle]:
    # a closed enclosure so every ray returns, as on a walled circuit
    walls = [
        (Pose2(0.0, 15.0, 0.0), (56.0, 0.5, 12.0)),
        (Pose2(0.0, -15.0, 0.0), (56.0, 0.5, 12.0)),
        (Pose2(28.0, 0.0, math.pi / 2), (30.5, 0.5, 12.0)),
        (Pose2(-28.0, 0.0, math.pi / 2), (30.5, 0.5, 12.0)),
    ]
    return [
        SimObstacle(start_id + k, _box(dims), "barrier", Trajectory.static(pose, t0, t1))
        for k, (pose, dims) in enumerate(walls)
    ]


def generate_scenario(kind: str, params: Optional[ScenarioParams] = None) -> Scene:
    """Deterministic parametric scene; the ego stays at the world origin facing +x."""
    params = params or ScenarioParams()
    if kind not in SCENARIOS:
        raise ValueError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}")
    obstacles: list[SimObstacle] = []
    van = _box(params.vehicle_size)
    if kind == "approach":
        track = _approach_track(params)
    elif kind == "chicane":
        track = _chicane_track(params)
    elif kind == "lap":
        first = _approach_track(params)
        second = _chicane_track(params, t_offset=params.duration + params.transition)
        track = Trajectory(first.times + second.times, first.poses + second.poses)
    else:
        track = _approach_track(params)
    obstacles.append(SimObstacle(0, van, "vehicle", track))
    t0, t1 = track.span
    if kind == "multi_obstacle":
        obstacles.append(
            SimObstacle(1, _box(params.second_vehicle_size), "vehicle", Trajectory.static(Pose2(14.0, -3.5, 0.15), t0, t1))
        )
        walker = Trajectory((t0, t1), (Pose2(5.0, -6.0, 0.0), Pose2(8.0, -6.0, 0.0)))
        obstacles.append(SimObstacle(2, _box(params.pedestrian_size), "pedestrian", walker))
    if params.barriers:
        obstacles.extend(_barriers(t0, t1, start_id=len(obstacles)))
    return Scene(GROUND_Z0, tuple(obstacles), Trajectory.static(Pose2(), t0, t1))


def frame_times(scene: Scene, rate_hz: float = 10.0, count: Optional[int] = None) -> list[float]:
    """Frame timestamps at ``rate_hz``, or ``count`` frames spread evenly over the whole span."""
    lo, hi = scene.span
    if count is not None:
        if count < 1:
            raise ValueError("count must be >= 1")
        return [float(t) for t in np.linspace(lo, hi, count)] if count > 1 else [lo]
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    n = int(math.floor((hi - lo) * rate_hz + 1e-9)) + 1
    return [lo + k / rate_hz for k in range(n)]


def simulate_sequence(
    scene: Scene, lidar: LidarModel, times: Sequence[float], seed: int = 0
) -> list[tuple[FrameRecord, GroundTruthRecord]]:
    out = []
    for i, t in enumerate(times):
        rec = raycast_frame(scene, lidar, t, rng_seed=[seed, i])
        out.append((FrameRecord(t, rec.cloud, truth_key=str(i)), ground_truth_at(scene, t)))
    return out


# --- ground_truth.csv ---------------------------------------------------------

GT_HEADER = ["t", "obstacle_id", "class", "dist_nearest", "dist_center", "rel_heading",
             "cx", "cy", "yaw", "length", "width", "height"]


def _f(v: float) -> str:
    return format(float(v), ".9g")


def write_ground_truth(records: Iterable[GroundTruthRecord], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GT_HEADER)
    for rec in records:
        for ob in rec.obstacles:
            b = ob.box
            w.writerow([format(rec.timestamp, ".17g"), ob.obstacle_id, ob.cls, _f(ob.dist_nearest),
                        _f(ob.dist_center), _f(ob.rel_heading), _f(b.center[0]), _f(b.center[1]),
                        _f(b.yaw), _f(b.length), _f(b.width), _f(b.height)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_ground_truth(path, timestamps: Optional[Sequence[float]] = None) -> list[GroundTruthRecord]:
    """Parse ``ground_truth.csv``; ``timestamps`` adds empty records for frames without obstacles."""
    by_t: dict[float, list[ObstacleTruth]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GT_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t = float(row["t"])
                height = float(row["height"])
                box = OrientedBox3(
                    (float(row["cx"]), float(row["cy"]), height / 2), float(row["length"]),
                    float(row["width"]), height, float(row["yaw"]), True, False,
                )
                ob = ObstacleTruth(int(row["obstacle_id"]), row["class"], float(row["dist_nearest"]),
                                   float(row["dist_center"]), float(row["rel_heading"]), box)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            by_t.setdefault(t, []).append(ob)
    if timestamps is not None:
        for t in timestamps:
            by_t.setdefault(float(t), [])
    return [GroundTruthRecord(t, tuple(obs)) for t, obs in sorted(by_t.items())]
