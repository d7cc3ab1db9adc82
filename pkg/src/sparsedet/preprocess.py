"""Ground removal and region-of-interest cropping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Plane3, PointCloud


class GroundFitError(ValueError):
    """The seed points do not determine a plane."""


@dataclass(frozen=True)
class GroundParams:
    num_lpr: int = 250
    seed_margin: float = 0.15
    dist_threshold: float = 0.20
    num_iterations: int = 3
    # seeding only looks at returns this close (horizontal range); far rings
    # graze the road and bias the lowest-point estimate
    seed_max_range: float = 20.0

    def __post_init__(self):
        if self.num_lpr < 1 or self.num_iterations < 1:
            raise ValueError("num_lpr and num_iterations must be >= 1")
        if not (self.seed_margin > 0 and self.dist_threshold > 0 and self.seed_max_range > 0):
            raise ValueError("ground thresholds must be positive")


@dataclass(frozen=True)
class RoiParams:
    max_height: float = 3.0
    lateral_half_width: float = 20.0
    forward_range: tuple[float, float] = (-30.0, 30.0)

    def __post_init__(self):
        if self.max_height <= 0 or self.lateral_half_width <= 0:
            raise ValueError("max_height and lateral_half_width must be positive")
        if not self.forward_range[0] < self.forward_range[1]:
            raise ValueError("forward_range must be (min, max) with min < max")


def fit_plane_pca(xyz: np.ndarray) -> Plane3:
    """Least-squares plane (orthogonal distance) through ``xyz``, normal.z >= 0."""
    xyz = np.asarray(xyz, dtype=np.float64)
    if xyz.shape[0] < 3:
        raise GroundFitError(f"need at least 3 points for a plane, got {xyz.shape[0]}")
    centroid = xyz.mean(axis=0)
    centered = xyz - centroid
    cov = centered.T @ centered / xyz.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[2], 1e-300)
    if evals[1] <= 1e-12 * scale:
        raise GroundFitError("seed points are collinear; plane is undetermined")
    normal = evecs[:, 0]
    if normal[2] < 0:
        normal = -normal
    if normal[2] == 0.0:
        raise GroundFitError("fitted ground plane is vertical")
    normal = normal / np.linalg.norm(normal)
    return Plane3(tuple(normal), -float(normal @ centroid))


def segment_ground(cloud: PointCloud, params: GroundParams = GroundParams()) -> tuple[np.ndarray, Plane3]:
    """Boolean ground mask and the fitted plane."""
    n = len(cloud)
    if n < params.num_lpr:
        raise ValueError(f"cloud has {n} points, fewer than num_lpr={params.num_lpr}")
    xyz = cloud.xyz
    near = np.hypot(xyz[:, 0], xyz[:, 1]) <= params.seed_max_range
    pool = xyz[near] if np.count_nonzero(near) >= params.num_lpr else xyz
    z = pool[:, 2]
    k = params.num_lpr
    lowest = np.partition(z, k - 1)[:k] if k < z.size else z
    lpr_height = float(lowest.mean())
    seeds = pool[z <= lpr_height + params.seed_margin]
    plane = fit_plane_pca(seeds)
    for _ in range(params.num_iterations):
        mask = np.abs(plane.signed_distance(xyz)) <= params.dist_threshold
        if np.count_nonzero(mask) < 3:
            break
        plane = fit_plane_pca(xyz[mask])
    mask = np.abs(plane.signed_distance(xyz)) <= params.dist_threshold
    return mask, plane


def remove_ground(cloud: PointCloud, params: GroundParams = GroundParams()) -> tuple[PointCloud, Plane3]:
    """Split off the road surface; returns the remaining points and the ground plane."""
    mask, plane = segment_ground(cloud, params)
    return cloud.select(~mask), plane


def filter_by_roi(cloud: PointCloud, ground: Plane3, params: RoiParams = RoiParams()) -> PointCloud:
    """Keep points above the ground up to ``max_height`` inside the lateral/forward window."""
    if len(cloud) == 0:
        return cloud
    if ground.normal[2] <= 0:
        raise ValueError("ground plane must be canonical (normal.z > 0)")
    xyz = cloud.xyz
    h = ground.signed_distance(xyz)
    lo, hi = params.forward_range
    keep = (
        (h > 0.0)
        & (h <= params.max_height)
        & (np.abs(xyz[:, 1]) <= params.lateral_half_width)
        & (xyz[:, 0] >= lo)
        & (xyz[:, 0] <= hi)
    )
    return cloud.select(keep)
