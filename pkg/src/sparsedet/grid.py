"""Occupancy grid construction, binary morphology and cluster extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .core import GroundFrame, Plane3, PointCloud


@dataclass(frozen=True)
class GridConfig:
    cell_size: float = 0.20
    x_min: float = -30.0
    x_max: float = 30.0
    y_min: float = -20.0
    y_max: float = 20.0
    occupancy_threshold: int = 2

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid extent must have min < max on both axes")
        if self.occupancy_threshold < 1:
            raise ValueError("occupancy_threshold must be >= 1")

    @property
    def cols(self) -> int:
        return max(1, math.ceil((self.x_max - self.x_min) / self.cell_size - 1e-9))

    @property
    def rows(self) -> int:
        return max(1, math.ceil((self.y_max - self.y_min) / self.cell_size - 1e-9))

    def cell_of(self, uv) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) indices of ground coordinates; may fall outside the grid."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        col = np.floor((uv[:, 0] - self.x_min) / self.cell_size).astype(np.int64)
        row = np.floor((uv[:, 1] - self.y_min) / self.cell_size).astype(np.int64)
        return row, col

    def cell_center(self, row, col) -> np.ndarray:
        row = np.asarray(row, dtype=np.float64)
        col = np.asarray(col, dtype=np.float64)
        return np.stack(
            (self.x_min + (col + 0.5) * self.cell_size, self.y_min + (row + 0.5) * self.cell_size), axis=-1
        )


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    config: GridConfig
    cells: np.ndarray  # uint8, rows x cols, 1 = occupied

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.shape != (self.config.rows, self.config.cols):
            raise ValueError(f"cells shape {cells.shape} does not match config {(self.config.rows, self.config.cols)}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, config: GridConfig) -> "OccupancyGrid":
        return cls(config, np.zeros((config.rows, config.cols), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def with_cells(self, cells) -> "OccupancyGrid":
        return OccupancyGrid(self.config, cells)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.cells, other.cells)


class SizeClass(str, Enum):
    VEHICLE_LIKE = "vehicle_like"
    PEDESTRIAN_LIKE = "pedestrian_like"


@dataclass(frozen=True, eq=False)
class Cluster:
    """A connected set of occupied cells."""

    cells: np.ndarray  # (K, 2) int array of (row, col), raster order
    config: GridConfig

    @property
    def cell_indices(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in self.cells}

    @property
    def size(self) -> int:
        return self.cells.shape[0]

    @property
    def bbox_cells(self) -> tuple[int, int, int, int]:
        """(min_row, max_row, min_col, max_col)."""
        r, c = self.cells[:, 0], self.cells[:, 1]
        return int(r.min()), int(r.max()), int(c.min()), int(c.max())

    @property
    def metric_points(self) -> np.ndarray:
        """Cell centres in ground-plane coordinates, (K, 2)."""
        return self.config.cell_center(self.cells[:, 0], self.cells[:, 1])

    def sides(self) -> tuple[float, float]:
        """Metric side lengths (along u, along v) of the cell bounding box."""
        r0, r1, c0, c1 = self.bbox_cells
        cs = self.config.cell_size
        return (c1 - c0 + 1) * cs, (r1 - r0 + 1) * cs

    def area(self) -> float:
        return self.size * self.config.cell_size**2

    def metric_bbox(self, margin: float = 0.0) -> tuple[float, float, float, float]:
        """Ground-plane bounds (u_min, u_max, v_min, v_max) of the cell box, half-open."""
        r0, r1, c0, c1 = self.bbox_cells
        cfg = self.config
        return (
            cfg.x_min + c0 * cfg.cell_size - margin,
            cfg.x_min + (c1 + 1) * cfg.cell_size + margin,
            cfg.y_min + r0 * cfg.cell_size - margin,
            cfg.y_min + (r1 + 1) * cfg.cell_size + margin,
        )


@dataclass(frozen=True)
class ClusterFilterParams:
    min_area: float = 0.01
    max_area: float = 40.0
    min_side: float = 0.3
    max_side: float = 15.0
    pedestrian_max_side: float = 1.0

    def __post_init__(self):
        if not (0 < self.min_area < self.max_area and 0 < self.min_side < self.max_side):
            raise ValueError("cluster filter bounds must be positive with min < max")
        if not self.pedestrian_max_side > 0:
            raise ValueError("pedestrian_max_side must be positive")


def project_to_grid(cloud: PointCloud, ground: Plane3, config: GridConfig) -> OccupancyGrid:
    """Bin points projected onto the ground plane; a cell is occupied at ``occupancy_threshold`` hits."""
    counts = point_counts(cloud, ground, config)
    return OccupancyGrid(config, (counts >= config.occupancy_threshold).astype(np.uint8))


def point_counts(cloud: PointCloud, ground: Plane3, config: GridConfig) -> np.ndarray:
    rows, cols = config.rows, config.cols
    if len(cloud) == 0:
        return np.zeros((rows, cols), dtype=np.int64)
    uv = GroundFrame.from_plane(ground).project(cloud.xyz)
    r, c = config.cell_of(uv)
    inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
    flat = r[inside] * cols + c[inside]
    return np.bincount(flat, minlength=rows * cols).reshape(rows, cols)


_OPS = ("erode", "dilate", "open", "close")


def morphology(grid: OccupancyGrid, op: str, kernel_radius: int = 1) -> OccupancyGrid:
    """Binary morphology with a (2r+1) square; cells outside the grid count as free."""
    if op not in _OPS:
        raise ValueError(f"unknown morphology op {op!r}; expected one of {_OPS}")
    r = int(kernel_radius)
    if r < 1:
        raise ValueError("kernel_radius must be >= 1")
    cells = grid.cells
    if op == "erode":
        out = kernels.erode_square(cells, r)
    elif op == "dilate":
        out = kernels.dilate_square(cells, r)
    elif op == "open":
        out = kernels.dilate_square(kernels.erode_square(cells, r), r)
    else:
        out = kernels.erode_square(kernels.dilate_square(cells, r), r)
    return grid.with_cells(out)


def connected_components(
    grid: OccupancyGrid, connectivity: int = 8, link_radius: int = 0, link_cells: Optional[np.ndarray] = None
) -> list[Cluster]:
    """Clusters ordered by descending size, ties by (min row, min col).

    With ``link_radius`` r > 0, occupied cells whose (2r+1) squares touch share
    a cluster, so gaps of up to 2r free cells are bridged in any direction.
    Clusters still contain only the occupied cells of ``grid``.  ``link_cells``
    may pass that dilation precomputed.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    if link_radius < 0:
        raise ValueError("link_radius must be >= 0")
    if link_cells is not None:
        base = np.ascontiguousarray(link_cells, dtype=np.uint8)
        if base.shape != grid.cells.shape:
            raise ValueError("link_cells shape does not match the grid")
    elif link_radius > 0:
        base = kernels.dilate_square(grid.cells, int(link_radius))
    else:
        base = grid.cells
    labels, n = kernels.label_components(base, connectivity)
    if n == 0:
        return []
    flat_labels = np.where(grid.cells.ravel() != 0, labels.ravel(), 0)
    occ = np.flatnonzero(flat_labels)
    lab = flat_labels[occ]
    order = np.argsort(lab, kind="stable")
    occ, lab = occ[order], lab[order]
    bounds = np.flatnonzero(np.diff(lab)) + 1
    groups = np.split(occ, bounds)
    cols = grid.cols
    clusters = []
    for flat in groups:
        cells = np.column_stack((flat // cols, flat % cols))
        cells.setflags(write=False)
        clusters.append(Cluster(cells, grid.config))
    clusters.sort(key=lambda c: (-c.size, int(c.cells[:, 0].min()), int(c.cells[:, 1].min())))
    return clusters


def filter_clusters(
    clusters: Iterable[Cluster], params: ClusterFilterParams, cell_size: Optional[float] = None
) -> list[Cluster]:
    """Keep clusters with plausible obstacle area and longest side; order preserved."""
    kept = []
    for cl in clusters:
        cs = cell_size if cell_size is not None else cl.config.cell_size
        area = cl.size * cs * cs
        r0, r1, c0, c1 = cl.bbox_cells
        longest = max(r1 - r0 + 1, c1 - c0 + 1) * cs
        if params.min_area <= area <= params.max_area and params.min_side <= longest <= params.max_side:
            kept.append(cl)
    return kept


def classify_cluster_size(cluster: Cluster, params: ClusterFilterParams, cell_size: Optional[float] = None) -> SizeClass:
    cs = cell_size if cell_size is not None else cluster.config.cell_size
    r0, r1, c0, c1 = cluster.bbox_cells
    sx, sy = (c1 - c0 + 1) * cs, (r1 - r0 + 1) * cs
    if sx <= params.pedestrian_max_side and sy <= params.pedestrian_max_side:
        return SizeClass.PEDESTRIAN_LIKE
    return SizeClass.VEHICLE_LIKE


def dump_grid(grid: OccupancyGrid, path) -> None:
    """Plain-text bitmap: ``1`` occupied, ``0`` free, first data row is the minimum-y row."""
    cfg = grid.config
    lines = [
        "P1",
        f"# cell_size={cfg.cell_size!r} x_min={cfg.x_min!r} x_max={cfg.x_max!r} "
        f"y_min={cfg.y_min!r} y_max={cfg.y_max!r} occupancy_threshold={cfg.occupancy_threshold}",
        f"{grid.cols} {grid.rows}",
    ]
    lines.extend(" ".join("1" if v else "0" for v in row) for row in grid.cells)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_grid(path) -> OccupancyGrid:
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0].strip() != "P1":
        raise ValueError(f"{path}: not a P1 grid dump")
    meta = {}
    body = []
    for line in text[1:]:
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
        elif line.strip():
            body.append(line.split())
    cols, rows = int(body[0][0]), int(body[0][1])
    cells = np.array([[int(v) for v in row] for row in body[1:]], dtype=np.uint8).reshape(rows, cols)
    cfg = GridConfig(
        cell_size=float(meta["cell_size"]),
        x_min=float(meta["x_min"]),
        x_max=float(meta["x_max"]),
        y_min=float(meta["y_min"]),
        y_max=float(meta["y_max"]),
        occupancy_threshold=int(meta["occupancy_threshold"]),
    )
    return OccupancyGrid(cfg, cells)
