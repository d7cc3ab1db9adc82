"""The two detection pipelines: plane fitting for 16 planes, grid heading for 8 or fewer."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import GroundFrame, OrientedBox3, Plane3, PointCloud, wrap_half_turn
from .fit import (
    DegenerateFitError,
    NoConsensusError,
    RansacParams,
    convex_hull,
    fit_vertical_plane,
    ransac_line,
    rectangle_from_hull,
)
from .grid import (
    Cluster,
    ClusterFilterParams,
    GridConfig,
    OccupancyGrid,
    SizeClass,
    classify_cluster_size,
    connected_components,
    filter_clusters,
    morphology,
    project_to_grid,
)
from .preprocess import GroundParams, RoiParams, filter_by_roi, remove_ground

log = logging.getLogger(__name__)

SIXTEEN_PLANE = "sixteen_plane"
EIGHT_PLANE = "eight_plane"
MODES = (SIXTEEN_PLANE, EIGHT_PLANE)


class Provenance(str, Enum):
    PLANE_FIT = "plane_fit"
    RECTANGLE = "rectangle"
    RANSAC_LINE = "ransac_line"
    NO_HEADING = "no_heading"


@dataclass(frozen=True)
class HeadingParams:
    # Fig. 4 decision: both cluster sides above this -> try the two-sides branch
    visible_side_min: float = 1.2
    corner_angle_tolerance_deg: float = 35.0
    # a lone face shorter than this is taken as a vehicle end, not a flank
    end_face_max: float = 2.5
    # hidden depth assumed behind a lone flank
    flank_min_depth: float = 1.8
    use_raw_points: bool = False
    grid_tolerance_cells: float = 1.5
    raw_tolerance: float = 0.05


@dataclass(frozen=True)
class MorphologyParams:
    close_radius_m: float = 0.6
    open_radius_m: float = 0.0

    def radii(self, cell_size: float) -> tuple[int, int]:
        close = int(round(self.close_radius_m / cell_size))
        opening = int(round(self.open_radius_m / cell_size))
        return close, opening


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = SIXTEEN_PLANE
    ground: GroundParams = field(default_factory=GroundParams)
    roi: RoiParams = field(default_factory=RoiParams)
    grid: GridConfig = field(default_factory=GridConfig)
    clusters: ClusterFilterParams = field(default_factory=ClusterFilterParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    heading: HeadingParams = field(default_factory=HeadingParams)
    morphology: MorphologyParams = field(default_factory=MorphologyParams)
    crop_margin: float = 0.10
    connectivity: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.crop_margin < 0:
            raise ValueError("crop_margin must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    @classmethod
    def sixteen_plane(cls, **overrides) -> "PipelineConfig":
        return cls(mode=SIXTEEN_PLANE, **overrides)

    @classmethod
    def eight_plane(cls, **overrides) -> "PipelineConfig":
        overrides.setdefault("grid", GridConfig(cell_size=0.05, occupancy_threshold=1))
        return cls(mode=EIGHT_PLANE, **overrides)


@dataclass(frozen=True)
class DetectionFrame:
    timestamp: float
    boxes: tuple[OrientedBox3, ...] = ()
    provenance: tuple[Provenance, ...] = ()

    def __post_init__(self):
        if len(self.boxes) != len(self.provenance):
            raise ValueError("one provenance entry per box is required")


# --- per-cluster stages -----------------------------------------------------


def crop_cloud(cloud: PointCloud, cluster: Cluster, ground: Plane3, margin: float = 0.0) -> PointCloud:
    """Points whose ground projection falls in the cluster's cell box grown by ``margin``."""
    if len(cloud) == 0:
        return cloud
    u0, u1, v0, v1 = cluster.metric_bbox(margin)
    uv = GroundFrame.from_plane(ground).project(cloud.xyz)
    inside = (uv[:, 0] >= u0) & (uv[:, 0] < u1) & (uv[:, 1] >= v0) & (uv[:, 1] < v1)
    return cloud.select(inside)


def _yaw_of(frame: GroundFrame, axis2: np.ndarray) -> float:
    d = axis2[0] * frame.e1 + axis2[1] * frame.e2
    return wrap_half_turn(math.atan2(d[1], d[0]))


def _assemble(
    frame: GroundFrame,
    length_axis: np.ndarray,
    s_range: tuple[float, float],
    q_range: tuple[float, float],
    h_range: tuple[float, float],
    heading_valid: bool,
    lower_bound: bool,
) -> OrientedBox3:
    """Box from ranges along the length axis (s), its normal (q) and height (h)."""
    width_axis = np.array([-length_axis[1], length_axis[0]])
    s_mid = 0.5 * (s_range[0] + s_range[1])
    q_mid = 0.5 * (q_range[0] + q_range[1])
    h_mid = 0.5 * (h_range[0] + h_range[1])
    uv = s_mid * length_axis + q_mid * width_axis
    center = frame.to_ego(np.array([uv[0], uv[1], h_mid]))
    length = s_range[1] - s_range[0]
    width = q_range[1] - q_range[0]
    height = h_range[1] - h_range[0]
    if width > length:
        if width - length <= 1e-9 * width:
            width = length  # rounding from _grow on a square footprint
        else:
            length, width, length_axis = width, length, width_axis
    yaw = _yaw_of(frame, length_axis) if heading_valid else 0.0
    return OrientedBox3(tuple(center), length, width, height, yaw, heading_valid, lower_bound)


def _grow(lo: float, hi: float, minimum: float, keep: str = "center") -> tuple[float, float]:
    """Widen [lo, hi] to ``minimum``; ``keep`` pins the 'lo' or 'hi' end, or the centre."""
    if hi - lo >= minimum:
        return lo, hi
    if keep == "hi":
        return hi - minimum, hi
    if keep == "lo":
        return lo, lo + minimum
    mid = 0.5 * (lo + hi)
    return mid - minimum / 2, mid + minimum / 2


def _face_box(
    frame: GroundFrame,
    uvh: np.ndarray,
    normal2: np.ndarray,
    face_pos: float,
    min_size: float,
    end_face_max: Optional[float],
    h_range: tuple[float, float],
    lower_bound: bool,
    flank_min_depth: Optional[float] = None,
) -> OrientedBox3:
    """Box with one face on the line s = face_pos, where s runs along ``normal2`` (toward the ego)."""
    tangent = np.array([-normal2[1], normal2[0]])
    s = uvh[:, :2] @ normal2 - face_pos
    q = uvh[:, :2] @ tangent
    # a convex body seen from outside lies behind its visible face; only when
    # nothing lies behind it and the points clearly extend forward is the
    # face the far one
    behind, ahead = -float(s.min()), float(s.max())
    if behind <= min_size < ahead:
        s_lo, s_hi, keep = 0.0, ahead, "lo"
    else:
        s_lo, s_hi, keep = min(-behind, 0.0), 0.0, "hi"
    q_lo, q_hi = float(q.min()), float(q.max())
    depth, span = s_hi - s_lo, q_hi - q_lo
    if depth >= span:
        along_normal = True
    elif end_face_max is not None and span < end_face_max:
        # a short lone face: the obstacle's end; it is at least as long as wide
        along_normal = True
        s_lo, s_hi = _grow(s_lo, s_hi, span, keep)
    else:
        along_normal = False
        if flank_min_depth is not None:
            s_lo, s_hi = _grow(s_lo, s_hi, flank_min_depth, keep)
    s_lo, s_hi = _grow(s_lo, s_hi, min_size, keep)
    q_lo, q_hi = _grow(q_lo, q_hi, min_size)
    s_lo += face_pos
    s_hi += face_pos
    if along_normal:
        length_axis, s_range, q_range = normal2, (s_lo, s_hi), (q_lo, q_hi)
        if s_range[1] - s_range[0] < q_range[1] - q_range[0]:
            s_range = _grow(*s_range, q_range[1] - q_range[0], keep)
    else:
        # length runs along the face; the box's q axis is then -normal2
        length_axis = tangent
        s_range, q_range = (q_lo, q_hi), (-s_hi, -s_lo)
        if s_range[1] - s_range[0] < q_range[1] - q_range[0]:
            s_range = _grow(*s_range, q_range[1] - q_range[0])
    return _assemble(frame, length_axis, s_range, q_range, h_range, True, lower_bound)


def box_from_plane(
    subcloud: PointCloud,
    face: Plane3,
    ground: Plane3,
    min_size: float = 0.2,
    end_face_max: Optional[float] = None,
    flank_min_depth: Optional[float] = None,
) -> OrientedBox3:
    """Tightest box around ``subcloud`` that keeps ``face`` as one of its faces."""
    if len(subcloud) == 0:
        raise ValueError("cannot build a box from an empty crop")
    frame = GroundFrame.from_plane(ground)
    n3 = face.n
    normal2 = np.array([n3 @ frame.e1, n3 @ frame.e2])
    nn = float(np.hypot(*normal2))
    if nn < 1e-9:
        raise ValueError("face plane is not vertical with respect to the ground")
    normal2 /= nn
    # face line in ground coordinates: normal2 . uv = face_pos
    face_pos = -(face.offset + float(n3 @ frame.origin)) / nn
    if face_pos > 0:  # orient the normal toward the ego origin
        normal2, face_pos = -normal2, -face_pos
    uvh = frame.to_ground(subcloud.xyz)
    h_lo, h_hi = _grow(float(uvh[:, 2].min()), float(uvh[:, 2].max()), min_size, "lo")
    return _face_box(frame, uvh, normal2, face_pos, min_size, end_face_max, (h_lo, h_hi), False, flank_min_depth)


def box_from_heading(
    subcloud: PointCloud,
    yaw: Optional[float],
    ground: Plane3,
    cell_size: float,
    single_face: bool = False,
    end_face_max: Optional[float] = None,
    flank_min_depth: Optional[float] = None,
) -> OrientedBox3:
    """Box from raw points given a heading estimate; height is the highest return.

    With ``single_face`` the heading is the direction of one observed face, so a
    short face is treated as the obstacle's end (see ``box_from_plane``).
    """
    if len(subcloud) == 0:
        raise ValueError("cannot build a box from an empty crop")
    frame = GroundFrame.from_plane(ground)
    uvh = frame.to_ground(subcloud.xyz)
    h_top = max(float(uvh[:, 2].max()), cell_size)
    h_range = (0.0, h_top)
    if yaw is None:
        u_lo, u_hi = float(uvh[:, 0].min()), float(uvh[:, 0].max())
        v_lo, v_hi = float(uvh[:, 1].min()), float(uvh[:, 1].max())
        side = max(u_hi - u_lo, v_hi - v_lo, cell_size)
        u_lo, u_hi = _grow(u_lo, u_hi, side)
        v_lo, v_hi = _grow(v_lo, v_hi, side)
        return _assemble(frame, np.array([1.0, 0.0]), (u_lo, u_hi), (v_lo, v_hi), h_range, False, True)
    t = np.array([math.cos(yaw), math.sin(yaw)])
    n = np.array([-t[1], t[0]])
    if single_face:
        q = uvh[:, :2] @ n
        centroid = uvh[:, :2].mean(axis=0)
        if n @ (np.zeros(2) - centroid) < 0:
            n, q = -n, -q
        # the points trace one face; take its offset as their median
        face_pos = float(np.median(q))
        return _face_box(frame, uvh, n, face_pos, cell_size, end_face_max, h_range, True, flank_min_depth)
    centroid = uvh[:, :2].mean(axis=0)
    if end_face_max is not None:
        s_ext = float(np.ptp(uvh[:, :2] @ t))
        q_ext = float(np.ptp(uvh[:, :2] @ n))
        if max(s_ext, q_ext) <= end_face_max and abs(n @ centroid) > abs(t @ centroid):
            # both visible sides could be an end: prefer the one across the line of sight
            t, n = n, -t
    s = uvh[:, :2] @ t
    q = uvh[:, :2] @ n
    s_range = _grow(float(s.min()), float(s.max()), cell_size)
    q_range = _grow(float(q.min()), float(q.max()), cell_size)
    if end_face_max is not None and max(s_range[1] - s_range[0], q_range[1] - q_range[0]) <= end_face_max:
        # the length axis runs along the line of sight; grow it away from the sensor
        keep = "lo" if t @ centroid >= 0 else "hi"
        s_range = _grow(*s_range, q_range[1] - q_range[0], keep)
        return _assemble(frame, t, s_range, q_range, h_range, True, True)
    if s_range[1] - s_range[0] >= q_range[1] - q_range[0]:
        return _assemble(frame, t, s_range, q_range, h_range, True, True)
    return _assemble(frame, n, q_range, (-s_range[1], -s_range[0]), h_range, True, True)


# --- pipelines --------------------------------------------------------------


@dataclass
class FrontEnd:
    ground: Optional[Plane3]
    roi_cloud: PointCloud
    grid: Optional[OccupancyGrid]
    clusters: list[Cluster]


def front_end(cloud: PointCloud, config: PipelineConfig) -> FrontEnd:
    """Ground removal through cluster filtering, shared by both pipelines."""
    try:
        nonground, ground = remove_ground(cloud, config.ground)
    except ValueError as exc:
        log.warning("ground removal failed at t=%s: %s", cloud.timestamp, exc)
        return FrontEnd(None, cloud.select(np.zeros(len(cloud), dtype=bool)), None, [])
    roi = filter_by_roi(nonground, ground, config.roi)
    grid = project_to_grid(roi, ground, config.grid)
    close_r, open_r = config.morphology.radii(config.grid.cell_size)
    link = None
    if close_r >= 1:
        dilated = morphology(grid, "dilate", close_r)
        grid = morphology(dilated, "erode", close_r)
        # link clusters through the pre-closing dilation; away from the border it
        # equals dilating the closed grid, and it saves one pass
        link = dilated.cells
    if open_r >= 1:
        grid = morphology(grid, "open", open_r)
        link = None
    clusters = filter_clusters(
        connected_components(grid, config.connectivity, link_radius=close_r, link_cells=link), config.clusters
    )
    return FrontEnd(ground, roi, grid, clusters)


def _raw_ransac(config: PipelineConfig) -> RansacParams:
    return replace(config.ransac, inlier_tolerance=config.heading.raw_tolerance)


def _grid_ransac(config: PipelineConfig) -> RansacParams:
    return replace(config.ransac, inlier_tolerance=config.heading.grid_tolerance_cells * config.grid.cell_size)


def detect_16(cloud: PointCloud, config: PipelineConfig) -> DetectionFrame:
    if config.mode != SIXTEEN_PLANE:
        raise ValueError("detect_16 needs a sixteen_plane configuration")
    fe = front_end(cloud, config)
    boxes, prov = [], []
    cs = config.grid.cell_size
    for cl in fe.clusters:
        sub = crop_cloud(fe.roi_cloud, cl, fe.ground, config.crop_margin)
        if len(sub) == 0:
            continue
        try:
            face = fit_vertical_plane(sub, fe.ground, _raw_ransac(config))
            box = box_from_plane(
                sub, face.plane, fe.ground, cs, config.heading.end_face_max, config.heading.flank_min_depth
            )
            boxes.append(box)
            prov.append(Provenance.PLANE_FIT)
        except (DegenerateFitError, NoConsensusError, ValueError) as exc:
            log.debug("plane fit failed for cluster of %d cells: %s", cl.size, exc)
            boxes.append(box_from_heading(sub, None, fe.ground, cs))
            prov.append(Provenance.NO_HEADING)
    return DetectionFrame(cloud.timestamp, tuple(boxes), tuple(prov))


def estimate_grid_heading(
    cluster: Cluster, sub: PointCloud, ground: Plane3, config: PipelineConfig
) -> tuple[Optional[float], Provenance]:
    """Heading for one vehicle-like cluster: two-sides rectangle, else RANSAC line."""
    hp = config.heading
    sx, sy = cluster.sides()
    if sx > hp.visible_side_min and sy > hp.visible_side_min:
        rect = rectangle_from_hull(
            convex_hull(cluster.metric_points), hp.visible_side_min - config.grid.cell_size,
            math.radians(hp.corner_angle_tolerance_deg),
        )
        if rect is not None:
            return rect.yaw, Provenance.RECTANGLE
    if hp.use_raw_points and len(sub) >= 2:
        pts = GroundFrame.from_plane(ground).project(sub.xyz)
        params = _raw_ransac(config)
    else:
        pts = cluster.metric_points
        params = _grid_ransac(config)
    line, _ = ransac_line(pts, params)
    return line.angle, Provenance.RANSAC_LINE


def detect_8(cloud: PointCloud, config: PipelineConfig) -> DetectionFrame:
    if config.mode != EIGHT_PLANE:
        raise ValueError("detect_8 needs an eight_plane configuration")
    fe = front_end(cloud, config)
    boxes, prov = [], []
    cs = config.grid.cell_size
    for cl in fe.clusters:
        sub = crop_cloud(fe.roi_cloud, cl, fe.ground, config.crop_margin)
        if len(sub) == 0:
            continue
        yaw, source = None, Provenance.NO_HEADING
        if classify_cluster_size(cl, config.clusters) is SizeClass.VEHICLE_LIKE:
            try:
                yaw, source = estimate_grid_heading(cl, sub, fe.ground, config)
            except (DegenerateFitError, NoConsensusError) as exc:
                log.debug("heading failed for cluster of %d cells: %s", cl.size, exc)
        box = box_from_heading(
            sub, yaw, fe.ground, cs,
            single_face=source is Provenance.RANSAC_LINE,
            end_face_max=config.heading.end_face_max,
            flank_min_depth=config.heading.flank_min_depth,
        )
        boxes.append(box)
        prov.append(source)
    return DetectionFrame(cloud.timestamp, tuple(boxes), tuple(prov))


def detect(cloud: PointCloud, config: PipelineConfig) -> DetectionFrame:
    return detect_16(cloud, config) if config.mode == SIXTEEN_PLANE else detect_8(cloud, config)


# --- detection files ----------------------------------------------------------

BOX_FIELDS = (
    "cx", "cy", "cz", "length", "width", "height", "yaw", "heading_valid", "height_is_lower_bound", "provenance",
)


def frame_to_record(frame: DetectionFrame) -> dict:
    rows = []
    for box, p in zip(frame.boxes, frame.provenance):
        cx, cy, cz = box.center
        rows.append([cx, cy, cz, box.length, box.width, box.height, box.yaw,
                     box.heading_valid, box.height_is_lower_bound, Provenance(p).value])
    return {"t": frame.timestamp, "fields": list(BOX_FIELDS), "boxes": rows}


def record_to_frame(rec: dict) -> DetectionFrame:
    boxes, prov = [], []
    for row in rec["boxes"]:
        cx, cy, cz, length, width, height, yaw, hv, hlb, p = row
        boxes.append(OrientedBox3((cx, cy, cz), length, width, height, yaw, bool(hv), bool(hlb)))
        prov.append(Provenance(p))
    return DetectionFrame(float(rec["t"]), tuple(boxes), tuple(prov))


def write_detections(frames: Iterable[DetectionFrame], path) -> None:
    lines = [json.dumps(frame_to_record(f), separators=(",", ":")) for f in frames]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_detections(path) -> list[DetectionFrame]:
    frames = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                frames.append(record_to_frame(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed detection record: {exc}") from exc
    return frames
