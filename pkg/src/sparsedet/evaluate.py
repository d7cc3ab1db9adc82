"""Detection-to-truth matching and error series."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from shapely.geometry import Polygon

from .core import OrientedBox3, heading_difference, signed_heading_difference
from .detect import DetectionFrame
from .simulate import GroundTruthRecord

TIME_TOLERANCE = 1e-6


class AlignmentError(ValueError):
    """Truth and detection sequences do not share timestamps."""


@dataclass(frozen=True)
class MatchedPair:
    truth_id: int
    detection_index: int
    box: OrientedBox3
    center_distance: float


def _center_gap(a: OrientedBox3, b: OrientedBox3) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


def match_detections(truth: GroundTruthRecord, frame: DetectionFrame, max_dist: float = 3.0) -> list[MatchedPair]:
    """Greedy nearest-centre assignment, globally closest pair first."""
    cands = []
    for ob in truth.obstacles:
        for j, box in enumerate(frame.boxes):
            d = _center_gap(ob.box, box)
            if d <= max_dist:
                cands.append((d, ob.obstacle_id, j))
    cands.sort()
    used_t, used_d, pairs = set(), set(), []
    for d, tid, j in cands:
        if tid in used_t or j in used_d:
            continue
        used_t.add(tid)
        used_d.add(j)
        pairs.append(MatchedPair(tid, j, frame.boxes[j], d))
    pairs.sort(key=lambda p: p.truth_id)
    return pairs


def footprint_iou(a: OrientedBox3, b: OrientedBox3) -> float:
    pa, pb = Polygon(a.footprint()), Polygon(b.footprint())
    union = pa.union(pb).area
    return float(pa.intersection(pb).area / union) if union > 0 else 0.0


ROW_FIELDS = (
    "t", "obstacle_id", "matched", "provenance", "distance_true", "distance_est", "distance_error",
    "center_distance_true", "center_distance_est", "heading_true_deg", "heading_est_deg",
    "heading_valid", "heading_error_deg", "heading_signed_error_deg",
)


@dataclass(frozen=True)
class ErrorRow:
    t: float
    obstacle_id: int
    matched: bool
    provenance: str
    distance_true: float
    distance_est: float
    center_distance_true: float
    center_distance_est: float
    heading_true: float
    heading_est: float
    heading_valid: bool

    @property
    def distance_error(self) -> float:
        return self.distance_est - self.distance_true

    @property
    def heading_error_deg(self) -> float:
        if not (self.matched and self.heading_valid):
            return math.nan
        return math.degrees(heading_difference(self.heading_est, self.heading_true))

    @property
    def heading_signed_error_deg(self) -> float:
        if not (self.matched and self.heading_valid):
            return math.nan
        return math.degrees(signed_heading_difference(self.heading_est, self.heading_true))


@dataclass(frozen=True)
class ErrorSeries:
    rows: tuple[ErrorRow, ...]
    frame_count: int
    false_positives: int

    def matched_rows(self) -> list[ErrorRow]:
        return [r for r in self.rows if r.matched]

    @property
    def miss_count(self) -> int:
        return sum(1 for r in self.rows if not r.matched)

    @property
    def matched_count(self) -> int:
        return len(self.matched_rows())

    @property
    def mean_abs_distance_error(self) -> float:
        m = self.matched_rows()
        return float(np.mean([abs(r.distance_error) for r in m])) if m else math.nan

    @property
    def mean_signed_distance_error(self) -> float:
        m = self.matched_rows()
        return float(np.mean([r.distance_error for r in m])) if m else math.nan

    def _heading_rows(self) -> list[ErrorRow]:
        return [r for r in self.rows if r.matched and r.heading_valid]

    @property
    def mean_abs_heading_error_deg(self) -> float:
        h = self._heading_rows()
        return float(np.mean([r.heading_error_deg for r in h])) if h else math.nan

    @property
    def mean_signed_heading_error_deg(self) -> float:
        h = self._heading_rows()
        return float(np.mean([r.heading_signed_error_deg for r in h])) if h else math.nan

    def summary(self) -> dict:
        return {
            "frames": self.frame_count,
            "truth_instances": len(self.rows),
            "matched": self.matched_count,
            "misses": self.miss_count,
            "false_positives": self.false_positives,
            "mean_abs_distance_error_m": self.mean_abs_distance_error,
            "mean_signed_distance_error_m": self.mean_signed_distance_error,
            "mean_abs_heading_error_deg": self.mean_abs_heading_error_deg,
            "mean_signed_heading_error_deg": self.mean_signed_heading_error_deg,
        }


def _align(truths: Sequence[GroundTruthRecord], frames: Sequence[DetectionFrame]):
    truths = sorted(truths, key=lambda r: r.timestamp)
    frames = sorted(frames, key=lambda f: f.timestamp)
    if len(truths) != len(frames):
        raise AlignmentError(f"{len(truths)} truth records but {len(frames)} detection frames")
    for tr, fr in zip(truths, frames):
        if abs(tr.timestamp - fr.timestamp) > TIME_TOLERANCE:
            raise AlignmentError(f"truth t={tr.timestamp} does not match detection t={fr.timestamp}")
    return list(zip(truths, frames))


def compute_error_series(
    truths: Sequence[GroundTruthRecord], frames: Sequence[DetectionFrame], max_dist: float = 3.0
) -> ErrorSeries:
    """Per (frame, truth obstacle) errors; both sequences are sorted by timestamp first."""
    rows, fps = [], 0
    for truth, frame in _align(truths, frames):
        pairs = {p.truth_id: p for p in match_detections(truth, frame, max_dist)}
        fps += len(frame.boxes) - len(pairs)
        for ob in truth.obstacles:
            p = pairs.get(ob.obstacle_id)
            if p is None:
                rows.append(ErrorRow(truth.timestamp, ob.obstacle_id, False, "", ob.dist_nearest, math.nan,
                                     ob.dist_center, math.nan, ob.rel_heading, math.nan, False))
                continue
            b = p.box
            rows.append(
                ErrorRow(
                    truth.timestamp, ob.obstacle_id, True, frame.provenance[p.detection_index].value,
                    ob.dist_nearest, b.nearest_distance((0.0, 0.0)), ob.dist_center,
                    math.hypot(b.center[0], b.center[1]), ob.rel_heading, b.yaw, b.heading_valid,
                )
            )
    return ErrorSeries(tuple(rows), len(truths), fps)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if math.isnan(v) else format(v, ".9g")


def _row_values(r: ErrorRow) -> list:
    return [
        r.t, r.obstacle_id, r.matched, r.provenance, r.distance_true, r.distance_est, r.distance_error,
        r.center_distance_true, r.center_distance_est, math.degrees(r.heading_true), math.degrees(r.heading_est),
        r.heading_valid, r.heading_error_deg, r.heading_signed_error_deg,
    ]


def write_error_csv(series: ErrorSeries, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in series.rows:
        w.writerow([_fmt(v) for v in _row_values(r)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_gnuplot(series: ErrorSeries, path) -> None:
    """Whitespace table; one block per obstacle separated by two blank lines (gnuplot ``index``)."""
    cols = ("t", "distance_true", "distance_est", "heading_true_deg", "heading_est_deg", "heading_error_deg")
    blocks = []
    for oid in sorted({r.obstacle_id for r in series.rows}):
        lines = [f"# obstacle {oid}", "# " + " ".join(cols)]
        for r in series.rows:
            if r.obstacle_id != oid:
                continue
            vals = (r.t, r.distance_true, r.distance_est, math.degrees(r.heading_true),
                    math.degrees(r.heading_est), r.heading_error_deg)
            lines.append(" ".join("NaN" if math.isnan(v) else format(v, ".9g") for v in vals))
        blocks.append("\n".join(lines))
    Path(path).write_text("\n\n\n".join(blocks) + "\n", encoding="utf-8")


def format_summary(series: ErrorSeries, title: Optional[str] = None) -> str:
    s = series.summary()
    width = max(len(k) for k in s)
    lines = [title] if title else []
    for k, v in s.items():
        val = _fmt(v) if not isinstance(v, float) else ("nan" if math.isnan(v) else f"{v:.4f}")
        lines.append(f"{k.ljust(width)}  {val}")
    return "\n".join(lines)


def write_summary(series: ErrorSeries, path, title: Optional[str] = None) -> None:
    Path(path).write_text(format_summary(series, title) + "\n", encoding="utf-8")


def iou_series(
    truths: Iterable[GroundTruthRecord],
    frames_a: Sequence[DetectionFrame],
    frames_b: Sequence[DetectionFrame],
    max_dist: float = 3.0,
) -> list[float]:
    """Footprint IoU between two detectors' boxes matched to the same truth obstacle."""
    out = []
    for truth, fa, fb in zip(sorted(truths, key=lambda r: r.timestamp), frames_a, frames_b):
        pa = {p.truth_id: p for p in match_detections(truth, fa, max_dist)}
        pb = {p.truth_id: p for p in match_detections(truth, fb, max_dist)}
        for tid in sorted(pa.keys() & pb.keys()):
            out.append(footprint_iou(pa[tid].box, pb[tid].box))
    return out
