"""CSV frame files, sequence directories and ring decimation."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .core import PointCloud

HEADER = ["x", "y", "z", "ring"]
FRAME_PATTERN = "frame_{:06d}.csv"
_FRAME_RE = re.compile(r"^frame_(\d{6})\.csv$")
_META_RE = re.compile(r"^#\s*(\w+)\s*=\s*(\S+)\s*$")


class FrameParseError(ValueError):
    """A frame file does not follow the CSV layout."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class FrameRecord:
    timestamp: float
    cloud: PointCloud
    truth_key: Optional[str] = None


def format_float(value: float) -> str:
    return format(float(value), ".9g")


def write_frame(record: FrameRecord, path) -> None:
    cloud = record.cloud
    buf = io.StringIO()
    buf.write(f"# timestamp={format(float(record.timestamp), '.17g')}\n")
    buf.write(f"# frame_id={cloud.frame_id}\n")
    if record.truth_key is not None:
        buf.write(f"# truth_key={record.truth_key}\n")
    buf.write(",".join(HEADER) + "\n")
    ring = cloud.ring
    for i, (x, y, z) in enumerate(cloud.xyz):
        r = "" if ring is None else str(int(ring[i]))
        buf.write(f"{format_float(x)},{format_float(y)},{format_float(z)},{r}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_frame(path) -> FrameRecord:
    path = Path(path)
    meta = {"timestamp": "0", "frame_id": "ego"}
    xyz: list[tuple[float, float, float]] = []
    rings: list[Optional[int]] = []
    header_seen = False
    has_ring_column = False
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                m = _META_RE.match(stripped)
                if m:
                    meta[m.group(1)] = m.group(2)
                continue
            fields = next(csv.reader([stripped]))
            if not header_seen:
                names = [f.strip() for f in fields]
                if names[:3] != HEADER[:3] or len(names) > 4 or (len(names) == 4 and names[3] != "ring"):
                    raise FrameParseError(path, lineno, f"unexpected header {names}")
                has_ring_column = len(names) == 4
                header_seen = True
                continue
            expected = 4 if has_ring_column else 3
            if len(fields) != expected:
                raise FrameParseError(path, lineno, f"expected {expected} fields, got {len(fields)}")
            try:
                xyz.append((float(fields[0]), float(fields[1]), float(fields[2])))
            except ValueError as exc:
                raise FrameParseError(path, lineno, f"non-numeric coordinate in row {fields}") from exc
            if has_ring_column and fields[3].strip():
                try:
                    rings.append(int(fields[3]))
                except ValueError as exc:
                    raise FrameParseError(path, lineno, f"bad ring value {fields[3]!r}") from exc
            else:
                rings.append(None)
    if not header_seen:
        raise FrameParseError(path, 1, "missing header")
    try:
        timestamp = float(meta["timestamp"])
    except ValueError as exc:
        raise FrameParseError(path, 1, f"bad timestamp {meta['timestamp']!r}") from exc
    if rings and all(r is not None for r in rings):
        ring = np.array(rings, dtype=np.int64)
    elif any(r is not None for r in rings):
        raise FrameParseError(path, 1, "ring column is only partially filled")
    else:
        ring = None
    cloud = PointCloud(np.array(xyz, dtype=np.float64).reshape(-1, 3), ring, meta["frame_id"], timestamp)
    return FrameRecord(timestamp, cloud, meta.get("truth_key"))


def frame_paths(directory) -> list[Path]:
    directory = Path(directory)
    found = []
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def read_sequence(directory) -> list[FrameRecord]:
    """All frames of a sequence directory, sorted by timestamp."""
    records = [read_frame(p) for p in frame_paths(directory)]
    records.sort(key=lambda r: r.timestamp)
    for a, b in zip(records, records[1:]):
        if not b.timestamp > a.timestamp:
            raise ValueError(f"frame timestamps not strictly increasing near t={b.timestamp}")
    return records


def write_sequence(records: Iterable[FrameRecord], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    last = None
    for i, rec in enumerate(records):
        if last is not None and not rec.timestamp > last:
            raise ValueError("frame timestamps must be strictly increasing")
        last = rec.timestamp
        p = directory / FRAME_PATTERN.format(i)
        write_frame(rec, p)
        paths.append(p)
    return paths


RingPredicate = Callable[[int], bool]


def ring_predicate(keep: Union[str, Iterable[int], RingPredicate]) -> RingPredicate:
    """Build a ring predicate from ``'even'``, ``'odd'``, ``'all'``, a ring list or a callable."""
    if callable(keep):
        return keep
    if isinstance(keep, str):
        key = keep.strip().lower()
        if key == "even":
            return lambda r: r % 2 == 0
        if key == "odd":
            return lambda r: r % 2 == 1
        if key == "all":
            return lambda r: True
        if key == "none":
            return lambda r: False
        rings = {int(tok) for tok in key.replace(";", ",").split(",") if tok.strip()}
        return lambda r: r in rings
    rings = {int(r) for r in keep}
    return lambda r: r in rings


def decimate_planes(cloud: PointCloud, keep="even") -> PointCloud:
    """Keep points whose ring satisfies ``keep`` and renumber surviving rings densely."""
    if cloud.ring is None:
        if len(cloud) == 0:
            return cloud
        raise ValueError("decimation needs ring indices on every point")
    pred = ring_predicate(keep)
    # renumber against the sensor's ring range so a ring absent from this frame
    # does not shift the indices of the others
    top = int(cloud.ring.max()) + 1 if len(cloud) else 0
    kept = np.array([r for r in range(top) if pred(r)], dtype=np.int64)
    mask = np.isin(cloud.ring, kept)
    renumber = np.searchsorted(kept, cloud.ring[mask])
    return PointCloud(cloud.xyz[mask], renumber, cloud.frame_id, cloud.timestamp)
