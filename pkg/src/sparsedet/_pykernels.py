"""Pure numpy/Python grid kernels, used when the compiled module is unavailable."""
from __future__ import annotations

from collections import deque

import numpy as np

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def _window_count(grid: np.ndarray, r: int, axis: int) -> np.ndarray:
    """Number of ones in the (2r+1) window centred on each cell along ``axis``."""
    a = np.moveaxis(grid.astype(np.int32, copy=False), axis, -1)
    n = a.shape[-1]
    csum = np.zeros(a.shape[:-1] + (n + 1,), dtype=np.int32)
    np.cumsum(a, axis=-1, out=csum[..., 1:])
    idx = np.arange(n)
    hi = np.minimum(idx + r + 1, n)
    lo = np.maximum(idx - r, 0)
    counts = csum[..., hi] - csum[..., lo]
    return np.moveaxis(counts, -1, axis)


def dilate_square(grid, r: int) -> np.ndarray:
    g = np.ascontiguousarray(grid, dtype=np.uint8)
    rows = _window_count(g, r, 1) > 0
    return (_window_count(rows, r, 0) > 0).astype(np.uint8)


def erode_square(grid, r: int) -> np.ndarray:
    g = np.ascontiguousarray(grid, dtype=np.uint8)
    full = 2 * r + 1
    rows = _window_count(g, r, 1) == full
    return (_window_count(rows, r, 0) == full).astype(np.uint8)


def label_components(grid, connectivity: int):
    g = np.asarray(grid, dtype=bool)
    rows, cols = g.shape
    labels = np.zeros((rows, cols), dtype=np.int32)
    offsets = _N8 if connectivity == 8 else _N4
    occupied = {(int(i), int(j)) for i, j in np.argwhere(g)}
    current = 0
    for i, j in np.argwhere(g):
        i, j = int(i), int(j)
        if labels[i, j]:
            continue
        current += 1
        labels[i, j] = current
        queue = deque([(i, j)])
        while queue:
            ci, cj = queue.popleft()
            for di, dj in offsets:
                cell = (ci + di, cj + dj)
                if cell in occupied and not labels[cell]:
                    labels[cell] = current
                    queue.append(cell)
    return labels, current
