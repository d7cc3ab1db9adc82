"""Backend selection for the grid kernels.

The compiled extension is used when importable; setting
``SPARSEDET_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str) -> ModuleType:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}") from None


if _ckernels is not None and os.environ.get("SPARSEDET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "compiled"
else:
    BACKEND = "python"

_active = _BACKENDS[BACKEND]


def set_backend(name: str) -> None:
    """Switch the process-wide backend (used by the benchmark)."""
    global BACKEND, _active
    _active = get_backend(name)
    BACKEND = name


def dilate_square(grid, r: int):
    return _active.dilate_square(grid, r)


def erode_square(grid, r: int):
    return _active.erode_square(grid, r)


def label_components(grid, connectivity: int):
    return _active.label_components(grid, connectivity)
