"""INI-style configuration: packaged defaults overlaid with an optional user file."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .detect import EIGHT_PLANE, MODES, SIXTEEN_PLANE, HeadingParams, MorphologyParams, PipelineConfig
from .fit import RansacParams
from .grid import ClusterFilterParams, GridConfig
from .preprocess import GroundParams, RoiParams
from .simulate import LidarModel, ScenarioParams


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def default_text() -> str:
    return resources.files(__package__).joinpath("defaults.config").read_text(encoding="utf-8")


def _coerce(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated values")
            return tuple(_coerce(p, d, where) for p, d in zip(parts, default))
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build(cls, section: configparser.SectionProxy, skip: tuple[str, ...] = ()):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    defaults = cls()
    kwargs = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"[{section.name}] {key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section.name}] {exc}") from exc


_SECTIONS = {
    "pipeline": {"mode", "crop_margin", "connectivity"},
    "ground": None, "roi": None, "grid.sixteen_plane": None, "grid.eight_plane": None,
    "morphology": None, "clusters": None, "ransac": None, "heading": None,
    "decimation": {"keep"},
    "lidar": {"rings", "fov_deg", "azimuth_step_deg", "max_range", "range_noise_sigma", "mount_height"},
    "scenario": None,
    "simulate": {"frames", "seed"},
    "eval": {"max_match_distance"},
}


@dataclass(frozen=True)
class Settings:
    mode: str
    crop_margin: float
    connectivity: int
    ground: GroundParams
    roi: RoiParams
    grids: dict
    morphology: MorphologyParams
    clusters: ClusterFilterParams
    ransac: RansacParams
    heading: HeadingParams
    decimation_keep: Union[str, tuple[int, ...]]
    lidar: LidarModel
    scenario: ScenarioParams
    frames: int
    seed: int
    max_match_distance: float

    def pipeline_config(self, mode: Optional[str] = None) -> PipelineConfig:
        mode = mode or self.mode
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        return PipelineConfig(
            mode=mode, ground=self.ground, roi=self.roi, grid=self.grids[mode], clusters=self.clusters,
            ransac=self.ransac, heading=self.heading, morphology=self.morphology,
            crop_margin=self.crop_margin, connectivity=self.connectivity,
        )


def _parse_keep(raw: str):
    raw = raw.strip()
    if raw in ("even", "odd", "all", "none"):
        return raw
    try:
        return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"[decimation] keep: {raw!r} is not even/odd/all or a ring list") from exc


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """Packaged defaults, overridden by ``path`` when given (which must exist)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(default_text(), source="defaults.config")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            cp.read_string(p.read_text(encoding="utf-8"), source=str(p))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        allowed = _SECTIONS[name]
        if allowed is not None:
            extra = set(cp[name].keys()) - allowed
            if extra:
                raise ConfigError(f"[{name}] unknown key(s) {sorted(extra)}")

    pl = cp["pipeline"]
    mode = pl.get("mode", SIXTEEN_PLANE).strip()
    if mode not in MODES:
        raise ConfigError(f"[pipeline] mode must be one of {MODES}")
    crop_margin = _coerce(pl.get("crop_margin", "0.10"), 0.0, "[pipeline] crop_margin")
    connectivity = _coerce(pl.get("connectivity", "8"), 0, "[pipeline] connectivity")

    lid = cp["lidar"]
    try:
        lidar = LidarModel.uniform(
            _coerce(lid["rings"], 0, "[lidar] rings"),
            _coerce(lid["fov_deg"], (0.0, 0.0), "[lidar] fov_deg"),
            azimuth_step=math.radians(_coerce(lid["azimuth_step_deg"], 0.0, "[lidar] azimuth_step_deg")),
            max_range=_coerce(lid["max_range"], 0.0, "[lidar] max_range"),
            range_noise_sigma=_coerce(lid["range_noise_sigma"], 0.0, "[lidar] range_noise_sigma"),
            mount_height=_coerce(lid["mount_height"], 0.0, "[lidar] mount_height"),
        )
    except ValueError as exc:
        raise ConfigError(f"[lidar] {exc}") from exc

    sim = cp["simulate"]
    frames = _coerce(sim.get("frames", "300"), 0, "[simulate] frames")
    if frames < 1:
        raise ConfigError("[simulate] frames must be >= 1")

    return Settings(
        mode=mode,
        crop_margin=crop_margin,
        connectivity=connectivity,
        ground=_build(GroundParams, cp["ground"]),
        roi=_build(RoiParams, cp["roi"]),
        grids={
            SIXTEEN_PLANE: _build(GridConfig, cp["grid.sixteen_plane"]),
            EIGHT_PLANE: _build(GridConfig, cp["grid.eight_plane"]),
        },
        morphology=_build(MorphologyParams, cp["morphology"]),
        clusters=_build(ClusterFilterParams, cp["clusters"]),
        ransac=_build(RansacParams, cp["ransac"]),
        heading=_build(HeadingParams, cp["heading"]),
        decimation_keep=_parse_keep(cp["decimation"].get("keep", "even")),
        lidar=lidar,
        scenario=_build(ScenarioParams, cp["scenario"]),
        frames=frames,
        seed=_coerce(sim.get("seed", "0"), 0, "[simulate] seed"),
        max_match_distance=_coerce(cp["eval"].get("max_match_distance", "3.0"), 0.0, "[eval] max_match_distance"),
    )
