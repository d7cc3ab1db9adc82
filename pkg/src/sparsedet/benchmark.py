"""Single-frame latency of both pipelines under each kernel backend."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from . import kernels
from .core import PointCloud
from .detect import EIGHT_PLANE, SIXTEEN_PLANE, PipelineConfig, detect
from .simulate import LidarModel, ScenarioParams, generate_scenario, raycast_frame


@dataclass(frozen=True)
class BenchmarkResult:
    backend: str
    mode: str
    points: int
    median_ms: float
    min_ms: float
    boxes: int


def benchmark_frame(seed: int = 0, lidar: Optional[LidarModel] = None, t: float = 15.0) -> PointCloud:
    """Multi-obstacle scene inside tall walls, so nearly every ray returns (about 29k points at 16 rings)."""
    scene = generate_scenario("multi_obstacle", ScenarioParams(barriers=True))
    return raycast_frame(scene, lidar or LidarModel.uniform(16), t, rng_seed=[seed, 0]).cloud


def time_detector(cloud: PointCloud, config: PipelineConfig, repeat: int = 10, warmup: int = 1) -> tuple[list[float], int]:
    for _ in range(warmup):
        detect(cloud, config)
    samples, n_boxes = [], 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        frame = detect(cloud, config)
        samples.append((time.perf_counter() - t0) * 1000.0)
        n_boxes = len(frame.boxes)
    return samples, n_boxes


def run_benchmark(
    configs: dict,
    cloud: Optional[PointCloud] = None,
    backends: Optional[Sequence[str]] = None,
    repeat: int = 10,
) -> list[BenchmarkResult]:
    """Time ``detect`` for each (backend, mode); ``configs`` maps mode -> PipelineConfig."""
    cloud = cloud if cloud is not None else benchmark_frame()
    backends = list(backends) if backends is not None else kernels.available_backends()
    previous = kernels.BACKEND
    results = []
    try:
        for be in backends:
            kernels.set_backend(be)
            for mode in (SIXTEEN_PLANE, EIGHT_PLANE):
                samples, n = time_detector(cloud, configs[mode], repeat)
                results.append(BenchmarkResult(be, mode, len(cloud), statistics.median(samples), min(samples), n))
    finally:
        kernels.set_backend(previous)
    return results


def format_results(results: Sequence[BenchmarkResult]) -> str:
    lines = [f"{'backend':<10}{'mode':<15}{'points':>8}{'median_ms':>11}{'min_ms':>9}{'boxes':>7}"]
    for r in results:
        lines.append(f"{r.backend:<10}{r.mode:<15}{r.points:>8}{r.median_ms:>11.2f}{r.min_ms:>9.2f}{r.boxes:>7}")
    by = {(r.backend, r.mode): r.median_ms for r in results}
    for mode in (SIXTEEN_PLANE, EIGHT_PLANE):
        if ("compiled", mode) in by and ("python", mode) in by:
            lines.append(f"speedup {mode}: {by[('python', mode)] / by[('compiled', mode)]:.1f}x")
    return "\n".join(lines)
