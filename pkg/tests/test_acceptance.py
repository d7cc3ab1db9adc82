"""End-to-end acceptance checks on simulated scenes.

Each test records one PASS/FAIL line with the measured value and its bound;
the lines are printed in the "acceptance" section at the end of the run.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import report, static_scene, yaw_error_deg
from sparsedet import kernels
from sparsedet.benchmark import benchmark_frame, run_benchmark
from sparsedet.cli import DETECTIONS_FILE, ERRORS_CSV, ERRORS_DAT, main
from sparsedet.cloud_io import decimate_planes
from sparsedet.detect import EIGHT_PLANE, SIXTEEN_PLANE, PipelineConfig, Provenance, detect_8, detect_16
from sparsedet.evaluate import compute_error_series, iou_series
from sparsedet.simulate import (
    LidarModel,
    ScenarioParams,
    box_surface_distance,
    cast_rays,
    frame_times,
    generate_scenario,
    ground_truth_at,
    raycast_frame,
    simulate_sequence,
)

FRAMES = 300
SEED = 0
TESTS = Path(__file__).parent


@pytest.fixture(scope="module")
def lidar():
    return LidarModel.uniform(16, range_noise_sigma=0.01)


@pytest.fixture(scope="module")
def approach(lidar):
    t0 = time.perf_counter()
    scene = generate_scenario("approach")
    seq = simulate_sequence(scene, lidar, frame_times(scene, count=FRAMES), seed=SEED)
    truths = [gt for _, gt in seq]
    t_sim = time.perf_counter() - t0
    t1 = time.perf_counter()
    d16 = [detect_16(rec.cloud, PipelineConfig.sixteen_plane()) for rec, _ in seq]
    s16 = compute_error_series(truths, d16)
    t_16 = time.perf_counter() - t1
    d8 = [detect_8(decimate_planes(rec.cloud, "even"), PipelineConfig.eight_plane()) for rec, _ in seq]
    s8 = compute_error_series(truths, d8)
    return dict(scene=scene, truths=truths, d16=d16, d8=d8, s16=s16, s8=s8, runtime=t_sim + t_16)


def test_criterion_1_approach_sixteen_plane(approach):
    s = approach["s16"]
    in_band = [r for r in s.rows if 3.0 <= r.distance_true <= 18.0]
    misses = sum(not r.matched for r in in_band)
    ok = report(
        1,
        s.mean_abs_distance_error <= 0.30 and s.mean_abs_heading_error_deg <= 2.0 and misses == 0
        and approach["runtime"] < 60.0,
        f"detect_16 approach: mean |distance error| {s.mean_abs_distance_error:.4f} m (<= 0.30), "
        f"mean |heading error| {s.mean_abs_heading_error_deg:.3f} deg (<= 2.0), "
        f"misses in [3, 18] m {misses}/{len(in_band)} (== 0), 300-frame run {approach['runtime']:.1f} s (< 60)",
    )
    assert ok


def test_criterion_2_approach_eight_plane(approach):
    s8, s16 = approach["s8"], approach["s16"]
    worse = (s8.mean_abs_distance_error > s16.mean_abs_distance_error
             and s8.mean_abs_heading_error_deg > s16.mean_abs_heading_error_deg)
    ok = report(
        2,
        s8.mean_abs_distance_error <= 0.45 and s8.mean_abs_heading_error_deg <= 4.0 and worse,
        f"detect_8 on even rings: mean |distance error| {s8.mean_abs_distance_error:.4f} m (<= 0.45), "
        f"mean |heading error| {s8.mean_abs_heading_error_deg:.3f} deg (<= 4.0), "
        f"strictly worse than detect_16 ({s16.mean_abs_distance_error:.4f} m, "
        f"{s16.mean_abs_heading_error_deg:.3f} deg): {worse}",
    )
    assert ok


def test_criterion_3_chicane_heading(lidar):
    scene = generate_scenario("chicane")
    seq = simulate_sequence(scene, lidar, frame_times(scene, count=FRAMES), seed=SEED)
    frames = [detect_16(rec.cloud, PipelineConfig.sixteen_plane()) for rec, _ in seq]
    s = compute_error_series([gt for _, gt in seq], frames)
    rows = [r for r in s.rows if abs(math.degrees(r.heading_true)) <= 40.0 + 1e-9]
    bad = [r for r in rows if not (r.matched and r.heading_valid)]
    worst = max((r.heading_error_deg for r in rows if r.matched and r.heading_valid), default=math.nan)
    peak = max(abs(math.degrees(r.heading_true)) for r in rows)
    ok = report(
        3,
        not bad and worst <= 3.0,
        f"chicane detect_16 over {len(rows)} frames with |yaw| <= 40 deg (peak {peak:.2f}): "
        f"max heading error {worst:.3f} deg (<= 3.0), frames without a valid heading {len(bad)} (== 0)",
    )
    assert ok


def test_criterion_4_branch_coverage(lidar):
    out = {}
    for name, yaw, branch, bound in (("two sides", math.radians(45), Provenance.RECTANGLE, 3.0),
                                     ("broadside", math.pi / 2, Provenance.RANSAC_LINE, 4.0)):
        scene = static_scene([(11.0, 0.0, yaw, (4.5, 2.0, 2.2))])
        cloud = decimate_planes(raycast_frame(scene, lidar, 0.5, rng_seed=[SEED, 0]).cloud, "even")
        frame = detect_8(cloud, PipelineConfig.eight_plane())
        truth = ground_truth_at(scene, 0.5).obstacles[0].box
        err = yaw_error_deg(frame.boxes[0].yaw, truth.yaw) if frame.boxes else math.inf
        prov = frame.provenance[0].value if frame.boxes else "none"
        out[name] = (len(frame.boxes) == 1 and frame.provenance[0] is branch and err <= bound, prov, err, bound)
    ok = report(
        4,
        all(v[0] for v in out.values()),
        "; ".join(f"{k}: provenance {v[1]}, yaw error {v[2]:.3f} deg (<= {v[3]})" for k, v in out.items())
        + " at 0.05 m cells",
    )
    assert ok


PROPERTY_SUITES = [
    "test_grid.py::TestMorphology::test_algebra",
    "test_grid.py::TestMorphology::test_duality_in_interior",
    "test_grid.py::TestMorphology::test_against_brute_force",
    "test_grid.py::TestComponents::test_flood_fill_oracle",
    "test_fit.py::TestConvexHull::test_random_against_oracle",
    "test_fit.py::TestRansacLine::test_clean_data_zero_residual",
    "test_fit.py::TestRansacLine::test_deterministic",
    "test_fit.py::TestRectangle::test_parallelogram_and_relabel",
    "test_preprocess.py::TestRemoveGround::test_random_tilted_scenes",
    "test_simulate.py::TestRaycast::test_surface_membership",
]


def test_criterion_5_property_suites(approach, lidar):
    r = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_SUITES],
        cwd=TESTS, capture_output=True, text=True,
    )
    tail = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr.strip()[-200:]
    # surface membership on every point of the 300-frame approach run
    scene, off = approach["scene"], 0
    for i, t in enumerate(frame_times(scene, count=FRAMES)):
        res = cast_rays(scene, lidar, t, rng_seed=[SEED, i])
        tol = np.abs(res.noise) + 1e-9
        g = res.hit == -1
        off += int(np.count_nonzero(np.abs(res.xyz[g, 2]) > tol[g]))
        for k, ob in enumerate(scene.obstacles):
            m = res.hit == k
            pose = ob.trajectory.at(t)
            half = np.array([ob.box.length, ob.box.width, ob.box.height]) / 2
            c = np.array([pose.x, pose.y, ob.box.center[2]])
            off += int(np.count_nonzero(box_surface_distance(res.xyz[m], c, pose.yaw, half) > tol[m]))
    ok = report(
        5,
        r.returncode == 0 and off == 0,
        f"property suites ({len(PROPERTY_SUITES)} groups): {tail}; "
        f"approach points off their surface by more than |noise| + 1e-9: {off}",
    )
    assert ok, r.stdout[-3000:]


def test_criterion_6_cross_pipeline_iou(approach):
    ious = np.array(iou_series(approach["truths"], approach["d16"], approach["d8"]))
    frac = float(np.mean(ious >= 0.6)) if ious.size else 0.0
    ok = report(
        6,
        ious.size > 0 and frac >= 0.90,
        f"footprint IoU detect_16 vs detect_8 over {ious.size} matched frames: "
        f"{100 * frac:.1f}% >= 0.6 (needs >= 90%), min {ious.min():.3f}, median {np.median(ious):.3f}",
    )
    assert ok


def test_criterion_7_latency():
    if "compiled" not in kernels.available_backends():
        report(7, False, "compiled kernels not built; latency not measured on the compiled backend")
        pytest.fail("compiled backend unavailable")
    cloud = benchmark_frame(SEED)
    configs = {SIXTEEN_PLANE: PipelineConfig.sixteen_plane(), EIGHT_PLANE: PipelineConfig.eight_plane()}
    res = {r.mode: r for r in run_benchmark(configs, cloud, ["compiled"], repeat=10)}
    t16, t8 = res[SIXTEEN_PLANE].median_ms, res[EIGHT_PLANE].median_ms
    ok = report(
        7,
        t16 < 100.0 and t8 < 50.0,
        f"single thread, {len(cloud)} points, compiled kernels: detect_16 median {t16:.1f} ms (< 100), "
        f"detect_8 median {t8:.1f} ms (< 50)",
    )
    assert ok


def test_criterion_8_reproducible_pipeline(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["pipeline", "--scenario", "approach", "--seed", str(SEED), "--output", str(d)]) for d in dirs]
    names = (DETECTIONS_FILE, ERRORS_CSV, ERRORS_DAT)
    same = {n: (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names}
    ok = report(
        8,
        codes == [0, 0] and all(same.values()),
        "two pipeline runs with seed 0: " + ", ".join(f"{n} {'identical' if v else 'DIFFERENT'}" for n, v in same.items()),
    )
    assert ok
