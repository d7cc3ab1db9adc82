import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedet.core import GROUND_Z0, Plane3, PointCloud
from sparsedet.preprocess import (
    GroundFitError,
    GroundParams,
    RoiParams,
    filter_by_roi,
    fit_plane_pca,
    remove_ground,
    segment_ground,
)


def _angle_deg(n1, n2):
    c = abs(float(np.dot(n1, n2)) / (np.linalg.norm(n1) * np.linalg.norm(n2)))
    return math.degrees(math.acos(min(1.0, c)))


def tilted_scene(seed, n_ground=3000, n_obstacles=3, noise=0.01):
    """Ground on a random tilted plane plus box-shaped clumps; returns cloud, labels, normal."""
    g = np.random.default_rng(seed)
    tilt = math.radians(g.uniform(0, 8))
    az = g.uniform(-math.pi, math.pi)
    n = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), math.cos(tilt)])
    offset = g.uniform(-0.5, 0.5)
    plane = Plane3(tuple(n), offset)
    uv = g.uniform(-25, 25, (n_ground, 2))
    # z from n . p + offset = 0
    z = -(n[0] * uv[:, 0] + n[1] * uv[:, 1] + offset) / n[2]
    ground = np.column_stack((uv, z)) + n * g.normal(0, noise, (n_ground, 1))
    obs = []
    for _ in range(n_obstacles):
        cx, cy = g.uniform(-15, 15, 2)
        m = 200
        loc = np.column_stack((cx + g.uniform(-1, 1, m), cy + g.uniform(-1, 1, m)))
        h = g.uniform(0.3, 2.0, m)  # clear of both the seed margin and the ground band
        base = -(n[0] * loc[:, 0] + n[1] * loc[:, 1] + offset) / n[2]
        obs.append(np.column_stack((loc, base)) + h[:, None] * n)
    xyz = np.vstack([ground] + obs)
    labels = np.r_[np.ones(n_ground, bool), np.zeros(len(xyz) - n_ground, bool)]
    return PointCloud(xyz), labels, n


class TestRemoveGround:
    def test_flat_ground_with_obstacles(self):
        g = np.random.default_rng(1)
        flat = np.column_stack((g.uniform(-10, 10, (1000, 2)), np.zeros(1000)))
        obst = np.column_stack((g.uniform(3, 4, (50, 2)), g.uniform(0.5, 2.0, 50)))
        cloud = PointCloud(np.vstack((flat, obst)))
        nonground, plane = remove_ground(cloud)
        assert np.allclose(plane.normal, (0.0, 0.0, 1.0), atol=1e-9)
        assert abs(plane.offset) < 1e-6
        assert len(nonground) == 50
        assert np.array_equal(np.sort(nonground.xyz, axis=0), np.sort(obst, axis=0))

    def test_tilted_plane_no_obstacles(self):
        tilt = math.radians(5.0)
        n = np.array([math.sin(tilt), 0.0, math.cos(tilt)])
        g = np.random.default_rng(2)
        uv = g.uniform(-15, 15, (2000, 2))
        z = -(n[0] * uv[:, 0]) / n[2]
        nonground, plane = remove_ground(PointCloud(np.column_stack((uv, z))))
        assert len(nonground) == 0
        assert _angle_deg(plane.normal, n) < 0.1

    def test_three_points_are_ground(self):
        cloud = PointCloud([[0, 0, 0], [1, 0, 0.1], [0, 1, -0.1]])
        params = GroundParams(num_lpr=3, seed_margin=5.0, dist_threshold=5.0)
        mask, _ = segment_ground(cloud, params)
        assert mask.all()

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            remove_ground(PointCloud(np.zeros((10, 3))))

    def test_collinear_seeds(self):
        xyz = np.column_stack((np.linspace(0, 10, 300), np.zeros(300), np.zeros(300)))
        with pytest.raises(GroundFitError):
            remove_ground(PointCloud(xyz))

    def test_fit_plane_pca_normal_up(self):
        p = fit_plane_pca(np.array([[0, 0, 1.0], [1, 0, 1.0], [0, 1, 1.0], [1, 1, 1.0]]))
        assert p.normal == pytest.approx((0.0, 0.0, 1.0)) and p.offset == pytest.approx(-1.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_random_tilted_scenes(self, seed):
        cloud, labels, n = tilted_scene(seed)
        mask, plane = segment_ground(cloud)
        assert plane.normal[2] > 0
        assert _angle_deg(plane.normal, n) < 0.5
        assert not np.any(mask & ~labels), "an obstacle point was labelled ground"
        removed = cloud.xyz[mask]
        assert np.all(np.abs(plane.signed_distance(removed)) <= GroundParams().dist_threshold)

    @given(st.integers(0, 2**31))
    def test_partition(self, seed):
        cloud, _, _ = tilted_scene(seed % 1000, n_ground=600, n_obstacles=1)
        mask, _ = segment_ground(cloud)
        nonground, _ = remove_ground(cloud)
        assert len(nonground) + int(mask.sum()) == len(cloud)

    @given(st.randoms(use_true_random=False))
    def test_permutation_invariant(self, rnd):
        cloud, _, _ = tilted_scene(7, n_ground=600, n_obstacles=1)
        perm = list(range(len(cloud)))
        rnd.shuffle(perm)
        base = segment_ground(cloud)[1]
        other = segment_ground(PointCloud(cloud.xyz[perm]))[1]
        assert np.allclose(base.normal, other.normal, atol=1e-6)
        assert base.offset == pytest.approx(other.offset, abs=1e-6)


class TestRoi:
    def test_high_point_removed(self):
        c = PointCloud([[5.0, 0.0, 5.0], [5.0, 0.0, 1.0]])
        out = filter_by_roi(c, GROUND_Z0, RoiParams(max_height=3.0))
        assert out.xyz.tolist() == [[5.0, 0.0, 1.0]]

    def test_empty(self):
        assert len(filter_by_roi(PointCloud(np.zeros((0, 3))), GROUND_Z0)) == 0

    def test_closed_upper_bound(self):
        c = PointCloud([[1.0, 0.0, 3.0]])
        assert len(filter_by_roi(c, GROUND_Z0, RoiParams(max_height=3.0))) == 1

    def test_lateral_and_forward_crop(self):
        c = PointCloud([[1.0, 25.0, 1.0], [40.0, 0.0, 1.0], [-5.0, -19.0, 1.0]])
        assert filter_by_roi(c, GROUND_Z0).xyz.tolist() == [[-5.0, -19.0, 1.0]]

    def test_non_canonical_ground_rejected(self):
        with pytest.raises(ValueError):
            filter_by_roi(PointCloud([[0.0, 0.0, 1.0]]), Plane3((0.0, 0.0, -1.0), 0.0))

    @given(st.integers(0, 10_000))
    def test_idempotent(self, seed):
        g = np.random.default_rng(seed)
        c = PointCloud(g.uniform(-40, 40, (300, 3)))
        once = filter_by_roi(c, GROUND_Z0)
        assert filter_by_roi(once, GROUND_Z0) == once
