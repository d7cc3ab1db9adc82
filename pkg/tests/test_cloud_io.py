import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedet.cloud_io import (
    FrameParseError,
    FrameRecord,
    decimate_planes,
    read_frame,
    read_sequence,
    write_frame,
    write_sequence,
)
from sparsedet.core import PointCloud


def _cloud(n=50, rings=16, seed=0):
    g = np.random.default_rng(seed)
    return PointCloud(g.uniform(-50, 50, (n, 3)), g.integers(0, rings, n), "ego", 0.0)


class TestReadFrame:
    def test_two_rows(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z,ring\n1,2,3,0\n4,5,6,1\n")
        rec = read_frame(p)
        assert len(rec.cloud) == 2
        assert rec.cloud.ring.tolist() == [0, 1]

    def test_empty_data_section(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z,ring\n")
        assert len(read_frame(p).cloud) == 0

    def test_non_numeric_names_line(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z,ring\n1,2,3,0\nabc,2,3,0\n")
        with pytest.raises(FrameParseError) as err:
            read_frame(p)
        assert err.value.line == 3
        assert ":3:" in str(err.value)

    def test_missing_ring_column(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z\n1,2,3\n")
        assert read_frame(p).cloud.ring is None

    def test_empty_ring_values(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z,ring\n1,2,3,\n")
        assert read_frame(p).cloud.ring is None

    def test_bad_header(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(FrameParseError):
            read_frame(p)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,y,z,ring\n1,2,3\n")
        with pytest.raises(FrameParseError):
            read_frame(p)


class TestWriteFrame:
    def test_one_point_round_trip(self, tmp_path):
        c = PointCloud([[1.25, -2.5, 0.125]], [3], "ego", 0.5)
        write_frame(FrameRecord(0.5, c), tmp_path / "f.csv")
        back = read_frame(tmp_path / "f.csv")
        assert back.cloud == c and back.timestamp == 0.5

    def test_empty_round_trip(self, tmp_path):
        write_frame(FrameRecord(1.0, PointCloud(np.zeros((0, 3)))), tmp_path / "f.csv")
        assert len(read_frame(tmp_path / "f.csv").cloud) == 0

    def test_truth_key_kept(self, tmp_path):
        write_frame(FrameRecord(1.0, _cloud(3), "17"), tmp_path / "f.csv")
        assert read_frame(tmp_path / "f.csv").truth_key == "17"

    @given(
        st.lists(
            st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 31)),
            max_size=30,
        )
    )
    def test_round_trip_within_tolerance(self, tmp_path_factory, rows):
        d = tmp_path_factory.mktemp("rt")
        xyz = np.array([r[:3] for r in rows]).reshape(-1, 3)
        ring = np.array([r[3] for r in rows], dtype=np.int64) if rows else None
        c = PointCloud(xyz, ring)
        write_frame(FrameRecord(0.0, c), d / "a.csv")
        back = read_frame(d / "a.csv").cloud
        assert len(back) == len(c)
        assert np.all(np.abs(back.xyz - c.xyz) <= 1e-7)
        if rows:
            assert back.ring.tolist() == ring.tolist()
        # a second round trip is bit-exact
        write_frame(FrameRecord(0.0, back), d / "b.csv")
        assert read_frame(d / "b.csv").cloud == back


class TestSequence:
    def test_sorted_by_timestamp(self, tmp_path):
        recs = [FrameRecord(t, _cloud(5, seed=i)) for i, t in enumerate([0.0, 0.1, 0.2])]
        write_sequence(recs, tmp_path)
        # reorder the files on disk: read order must still follow timestamps
        a, c = tmp_path / "frame_000000.csv", tmp_path / "frame_000002.csv"
        ta, tc = a.read_text(), c.read_text()
        a.write_text(tc)
        c.write_text(ta)
        got = read_sequence(tmp_path)
        assert [r.timestamp for r in got] == [0.0, 0.1, 0.2]

    def test_duplicate_timestamps_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_sequence([FrameRecord(0.0, _cloud(2)), FrameRecord(0.0, _cloud(2))], tmp_path)


class TestDecimate:
    def test_even_rings_of_sixteen(self):
        c = PointCloud(np.zeros((16, 3)), np.arange(16))
        d = decimate_planes(c, "even")
        assert d.ring.tolist() == list(range(8))

    def test_keep_all_is_identity(self):
        c = _cloud()
        assert decimate_planes(c, "all") == c

    def test_keep_none_is_empty(self):
        assert len(decimate_planes(_cloud(), "none")) == 0

    def test_missing_rings_rejected(self):
        with pytest.raises(ValueError):
            decimate_planes(PointCloud([[0.0, 0.0, 0.0]]), "even")

    def test_order_preserved(self):
        c = _cloud(200)
        d = decimate_planes(c, "even")
        assert np.array_equal(d.xyz, c.xyz[c.ring % 2 == 0])

    def test_ring_list_and_callable(self):
        c = PointCloud(np.zeros((4, 3)), [0, 3, 5, 3])
        assert decimate_planes(c, [3, 5]).ring.tolist() == [0, 1, 0]
        # rings 3, 4, 5 are kept; ring 4 has no returns but still holds index 1
        assert decimate_planes(c, lambda r: r > 2).ring.tolist() == [0, 2, 0]

    @given(st.integers(0, 10_000))
    def test_even_plus_odd_is_everything(self, seed):
        c = _cloud(100, seed=seed)
        assert len(decimate_planes(c, "even")) + len(decimate_planes(c, "odd")) == len(c)

    @given(st.integers(0, 10_000))
    def test_idempotent_up_to_renumbering(self, seed):
        c = _cloud(100, seed=seed)
        once = decimate_planes(c, "all")
        assert decimate_planes(once, "all") == once
        # the same physical rings survive a second pass of a list predicate
        kept = sorted(set(c.ring.tolist()))[:4]
        d1 = decimate_planes(c, kept)
        assert np.array_equal(decimate_planes(d1, "all").xyz, d1.xyz)
