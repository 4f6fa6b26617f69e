import numpy as np
import pytest

from radarcam.association import NeighborhoodSpec, PdaVolume
from radarcam.depth import DepthImage, FlowField, rasterize_points
from radarcam.errors import DataError
from radarcam.fileio import (
    read_float_grid,
    read_label_volumes,
    read_mer,
    read_pda_volume,
    read_pgm8,
    read_pgm16,
    write_float_grid,
    write_label_volumes,
    write_mer,
    write_pda_volume,
    write_pgm8,
    write_pgm16,
)
from radarcam.mer import MerImage


class TestDepthImage:
    def test_valid_mask_and_counts(self):
        img = DepthImage(np.array([[0.0, 2.5], [50.0, 0.0]]))
        assert img.count_valid() == 2
        assert img.width == 2 and img.height == 2

    def test_rejects_negative(self):
        with pytest.raises(DataError):
            DepthImage(np.array([[-1.0, 0.0]]))

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            DepthImage(np.array([[np.nan, 0.0]]))

    def test_clipped(self):
        img = DepthImage(np.array([[10.0, 60.0]]))
        out = img.clipped(50.0)
        assert out.values[0, 0] == 10.0 and out.values[0, 1] == 0.0


class TestRasterize:
    def test_nearest_wins(self):
        img = rasterize_points(
            np.array([3, 3]), np.array([2, 2]), np.array([7.0, 5.0]), 8, 4
        )
        assert img.values[2, 3] == 5.0

    def test_tie_breaks_on_order_key(self):
        img = rasterize_points(
            np.array([1, 1]),
            np.array([1, 1]),
            np.array([5.0, 5.0]),
            4,
            4,
            order=np.array([2, 1]),
        )
        assert img.values[1, 1] == 5.0

    def test_empty(self):
        img = rasterize_points(np.array([], int), np.array([], int), np.array([]), 4, 4)
        assert img.count_valid() == 0


class TestFlowField:
    def test_shape_validation(self):
        with pytest.raises(DataError):
            FlowField(np.zeros((4, 4, 3)), np.zeros((4, 4), bool))

    def test_sample(self):
        flow = np.zeros((4, 6, 2))
        flow[2, 3] = (1.5, -0.5)
        valid = np.zeros((4, 6), bool)
        valid[2, 3] = True
        f = FlowField(flow, valid)
        vec, ok = f.sample(np.array([3, 0]), np.array([2, 0]))
        assert np.allclose(vec[0], [1.5, -0.5]) and ok[0] and not ok[1]


class TestPgm16:
    def test_roundtrip_quantized(self, rng, tmp_path):
        values = rng.uniform(0.5, 50.0, size=(12, 9))
        values[rng.random((12, 9)) < 0.3] = 0.0
        img = DepthImage(values)
        path = tmp_path / "d.pgm"
        write_pgm16(path, img)
        back = read_pgm16(path)
        expected = np.round(values * 256.0) / 256.0
        assert np.array_equal(back.values, expected)

    def test_zero_is_invalid(self, tmp_path):
        img = DepthImage(np.array([[0.0, 1.0]]))
        path = tmp_path / "d.pgm"
        write_pgm16(path, img)
        assert read_pgm16(path).count_valid() == 1

    def test_header(self, tmp_path):
        write_pgm16(tmp_path / "d.pgm", DepthImage(np.ones((2, 3))))
        raw = (tmp_path / "d.pgm").read_bytes()
        assert raw.startswith(b"P5\n3 2\n65535\n")
        assert len(raw) == len(b"P5\n3 2\n65535\n") + 2 * 3 * 2

    def test_rejects_wrong_depth(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(DataError):
            read_pgm16(tmp_path / "bad.pgm")


class TestPgm8:
    def test_roundtrip(self, rng, tmp_path):
        gray = rng.integers(0, 256, size=(7, 5), dtype=np.uint8)
        write_pgm8(tmp_path / "g.pgm", gray)
        assert np.array_equal(read_pgm8(tmp_path / "g.pgm"), gray)


class TestFloatGrid:
    def test_roundtrip_bit_exact(self, rng, tmp_path):
        arr = rng.normal(size=(5, 7, 3)).astype(np.float32)
        write_float_grid(tmp_path / "a.fgr", arr)
        back = read_float_grid(tmp_path / "a.fgr")
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_2d_promotes_to_single_channel(self, tmp_path):
        write_float_grid(tmp_path / "a.fgr", np.ones((3, 4)))
        assert read_float_grid(tmp_path / "a.fgr").shape == (3, 4, 1)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.fgr").write_bytes(b"NOPE" + bytes(12))
        with pytest.raises(DataError):
            read_float_grid(tmp_path / "x.fgr")


class TestPdaSerialization:
    def test_volume_roundtrip(self, rng, tmp_path):
        spec = NeighborhoodSpec(3, 4, 2, 1, 1, 1)
        vol = PdaVolume(rng.random((6, 8, spec.size)).astype(np.float32), spec)
        write_pda_volume(tmp_path / "p.pdav", vol)
        back = read_pda_volume(tmp_path / "p.pdav")
        assert back.spec == spec
        assert np.array_equal(back.values, vol.values)

    def test_label_bitset_roundtrip(self, rng, tmp_path):
        spec = NeighborhoodSpec(3, 4, 2, 1, 1, 1)
        labels = PdaVolume(
            (rng.random((6, 8, spec.size)) < 0.4).astype(np.float32), spec
        )
        weights = rng.random((6, 8, spec.size)) < 0.7
        write_label_volumes(tmp_path / "l.pdab", labels, weights)
        back_l, back_w = read_label_volumes(tmp_path / "l.pdab")
        assert back_l.spec == spec
        assert np.array_equal(back_l.values, labels.values)
        assert np.array_equal(back_w, weights)


class TestMerSerialization:
    def test_roundtrip(self, rng, tmp_path):
        channels = rng.uniform(0, 50, size=(6, 8, 3)).astype(np.float32)
        mer = MerImage(channels, (0.5, 0.7, 0.9))
        write_mer(tmp_path / "m.mer", mer)
        back = read_mer(tmp_path / "m.mer")
        assert back.thresholds == pytest.approx(mer.thresholds)
        assert np.array_equal(
            back.channels.astype(np.float32), mer.channels.astype(np.float32)
        )
