"""PFM and KITTI-PNG codecs: handcrafted byte fixtures and round trips."""

import struct

import numpy as np
import pytest
from PIL import Image

from dbstereo.data.dataset import SyntheticDataset, load_sample, write_synthetic_dataset
from dbstereo.data.formats import (
    KittiPngError,
    PfmColorError,
    PfmHeaderError,
    PfmPayloadError,
    load_kitti_disparity_png,
    load_pfm,
    write_kitti_disparity_png,
    write_pfm,
)
from dbstereo.data.synthetic import SyntheticConfig, photo_consistency_fraction


class TestPfm:
    def test_handcrafted_single_pixel_little_endian(self, tmp_path):
        path = tmp_path / "one.pfm"
        path.write_bytes(b"Pf\n1 1\n-1.0\n" + struct.pack("<f", 2.5))
        data, scale = load_pfm(path)
        np.testing.assert_array_equal(data, [[2.5]])
        assert scale == 1.0

    def test_handcrafted_big_endian_positive_scale(self, tmp_path):
        path = tmp_path / "be.pfm"
        path.write_bytes(b"Pf\n2 1\n1.0\n" + struct.pack(">2f", 3.25, -7.5))
        data, scale = load_pfm(path)
        np.testing.assert_array_equal(data, [[3.25, -7.5]])
        assert scale == 1.0

    def test_rows_flipped_on_load(self, tmp_path):
        # bottom row stored first: payload rows (0,0) then (1,1) decode
        # top-to-bottom as [[1,1],[0,0]]
        path = tmp_path / "rows.pfm"
        path.write_bytes(b"Pf\n2 2\n-1.0\n" + struct.pack("<4f", 0.0, 0.0, 1.0, 1.0))
        data, _ = load_pfm(path)
        np.testing.assert_array_equal(data, [[1.0, 1.0], [0.0, 0.0]])

    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(8, 8)).astype(np.float32)
        path = tmp_path / "rt.pfm"
        write_pfm(path, data)
        back, _ = load_pfm(path)
        np.testing.assert_array_equal(back, data)

    def test_color_magic_rejected(self, tmp_path):
        path = tmp_path / "color.pfm"
        path.write_bytes(b"PF\n1 1\n-1.0\n" + struct.pack("<3f", 1, 2, 3))
        with pytest.raises(PfmColorError):
            load_pfm(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"Qx\n1 1\n-1.0\n" + struct.pack("<f", 1.0))
        with pytest.raises(PfmHeaderError):
            load_pfm(path)

    def test_malformed_dims_rejected(self, tmp_path):
        path = tmp_path / "dims.pfm"
        path.write_bytes(b"Pf\nxx 1\n-1.0\n" + struct.pack("<f", 1.0))
        with pytest.raises(PfmHeaderError):
            load_pfm(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc.pfm"
        path.write_bytes(b"Pf\n2 2\n-1.0\n" + struct.pack("<2f", 1.0, 2.0))
        with pytest.raises(PfmPayloadError):
            load_pfm(path)

    def test_error_kinds_are_distinct(self):
        assert not issubclass(PfmColorError, PfmHeaderError)
        assert not issubclass(PfmHeaderError, PfmPayloadError)
        assert not issubclass(PfmPayloadError, PfmColorError)


class TestKittiPng:
    def test_format_definition_values(self, tmp_path):
        stored = np.array([[256, 0], [12800, 1]], dtype=np.uint16)
        path = tmp_path / "k.png"
        Image.fromarray(stored).save(path)
        disp, valid = load_kitti_disparity_png(path)
        assert disp[0, 0] == 1.0 and valid[0, 0]
        assert disp[0, 1] == 0.0 and not valid[0, 1]
        assert disp[1, 0] == 50.0 and valid[1, 0]
        assert disp[1, 1] == pytest.approx(1 / 256)

    def test_roundtrip_after_quantization(self, tmp_path):
        rng = np.random.default_rng(1)
        disp = rng.uniform(0.5, 100.0, size=(16, 16)).astype(np.float32)
        quantized = np.round(disp * 256.0) / 256.0
        path = tmp_path / "rt.png"
        write_kitti_disparity_png(path, disp)
        back, valid = load_kitti_disparity_png(path)
        assert valid.all()
        np.testing.assert_array_equal(back, quantized.astype(np.float32))

    def test_invalid_mask_written_as_zero(self, tmp_path):
        disp = np.full((4, 4), 10.0, dtype=np.float32)
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        path = tmp_path / "mask.png"
        write_kitti_disparity_png(path, disp, mask)
        back, valid = load_kitti_disparity_png(path)
        assert not valid[0, 0] and back[0, 0] == 0.0
        assert valid[1:].all()

    def test_8bit_png_rejected(self, tmp_path):
        path = tmp_path / "8bit.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)
        with pytest.raises(KittiPngError):
            load_kitti_disparity_png(path)

    def test_multichannel_png_rejected(self, tmp_path):
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path)
        with pytest.raises(KittiPngError):
            load_kitti_disparity_png(path)


class TestDatasetDirectory:
    def test_layout_and_reload(self, tmp_path):
        cfg = SyntheticConfig(height=64, width=96, d_max=16, seed=9)
        indices = write_synthetic_dataset(tmp_path, 3, cfg)
        assert indices == [0, 1, 2]
        for i in indices:
            assert (tmp_path / f"{i}_left.png").exists()
            assert (tmp_path / f"{i}_right.png").exists()
            assert (tmp_path / f"{i}_disp.pfm").exists()
        assert (tmp_path / "manifest.json").exists()

        ds = SyntheticDataset(tmp_path)
        assert len(ds) == 3
        assert ds.config == cfg
        # 8-bit PNG quantization must not break exact photo-consistency
        for i in range(3):
            assert photo_consistency_fraction(ds[i]) == 1.0

    def test_mask_survives_roundtrip(self, tmp_path):
        from dbstereo.data.synthetic import generate_random_dot_pair

        cfg = SyntheticConfig(height=64, width=96, d_max=16, seed=12)
        write_synthetic_dataset(tmp_path, 1, cfg)
        original = generate_random_dot_pair(cfg)
        loaded = load_sample(tmp_path, 0)
        np.testing.assert_array_equal(loaded.valid_mask, original.valid_mask)
        np.testing.assert_array_equal(
            loaded.disparity_gt[loaded.valid_mask], original.disparity_gt[original.valid_mask]
        )

    def test_split_is_disjoint_and_ordered(self, tmp_path):
        cfg = SyntheticConfig(height=32, width=64, d_max=8, seed=1)
        write_synthetic_dataset(tmp_path, 5, cfg)
        train, holdout = SyntheticDataset(tmp_path).split(0.4)
        assert len(train) == 3 and len(holdout) == 2
