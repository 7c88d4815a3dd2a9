import numpy as np
import pytest

from mvfad.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mvfad.data import (
    DatasetSample,
    discover_samples,
    load_point_grid,
    load_sample,
    resize_grid,
    save_point_grid,
)
from mvfad.errors import CheckpointError, ChecksumMismatchError, VersionMismatchError
from mvfad.geometry import PointCloudGrid
from mvfad.imgio import load_image, load_map16, load_mask, save_image, save_map16, save_mask


def random_grid(h=12, w=10, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(h, w, 3)).astype(np.float32).astype(np.float64)
    pts[..., 2] = np.where(rng.random((h, w)) < 0.8,
                           rng.uniform(0.5, 2.0, (h, w)).astype(np.float32), 0.0)
    return PointCloudGrid(points=pts, valid=pts[..., 2] > 0)


class TestPointGridFormat:
    def test_roundtrip_bit_exact(self, tmp_path):
        grid = random_grid()
        path = tmp_path / "grid.pcg"
        save_point_grid(path, grid)
        loaded = load_point_grid(path)
        np.testing.assert_array_equal(loaded.valid, grid.valid)
        np.testing.assert_array_equal(loaded.points[loaded.valid], grid.points[grid.valid])
        # Re-save reproduces identical bytes.
        path2 = tmp_path / "grid2.pcg"
        save_point_grid(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_names_file_and_offset(self, tmp_path):
        path = tmp_path / "bad.pcg"
        path.write_bytes(b"NOTAGRID" + b"\x00" * 32)
        with pytest.raises(ValueError, match="byte offset 0") as exc:
            load_point_grid(path)
        assert "bad.pcg" in str(exc.value)

    def test_truncated_payload_reports_offset(self, tmp_path):
        grid = random_grid()
        path = tmp_path / "trunc.pcg"
        save_point_grid(path, grid)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 64])
        with pytest.raises(ValueError, match="truncated"):
            load_point_grid(path)


class TestImageIO:
    def test_png_roundtrip_quantized(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((9, 11, 3))
        path = tmp_path / "img.png"
        save_image(path, img)
        loaded = load_image(path)
        assert loaded.shape == (9, 11, 3)
        assert np.abs(loaded - img).max() <= 0.5 / 255 + 1e-9

    def test_ppm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.random((5, 7, 3))
        path = tmp_path / "img.ppm"
        save_image(path, img)
        loaded = load_image(path)
        assert np.abs(loaded - img).max() <= 0.5 / 255 + 1e-9

    def test_mask_roundtrip_exact(self, tmp_path):
        mask = np.random.default_rng(3).random((8, 6)) > 0.5
        path = tmp_path / "mask.pgm"
        save_mask(path, mask)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_map16_roundtrip_png_and_pgm(self, tmp_path):
        rng = np.random.default_rng(4)
        amap = rng.random((6, 6))
        for name in ("map.png", "map.pgm"):
            path = tmp_path / name
            save_map16(path, amap)
            loaded = load_map16(path)
            assert np.abs(loaded - amap).max() <= 0.5 / 65535 + 1e-9


class TestCheckpoint:
    def make(self, seed=5):
        rng = np.random.default_rng(seed)
        params = {
            "decoder.out_proj.weight": rng.normal(size=(16, 48)).astype(np.float32),
            "image_adapter.mlp.0.bias": rng.normal(size=(4,)).astype(np.float32),
        }
        return Checkpoint(model_config={"seed": 1}, params=params,
                          train_config={"epochs": 3}, prompts={"normal": ["a {}"]})

    def test_roundtrip_bit_exact(self, tmp_path):
        ckpt = self.make()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        assert loaded.model_config == ckpt.model_config
        assert loaded.train_config == ckpt.train_config
        assert loaded.prompts == ckpt.prompts
        assert set(loaded.params) == set(ckpt.params)
        for name in ckpt.params:
            np.testing.assert_array_equal(loaded.params[name], ckpt.params[name])
            assert loaded.params[name].dtype == np.float32

    def test_truncated_file_fails_checksum(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.make())
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(ChecksumMismatchError):
            load_checkpoint(path)

    def test_corrupted_payload_fails_checksum(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.make())
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumMismatchError):
            load_checkpoint(path)

    def test_version_bump_rejected(self, tmp_path):
        import hashlib
        import struct

        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.make())
        data = bytearray(path.read_bytes())
        struct.pack_into("<I", data, 8, 99)  # bump the version field
        body = bytes(data[:-32])
        data[-32:] = hashlib.sha256(body).digest()  # keep the checksum valid
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_not_a_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "garbage.ckpt"
        path.write_bytes(b"not a checkpoint at all, far too short")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestDatasetLayout:
    def write_sample(self, directory, stem, size=16, seed=0, with_mask=False):
        rng = np.random.default_rng(seed)
        directory.mkdir(parents=True, exist_ok=True)
        save_image(directory / f"{stem}.png", rng.random((size, size, 3)))
        pts = rng.uniform(-1, 1, size=(size, size, 3))
        pts[..., 2] = rng.uniform(0.5, 1.5, (size, size))
        save_point_grid(directory / f"{stem}.pcg", PointCloudGrid(pts, pts[..., 2] > 0))
        if with_mask:
            save_mask(directory / f"{stem}_mask.pgm", rng.random((size, size)) > 0.7)

    def test_discover_and_load(self, tmp_path):
        root = tmp_path / "data"
        self.write_sample(root / "widget" / "train" / "good", "000", seed=1)
        self.write_sample(root / "widget" / "train" / "good", "001", seed=2)
        self.write_sample(root / "widget" / "test" / "good", "000", seed=3)
        self.write_sample(root / "widget" / "test" / "dent", "000", seed=4, with_mask=True)

        splits = discover_samples(root, "widget")
        assert len(splits["train"]) == 2
        assert len(splits["test"]) == 2
        test_labels = sorted((s.label, s.mask_path is not None) for s in splits["test"])
        assert test_labels == [(0, False), (1, True)]

        anomalous = next(s for s in splits["test"] if s.label == 1)
        image, grid, mask = load_sample(anomalous, image_size=24)
        assert image.shape == (24, 24, 3)
        assert (grid.height, grid.width) == (24, 24)
        assert mask.shape == (24, 24) and mask.dtype == bool

    def test_missing_grid_rejected(self, tmp_path):
        root = tmp_path / "data"
        d = root / "widget" / "train" / "good"
        d.mkdir(parents=True)
        save_image(d / "000.png", np.zeros((4, 4, 3)))
        with pytest.raises(FileNotFoundError):
            discover_samples(root, "widget")

    def test_unknown_class_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            discover_samples(tmp_path, "nope")

    def test_resize_grid_nearest_keeps_measurements(self):
        grid = random_grid(h=16, w=16, seed=9)
        small = resize_grid(grid, 8)
        # Every output point must be one of the input points (no interpolation).
        src = {tuple(p) for p in grid.points.reshape(-1, 3)}
        assert all(tuple(p) in src for p in small.points.reshape(-1, 3))
