import numpy as np
import pytest

from densegan import data
from tests.conftest import make_cifar_records


def _record(label, fill):
    return data.Cifar10Record(label, bytes([fill]) * 3072)


def test_parse_labels(tmp_path):
    data.write_cifar_batch([_record(3, 0), _record(7, 255)], tmp_path / "b.bin")
    assert (tmp_path / "b.bin").stat().st_size == 2 * 3073
    assert [r.label for r in data.read_cifar_batch(tmp_path / "b.bin")] == [3, 7]


def test_pixel_endpoints():
    assert np.all(_record(0, 255).image() == 1.0)
    assert np.all(_record(0, 0).image() == -1.0)


def test_round_trip_is_byte_identical(tmp_path):
    records = make_cifar_records(5, seed=11)
    data.write_cifar_batch(records, tmp_path / "b.bin")
    assert data.read_cifar_batch(tmp_path / "b.bin") == records
    images, labels = data.read_cifar_arrays(tmp_path / "b.bin")
    assert images.shape == (5, 3, 32, 32)
    np.testing.assert_array_equal(images[2], records[2].image())
    assert list(labels) == [r.label for r in records]


def test_channel_plane_layout():
    pixels = bytes([10] * 1024 + [20] * 1024 + [30] * 1024)
    img = data.Cifar10Record(0, pixels).image()
    np.testing.assert_allclose(img[:, 0, 0], np.array([10, 20, 30]) / 127.5 - 1)


def test_corrupt_and_invalid(tmp_path):
    (tmp_path / "short.bin").write_bytes(b"\x00" * 3072)
    with pytest.raises(ValueError, match="corrupt batch file"):
        data.read_cifar_batch(tmp_path / "short.bin")
    (tmp_path / "label.bin").write_bytes(b"\x0a" + b"\x00" * 3072)
    with pytest.raises(ValueError, match="invalid label"):
        data.read_cifar_batch(tmp_path / "label.bin")
    with pytest.raises(ValueError, match="invalid label"):
        data.Cifar10Record(10, b"\x00" * 3072)


def test_load_directory(cifar_dir):
    x, y = data.load_cifar10(cifar_dir)
    assert x.shape == (20, 3, 32, 32) and y.shape == (20,)
    assert data.load_cifar10(cifar_dir, limit=6)[0].shape[0] == 6
    assert data.load_cifar10(cifar_dir, train=False)[0].shape[0] == 4
    assert data.cifar10_available(cifar_dir)


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError, match="data_batch_1.bin"):
        data.load_cifar10(tmp_path)
    assert not data.cifar10_available(tmp_path)


def test_white_image_grid(tmp_path):
    data.write_image_grid(np.ones((1, 3, 5, 4)), 1, tmp_path / "w.png")
    img = data.read_png(tmp_path / "w.png")
    assert img.shape == (5, 4, 3) and np.all(img == 255)


def test_grid_geometry(tmp_path, rng):
    images = rng.uniform(-1, 1, (4, 3, 6, 5))
    data.write_image_grid(images, 2, tmp_path / "g.png")
    img = data.read_png(tmp_path / "g.png")
    assert img.shape == (12, 10, 3)
    np.testing.assert_array_equal(img, data.image_grid(images, 2))
    np.testing.assert_array_equal(img[6:, :5], data.quantize(images[2]).transpose(1, 2, 0))


def test_partial_last_row(rng):
    grid = data.image_grid(rng.uniform(-1, 1, (5, 3, 2, 2)), 3)
    assert grid.shape == (4, 6, 3)
    assert np.all(grid[2:, 4:] == 0)


def test_grid_errors():
    with pytest.raises(ValueError):
        data.image_grid(np.zeros((0, 3, 2, 2)), 1)
    with pytest.raises(ValueError):
        data.image_grid(np.zeros((1, 3, 2, 2)), 0)


def test_synthetic_single_mode_limit():
    x = data.sample_synthetic(data.SyntheticSpec("gauss2d", components=1, std=1e-12, seed=0), 100)
    assert x.shape == (100, 2) and np.allclose(x, 0.0, atol=1e-10)


def test_synthetic_seeded():
    spec = data.SyntheticSpec("ring2d", components=8, seed=9)
    assert np.array_equal(data.sample_synthetic(spec, 50), data.sample_synthetic(spec, 50))


def test_gauss2d_means_unit_spaced():
    means = data.SyntheticSpec("gauss2d", components=4).means()
    np.testing.assert_allclose(np.diff(means[:, 0]), 1.0)


def test_ring_mode_shares():
    spec = data.SyntheticSpec("ring2d", components=8, radius=2.0, std=0.1, seed=4)
    x = data.sample_synthetic(spec, 100_000)
    nearest = np.argmin(((x[:, None, :] - spec.means()[None]) ** 2).sum(axis=2), axis=1)
    shares = np.bincount(nearest, minlength=8) / len(x)
    assert np.all(np.abs(shares - 0.125) <= 0.01)
    np.testing.assert_allclose(np.linalg.norm(spec.means(), axis=1), 2.0)


def test_synthetic_errors():
    with pytest.raises(ValueError):
        data.SyntheticSpec("moons")
    with pytest.raises(ValueError):
        data.sample_synthetic(data.SyntheticSpec(), 0)
