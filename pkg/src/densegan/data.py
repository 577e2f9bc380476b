"""Dataset ingestion and image output.

CIFAR-10 is read from the published binary batches (``data_batch_1.bin`` ..
``data_batch_5.bin``, ``test_batch.bin``): each record is one label byte
followed by 3072 pixel bytes (R, G, B planes of 32x32, row-major).
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

RECORD_BYTES = 3073
PIXEL_BYTES = 3072
RECORDS_PER_BATCH = 10000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class Cifar10Record:
    label: int
    pixels: bytes

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise ValueError("invalid label")
        if len(self.pixels) != PIXEL_BYTES:
            raise ValueError(f"expected {PIXEL_BYTES} pixel bytes, got {len(self.pixels)}")

    def image(self) -> np.ndarray:
        """Pixels as a [3, 32, 32] float array in [-1, 1]."""
        return to_unit_range(np.frombuffer(self.pixels, dtype=np.uint8).reshape(3, 32, 32))


def to_unit_range(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 127.5 - 1.0


def _parse(buf: bytes) -> np.ndarray:
    if len(buf) == 0 or len(buf) % RECORD_BYTES:
        raise ValueError("corrupt batch file")
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    if arr[:, 0].max() > 9:
        raise ValueError("invalid label")
    return arr


def read_cifar_batch(path) -> list[Cifar10Record]:
    arr = _parse(Path(path).read_bytes())
    return [Cifar10Record(int(row[0]), row[1:].tobytes()) for row in arr]


def read_cifar_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized read: (images [N,3,32,32] in [-1,1], labels [N])."""
    arr = _parse(Path(path).read_bytes())
    return to_unit_range(arr[:, 1:].reshape(-1, 3, 32, 32)), arr[:, 0].astype(np.int64)


def write_cifar_batch(records, path) -> None:
    payload = b"".join(bytes([r.label]) + r.pixels for r in records)
    atomic_write_bytes(path, payload)


def load_cifar10(data_dir, train: bool = True, limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    data_dir = Path(data_dir)
    names = TRAIN_FILES if train else (TEST_FILE,)
    missing = [n for n in names if not (data_dir / n).exists()]
    if missing:
        raise FileNotFoundError(
            f"CIFAR-10 binary batches not found: expected {data_dir / missing[0]} "
            "(run scripts/fetch_cifar10.sh)"
        )
    images, labels = [], []
    total = 0
    for name in names:
        x, y = read_cifar_arrays(data_dir / name)
        images.append(x)
        labels.append(y)
        total += len(y)
        if limit is not None and total >= limit:
            break
    x, y = np.concatenate(images), np.concatenate(labels)
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return x, y


def cifar10_available(data_dir) -> bool:
    return data_dir is not None and (Path(data_dir) / TRAIN_FILES[0]).exists()


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "gauss2d"
    components: int = 4
    radius: float = 2.0
    std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gauss2d", "ring2d"):
            raise ValueError(f"unknown synthetic dataset {self.kind!r}")
        if self.components < 1:
            raise ValueError("components must be positive")

    def means(self) -> np.ndarray:
        k = self.components
        if self.kind == "gauss2d":
            xs = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
            return np.stack([xs, np.zeros(k)], axis=1)
        theta = 2.0 * np.pi * np.arange(k) / k
        return self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def sample_synthetic(spec: SyntheticSpec, n: int, rng=None) -> np.ndarray:
    """``n`` i.i.d. 2-D points from a mixture with equally weighted modes.

    With no ``rng`` a fresh generator seeded from ``spec.seed`` is used, so
    repeated calls return the same matrix.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    which = rng.integers(0, spec.components, size=n)
    return spec.means()[which] + spec.std * rng.standard_normal((n, 2))


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def quantize(images: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to uint8 [0, 255]."""
    return np.clip(np.rint((np.asarray(images) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def image_grid(images: np.ndarray, cols: int) -> np.ndarray:
    """Tile [N, C, H, W] images row-major into an [rows*H, cols*W, C] uint8 array."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] < 1:
        raise ValueError("expected a non-empty [N, C, H, W] batch")
    if cols < 1:
        raise ValueError("cols must be positive")
    n, c, h, w = images.shape
    rows = -(-n // cols)
    grid = np.zeros((rows * h, cols * w, c), dtype=np.uint8)
    q = quantize(images).transpose(0, 2, 3, 1)
    for i in range(n):
        r, col = divmod(i, cols)
        grid[r * h:(r + 1) * h, col * w:(col + 1) * w] = q[i]
    return grid


def write_image_grid(images, cols: int, path) -> None:
    data = images.data if hasattr(images, "data") and not isinstance(images, np.ndarray) else images
    grid = image_grid(np.asarray(data), cols)
    img = Image.fromarray(grid if grid.shape[2] == 3 else grid[:, :, 0])
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))
