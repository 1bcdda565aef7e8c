"""Dataset loading: MNIST IDX files, synthetic 2-D sets, seeded batching"""
import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from config import DataConfig
from errors import ConsistencyError, FormatError, TruncatedFileError, ValidationError

IMAGE_MAGIC = 0x00000803  # 2051
LABEL_MAGIC = 0x00000801  # 2049

PathLike = Union[str, Path]


@dataclass
class Dataset:
    """
    Images as rows in [0, 1]; labels optional

    `affine` records (offset, scale) for synthetic sets so that
    raw = offset + scale * stored.
    """

    images: np.ndarray
    labels: Optional[np.ndarray] = None
    split: str = "train"
    image_shape: Tuple[int, ...] = ()
    affine: Optional[Tuple[np.ndarray, float]] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 2:
            raise ValidationError(f"images must be a 2-D matrix, got {self.images.shape}")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValidationError("pixel values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.images.shape[0],):
                raise ConsistencyError(f"{self.labels.shape[0]} labels for {self.images.shape[0]} images")
        if not self.image_shape:
            self.image_shape = (self.images.shape[1],)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    def take(self, index, split: Optional[str] = None) -> "Dataset":
        return replace(self, images=self.images[index],
                       labels=None if self.labels is None else self.labels[index],
                       split=split or self.split)


# ── IDX ──────────────────────────────────────────────────────────

GZIP_MAGIC = b"\x1f\x8b"


def _read_bytes(path: PathLike) -> bytes:
    """Raw file contents, gunzipped when the file starts with the gzip magic"""
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _parse_idx(raw: bytes, magic: int, n_dims: int, path: PathLike) -> Tuple[Tuple[int, ...], np.ndarray]:
    header_size = 4 + 4 * n_dims
    if len(raw) < header_size:
        raise TruncatedFileError(f"{path}: header needs {header_size} bytes, file has {len(raw)}")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: magic {found} (expected {magic})")
    dims = struct.unpack(">" + "I" * n_dims, raw[4:header_size])
    expected = int(np.prod(dims))
    payload = raw[header_size:]
    if len(payload) < expected:
        raise TruncatedFileError(f"{path}: payload has {len(payload)} bytes, header announces {expected}")
    return dims, np.frombuffer(payload, dtype=np.uint8, count=expected)


def load_idx(images_path: PathLike, labels_path: Optional[PathLike] = None, split: str = "train") -> Dataset:
    """
    Parse big-endian IDX image (and optional label) files; pixels scaled by 1/255

    Raises:
        FormatError: wrong magic number or corrupt gzip stream
        TruncatedFileError: file shorter than its header
        ConsistencyError: image and label counts differ
    """
    dims, pixels = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, 3, images_path)
    count, rows, cols = dims
    images = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        (n_labels,), raw_labels = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, 1, labels_path)
        if n_labels != count:
            raise ConsistencyError(f"{images_path} has {count} images but {labels_path} has {n_labels} labels")
        labels = raw_labels.astype(np.int64)
    return Dataset(images=images, labels=labels, split=split, image_shape=(rows, cols))


def write_idx(dataset: Dataset, images_path: PathLike, labels_path: Optional[PathLike] = None) -> None:
    """Inverse of load_idx; pixels re-quantized with round(255 * v)"""
    if len(dataset.image_shape) == 2:
        rows, cols = dataset.image_shape
    else:
        rows, cols = 1, dataset.dim
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, len(dataset), rows, cols))
        f.write(pixels.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ValidationError("dataset has no labels to write")
        with open(labels_path, "wb") as f:
            f.write(struct.pack(">II", LABEL_MAGIC, len(dataset)))
            f.write(dataset.labels.astype(np.uint8).tobytes())


# ── synthetic ────────────────────────────────────────────────────

def _rescale(points: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, float]]:
    """Uniform-scale affine map into [0, 1]^d (aspect ratio kept)"""
    offset = points.min(axis=0)
    scale = float((points.max(axis=0) - offset).max()) or 1.0
    return np.clip((points - offset) / scale, 0.0, 1.0), (offset, scale)


def make_toy_2d(kind: str, n: int, seed: int) -> Dataset:
    """
    Desk-scale 2-D datasets

    gaussian_mixture_8: 8 equal-weight components, means on a circle of
    radius 2, std 0.1. two_moons: interleaved half circles, noise 0.05.
    Labels are the component / moon index.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if kind == "gaussian_mixture_8":
        labels = rng.integers(0, 8, size=n)
        angles = 2.0 * np.pi * labels / 8.0
        means = 2.0 * np.stack((np.cos(angles), np.sin(angles)), axis=1)
        points = means + 0.1 * rng.standard_normal((n, 2))
    elif kind == "two_moons":
        labels = rng.integers(0, 2, size=n)
        t = rng.uniform(0.0, np.pi, size=n)
        outer = np.stack((np.cos(t), np.sin(t)), axis=1)
        inner = np.stack((1.0 - np.cos(t), 0.5 - np.sin(t)), axis=1)
        points = np.where(labels[:, None] == 0, outer, inner) + 0.05 * rng.standard_normal((n, 2))
    else:
        raise ValidationError(f"unknown toy dataset {kind!r}")
    images, affine = _rescale(points)
    return Dataset(images=images, labels=labels, image_shape=(2,), affine=affine)


# ── splits and batching ──────────────────────────────────────────

def split_validation(dataset: Dataset, fraction: float = 0.1) -> Tuple[Dataset, Dataset]:
    """Hold out the last `fraction` of rows (before any shuffling)"""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"validation fraction must be in (0, 1), got {fraction}")
    n_val = max(1, int(round(len(dataset) * fraction)))
    if n_val >= len(dataset):
        raise ValidationError("dataset too small to hold out a validation split")
    cut = len(dataset) - n_val
    return dataset.take(slice(0, cut), "train"), dataset.take(slice(cut, None), "validation")


def load_dataset(data: DataConfig, seed: int = 0, test: bool = False) -> Dataset:
    """
    Dataset described by the config

    Synthetic test sets are drawn with a seed offset so they never coincide
    with the training draw.
    """
    if data.kind == "mnist":
        images = data.test_images if test else data.images
        labels = data.test_labels if test else data.labels
        if not images:
            raise ValidationError("no test images configured" if test else "data.images is required")
        dataset = load_idx(images, labels, split="test" if test else "train")
    else:
        dataset = make_toy_2d(data.kind, data.n_samples, seed + 1000 if test else seed)
        if test:
            dataset.split = "test"
    if data.subset is not None and not test:
        dataset = dataset.take(slice(0, data.subset))
    return dataset


class BatchIterator:
    """
    Seeded per-epoch shuffling with drop-last batching

    The permutation for epoch e is drawn from default_rng([seed, e]), so
    epochs differ but a rerun reproduces every batch.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int = 0):
        if len(dataset) == 0:
            raise ValidationError("cannot batch an empty dataset")
        if batch_size < 1 or batch_size > len(dataset):
            raise ValidationError(f"batch size {batch_size} invalid for {len(dataset)} examples")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0

    @property
    def batches_per_epoch(self) -> int:
        return len(self.dataset) // self.batch_size

    def permutation(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))

    def batches(self) -> Iterator[np.ndarray]:
        """One epoch of full batches; advances the epoch counter"""
        order = self.permutation(self.epoch)
        self.epoch += 1
        for start in range(0, self.batches_per_epoch * self.batch_size, self.batch_size):
            yield self.dataset.images[order[start:start + self.batch_size]]

    def __iter__(self) -> Iterator[np.ndarray]:
        return self.batches()
