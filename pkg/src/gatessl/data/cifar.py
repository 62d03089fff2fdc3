"""CIFAR-10 / CIFAR-100 binary ingestion.

CIFAR-10 records are 3073 bytes (label, then 3072 channel-planar pixel bytes,
R then G then B, each plane row-major 32x32). CIFAR-100 records are 3074 bytes
(coarse label, fine label, pixels); the fine label is the class.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autograd import get_default_dtype
from ..utils.errors import DataError, DatasetFormatError
from ..utils.logger import Logger

SIDE = 32
PIXEL_BYTES = 3 * SIDE * SIDE

VARIANTS = {
    "cifar10": {
        "dir": "cifar-10-batches-bin",
        "label_bytes": 1,
        "classes": 10,
        "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
        "val": ["test_batch.bin"],
    },
    "cifar100": {
        "dir": "cifar-100-binary",
        "label_bytes": 2,
        "classes": 100,
        "coarse_classes": 20,
        "train": ["train.bin"],
        "val": ["test.bin"],
    },
}


@dataclass
class LabeledImage:
    """One image with values in [0, 1], shape [3, S, S]."""

    pixels: np.ndarray
    label: int
    coarse_label: Optional[int] = None

    @property
    def side(self) -> int:
        return int(self.pixels.shape[-1])


@dataclass
class ImageSet:
    """A dataset split held as one array; uint8 storage is rescaled on access."""

    data: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def side(self) -> int:
        return int(self.data.shape[-1])

    def images(self, indices: Union[Sequence[int], np.ndarray, slice, None] = None) -> np.ndarray:
        """Float images [B, 3, S, S] in the default precision."""
        chunk = self.data if indices is None else self.data[indices]
        dtype = get_default_dtype()
        if chunk.dtype == np.uint8:
            return chunk.astype(dtype) / dtype.type(255)
        return chunk.astype(dtype, copy=False)

    def __getitem__(self, index: int) -> LabeledImage:
        return LabeledImage(pixels=self.images([index])[0], label=int(self.labels[index]))

    def subset(self, limit: Optional[int]) -> "ImageSet":
        """The first ``limit`` records (deterministic)."""
        if limit is None or limit >= len(self):
            return self
        return ImageSet(self.data[:limit], self.labels[:limit], self.num_classes, self.name)

    @classmethod
    def from_images(cls, images: Sequence[LabeledImage], num_classes: int, name: str = "") -> "ImageSet":
        if not images:
            raise DataError("cannot build a dataset from zero images")
        data = np.stack([img.pixels for img in images])
        labels = np.array([img.label for img in images], dtype=np.int64)
        return cls(data, labels, num_classes, name)


def record_size(variant: str) -> int:
    return VARIANTS[_check_variant(variant)]["label_bytes"] + PIXEL_BYTES


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise DataError(f"unknown CIFAR variant {variant!r}; expected one of {sorted(VARIANTS)}")
    return variant


def parse_records(
    raw: bytes, variant: str, path: Optional[Path] = None
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Decode a whole batch file into (uint8 pixels [N,3,32,32], labels, coarse labels)."""
    layout = VARIANTS[_check_variant(variant)]
    size = layout["label_bytes"] + PIXEL_BYTES
    if len(raw) % size != 0:
        cut = len(raw) - len(raw) % size
        raise DatasetFormatError(
            f"file length {len(raw)} is not a multiple of the {size}-byte record size; truncated record",
            path=str(path) if path else None,
            offset=cut,
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, size)
    label_col = layout["label_bytes"] - 1
    labels = records[:, label_col].astype(np.int64)
    _check_labels(labels, layout["classes"], size, label_col, path)

    coarse = None
    if layout["label_bytes"] == 2:
        coarse = records[:, 0].astype(np.int64)
        _check_labels(coarse, layout["coarse_classes"], size, 0, path)

    pixels = records[:, layout["label_bytes"]:].reshape(-1, 3, SIDE, SIDE)
    return pixels, labels, coarse


def _check_labels(labels: np.ndarray, classes: int, size: int, column: int, path: Optional[Path]) -> None:
    bad = np.flatnonzero(labels >= classes)
    if bad.size:
        first = int(bad[0])
        raise DatasetFormatError(
            f"label {int(labels[first])} out of range for {classes} classes",
            path=str(path) if path else None,
            offset=first * size + column,
        )


def resolve_root(data_dir: Path, variant: str) -> Path:
    """Accept either the extracted batch directory or its parent."""
    data_dir = Path(data_dir)
    layout = VARIANTS[_check_variant(variant)]
    for candidate in (data_dir / layout["dir"], data_dir):
        if all((candidate / name).exists() for name in layout["train"] + layout["val"]):
            return candidate
    for candidate in (data_dir / layout["dir"], data_dir):
        if any((candidate / name).exists() for name in layout["train"] + layout["val"]):
            return candidate
    raise DataError(f"no {variant} binary files found under {data_dir} (looked for {layout['dir']}/)")


def read_split(data_dir: Path, variant: str, split: str) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    if split not in ("train", "val"):
        raise DataError(f"unknown split {split!r}; expected 'train' or 'val'")
    root = resolve_root(data_dir, variant)
    pixels, labels, coarse = [], [], []
    for name in VARIANTS[variant][split]:
        path = root / name
        if not path.exists():
            raise DataError(f"missing {variant} file {path}")
        p, l, c = parse_records(path.read_bytes(), variant, path)
        pixels.append(p)
        labels.append(l)
        if c is not None:
            coarse.append(c)
    Logger.debug(f"Read {sum(len(l) for l in labels)} {variant} {split} records from {root}")
    return (
        np.concatenate(pixels),
        np.concatenate(labels),
        np.concatenate(coarse) if coarse else None,
    )


def load_cifar(data_dir: Path, variant: str, split: str) -> List[LabeledImage]:
    """Load a split as LabeledImages with pixels scaled by 1/255."""
    pixels, labels, coarse = read_split(data_dir, variant, split)
    dtype = get_default_dtype()
    scale = dtype.type(255)
    return [
        LabeledImage(
            pixels=pixels[i].astype(dtype) / scale,
            label=int(labels[i]),
            coarse_label=int(coarse[i]) if coarse is not None else None,
        )
        for i in range(len(labels))
    ]


def load_image_set(data_dir: Path, variant: str, split: str, limit: Optional[int] = None) -> ImageSet:
    """Load a split compactly (uint8) for training and evaluation."""
    pixels, labels, _ = read_split(data_dir, variant, split)
    image_set = ImageSet(pixels, labels, VARIANTS[variant]["classes"], name=f"{variant}/{split}")
    return image_set.subset(limit)


def to_record(image: LabeledImage, variant: str) -> bytes:
    """Serialise an image back into its binary record."""
    layout = VARIANTS[_check_variant(variant)]
    if image.pixels.shape != (3, SIDE, SIDE):
        raise DataError(f"CIFAR records hold 3x32x32 images, got {image.pixels.shape}")
    body = np.rint(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes()
    if layout["label_bytes"] == 2:
        return bytes([image.coarse_label or 0, image.label]) + body
    return bytes([image.label]) + body
