"""Small class-separable image sets for fast end-to-end runs."""

from typing import List

import numpy as np

from ..autograd import get_default_dtype
from ..utils.errors import DataError
from .cifar import ImageSet, LabeledImage

NOISE_STD = 0.08
SPLIT_STREAMS = {"train": 1, "val": 2}


def _class_patterns(num_classes: int, side: int, rng: np.random.Generator) -> np.ndarray:
    """A colour plus an oriented stripe per class, blended 50/50."""
    ys, xs = np.mgrid[0:side, 0:side] / max(side - 1, 1)
    patterns = np.empty((num_classes, 3, side, side))
    for c in range(num_classes):
        colour = rng.uniform(0.15, 0.85, size=3)
        angle = rng.uniform(0.0, np.pi)
        freq = rng.uniform(1.0, 3.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xs * np.cos(angle) + ys * np.sin(angle)) + phase)
        patterns[c] = 0.5 * colour[:, None, None] + 0.5 * wave[None] * rng.uniform(0.3, 1.0, size=(3, 1, 1))
    return patterns


def make_synthetic(
    num_classes: int, per_class: int, side: int, seed: int, split: str = "train"
) -> List[LabeledImage]:
    """``num_classes * per_class`` noisy copies of per-class base patterns.

    The base patterns depend only on ``seed``; the noise also depends on the
    split so that train and val hold different samples of the same classes.
    Labels cycle 0, 1, ..., C-1, 0, 1, ... so any leading subset stays balanced.
    """
    if num_classes < 1 or per_class < 1 or side < 1:
        raise DataError(f"synthetic dataset needs positive sizes, got {(num_classes, per_class, side)}")
    if split not in SPLIT_STREAMS:
        raise DataError(f"unknown split {split!r}")
    patterns = _class_patterns(num_classes, side, np.random.default_rng([seed, 0]))
    noise_rng = np.random.default_rng([seed, SPLIT_STREAMS[split]])
    dtype = get_default_dtype()

    images = []
    for _ in range(per_class):
        for label in range(num_classes):
            noisy = patterns[label] + noise_rng.normal(0.0, NOISE_STD, size=patterns[label].shape)
            images.append(LabeledImage(pixels=np.clip(noisy, 0.0, 1.0).astype(dtype), label=label))
    return images


def make_synthetic_set(num_classes: int, per_class: int, side: int, seed: int, split: str = "train") -> ImageSet:
    images = make_synthetic(num_classes, per_class, side, seed, split)
    return ImageSet.from_images(images, num_classes, name=f"synthetic/{split}")
