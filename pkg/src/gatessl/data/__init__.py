"""Datasets and augmentation."""

from pathlib import Path
from typing import Optional

from ..models.config import RunConfig
from ..utils.errors import ConfigurationError
from .augment import TwoViewAugmenter, augment_view, two_views
from .cifar import ImageSet, LabeledImage, load_cifar, load_image_set, to_record
from .synthetic import make_synthetic, make_synthetic_set


def load_split(config: RunConfig, split: str, data_dir: Optional[Path] = None) -> ImageSet:
    """Dataset split named by the run configuration, subset applied."""
    data = config.data
    limit = data.train_subset if split == "train" else data.val_subset
    if data.dataset == "synthetic":
        per_class = data.synthetic_per_class if split == "train" else data.synthetic_val_per_class
        image_set = make_synthetic_set(
            data.synthetic_classes, per_class, config.backbone.input_side, config.train.seed, split
        )
        return image_set.subset(limit)
    root = data_dir or data.data_dir
    if root is None:
        raise ConfigurationError(f"{data.dataset} needs a dataset location; pass --data-dir", field="--data-dir")
    return load_image_set(Path(root), data.dataset, split, limit)


__all__ = [
    "ImageSet",
    "LabeledImage",
    "TwoViewAugmenter",
    "augment_view",
    "load_cifar",
    "load_image_set",
    "load_split",
    "make_synthetic",
    "make_synthetic_set",
    "to_record",
    "two_views",
]
