"""Run configuration records.

Every section forbids unknown keys so that typos in a config file or a
``--set`` override fail validation instead of being silently ignored.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from ..autograd.functional import conv_output_size


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DataConfig(Section):
    """Dataset selection."""

    dataset: Literal["cifar10", "cifar100", "synthetic"] = "cifar10"
    data_dir: Optional[Path] = None
    train_subset: Optional[PositiveInt] = None
    val_subset: Optional[PositiveInt] = None
    synthetic_classes: PositiveInt = 10
    synthetic_per_class: PositiveInt = 50
    synthetic_val_per_class: PositiveInt = 10

    @property
    def num_classes(self) -> int:
        return {"cifar10": 10, "cifar100": 100}.get(self.dataset, self.synthetic_classes)


class AugmentationConfig(Section):
    """Strengths and probabilities of the two-view augmentation set."""

    crop_scale: Tuple[float, float] = (0.2, 1.0)
    crop_ratio: Tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    jitter: Tuple[float, float, float, float] = (0.4, 0.4, 0.4, 0.1)
    jitter_prob: float = Field(default=0.8, ge=0.0, le=1.0)
    grayscale_prob: float = Field(default=0.2, ge=0.0, le=1.0)
    blur_prob: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    blur_sigma: Tuple[float, float] = (0.1, 2.0)
    flip_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: Optional[int] = None

    @field_validator("crop_scale")
    @classmethod
    def _scale_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = v
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"crop scale range must satisfy 0 < lo <= hi <= 1, got {v}")
        return v

    @field_validator("crop_ratio", "blur_sigma")
    @classmethod
    def _positive_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = v
        if not (0.0 < lo <= hi):
            raise ValueError(f"range must satisfy 0 < lo <= hi, got {v}")
        return v

    @field_validator("jitter")
    @classmethod
    def _jitter_strengths(cls, v: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
        if any(s < 0 for s in v) or v[3] > 0.5:
            raise ValueError(f"jitter strengths must be >= 0 and hue <= 0.5, got {v}")
        return v

    def resolved_blur_prob(self, side: int) -> float:
        """Blur is off at CIFAR resolution unless set explicitly."""
        if self.blur_prob is not None:
            return self.blur_prob
        return 0.0 if side <= 32 else 0.5


class BackboneConfig(Section):
    """Geometry of the gated residual encoder."""

    widths: List[PositiveInt] = Field(default_factory=lambda: [16, 32, 64])
    blocks_per_stage: PositiveInt = 2
    input_side: PositiveInt = 32
    reduction: PositiveInt = 4
    kernel_size: PositiveInt = 3
    gated: bool = True

    @property
    def embedding_dim(self) -> int:
        return self.widths[-1]

    @model_validator(mode="after")
    def _check_geometry(self) -> "BackboneConfig":
        if not self.widths:
            raise ValueError("widths must name at least one stage")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.gated:
            narrow = [w for w in self.widths if w // self.reduction < 1]
            if narrow:
                raise ValueError(f"reduction {self.reduction} leaves no gate hidden units for widths {narrow}")
        side = self.input_side
        for _ in self.widths[1:]:
            side = conv_output_size(side, self.kernel_size, 2, self.kernel_size // 2)
        if side < 1:
            raise ValueError(f"input_side {self.input_side} is too small for {len(self.widths)} stages")
        return self


class HeadsConfig(Section):
    """Projector and predictor widths."""

    proj_hidden_dim: PositiveInt = 256
    proj_output_dim: PositiveInt = 256
    proj_layers: int = Field(default=2, ge=2)
    pred_hidden_dim: PositiveInt = 64


class BudgetConfig(Section):
    """Hyperparameters of the gating loss."""

    t_d: float = Field(default=0.5, gt=0.0, le=1.0)
    lambda_: float = Field(default=5.0, ge=0.0, alias="lambda")
    gamma: float = Field(default=1.0, ge=0.0)
    bound_horizon: float = Field(default=0.3, gt=0.0, le=1.0)


class TrainConfig(Section):
    """Optimisation schedule and run bookkeeping."""

    epochs: PositiveInt = 50
    batch_size: int = Field(default=128, ge=2)
    base_lr: float = Field(default=0.01, gt=0.0)
    warmup_epochs: int = Field(default=5, ge=0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    seed: int = 0
    tau_start: float = Field(default=5.0, gt=0.0)
    tau_end: float = Field(default=0.5, gt=0.0)
    checkpoint_every: PositiveInt = 10

    @model_validator(mode="after")
    def _check_warmup(self) -> "TrainConfig":
        if self.warmup_epochs >= self.epochs:
            raise ValueError(f"warmup_epochs ({self.warmup_epochs}) must be < epochs ({self.epochs})")
        return self


class EvalConfig(Section):
    """KNN protocol and post-training evaluation."""

    k: PositiveInt = 1
    temperature: float = Field(default=0.07, gt=0.0)
    batch_size: PositiveInt = 256
    after_train: bool = True


class RuntimeConfig(Section):
    """Process-level knobs."""

    threads: PositiveInt = 1
    debug: bool = False
    out_dir: Path = Path("runs/default")


class RunConfig(Section):
    """Merged view of every section; validated before any work starts."""

    data: DataConfig = Field(default_factory=DataConfig)
    augment: AugmentationConfig = Field(default_factory=AugmentationConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    heads: HeadsConfig = Field(default_factory=HeadsConfig)
    budget: BudgetConfig = Field(default_factory=BudgetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)

    @model_validator(mode="after")
    def _check_dataset_side(self) -> "RunConfig":
        if self.data.dataset != "synthetic" and self.backbone.input_side != 32:
            raise ValueError(
                f"{self.data.dataset} images are 32x32 but backbone.input_side is {self.backbone.input_side}"
            )
        return self

    @property
    def augment_seed(self) -> int:
        return self.augment.seed if self.augment.seed is not None else self.train.seed

    def to_dict(self) -> Dict[str, Any]:
        """Plain dictionary with aliases (``budget.lambda``) for YAML/JSON output."""
        return self.model_dump(mode="json", by_alias=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        return cls.model_validate(data)
