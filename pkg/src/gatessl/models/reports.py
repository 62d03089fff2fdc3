"""Records written to disk by evaluation, analysis and FLOP counting."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class BlockBudget(BaseModel):
    """Measured cost of one gated block, averaged over a split."""

    name: str
    channels: int
    dense_macs: int = Field(..., description="Conv MACs with every channel on")
    overhead_macs: int = Field(..., description="Gate MACs per sample")
    active_mean: float
    macs_mean: float = Field(..., description="Conv plus gate MACs per sample")
    ratio: float = Field(..., description="Conv MACs / dense MACs")
    ratio_with_overhead: float


class BudgetReport(BaseModel):
    """Per-split FLOP budget as realised by the sparse executor."""

    samples: int
    blocks: List[BlockBudget] = Field(default_factory=list)
    dense_macs: int
    gated_macs_mean: float = Field(..., description="Mean conv MACs over gated blocks")
    overhead_macs: int
    ungated_macs: int = 0
    ratio: float
    overhead_ratio: float
    ratio_with_overhead: float
    flops_reduction: float
    histogram: List[int] = Field(default_factory=list)
    histogram_edges: List[float] = Field(default_factory=list)


class BlockUsage(BaseModel):
    """Channel categories of one block."""

    name: str
    channels: int
    always_off: int
    always_on: int
    dynamic: int


class KnnResult(BaseModel):
    k: int
    temperature: float
    accuracy: float
    train_size: int
    val_size: int


class RunSummary(BaseModel):
    """Headline numbers of a checkpoint on a split."""

    t_d: Optional[float] = None
    gated: bool = True
    knn_acc: Optional[float] = None
    k: int = 1
    flop_ratio: float
    conv_ratio: float
    flops_reduction: float
    gated_macs: float
    blocks: List[BlockUsage] = Field(default_factory=list)
    checkpoint: Optional[str] = None
    epoch: Optional[int] = None
    split: str = "val"

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class FlopCountBlock(BaseModel):
    name: str
    F_dense: int
    F_dynamic_mean: float
    ratio: float


class FlopCount(BaseModel):
    """Ledger view of a checkpoint: what the loss sees, per block and in total."""

    blocks: List[FlopCountBlock] = Field(default_factory=list)
    F_dense: int
    F_dynamic_mean: float
    ratio: float
    gate_overhead: int
    ungated_flops: int
    samples: int


class TradeoffRow(BaseModel):
    """One line of the accuracy against FLOPs table."""

    t_d: Optional[float]
    knn_acc: float
    flop_ratio: float
    gated_macs: float
    flops_reduction: float

    def as_row(self) -> List[Any]:
        return ["baseline" if self.t_d is None else self.t_d, self.knn_acc, self.flop_ratio,
                self.gated_macs, self.flops_reduction]
