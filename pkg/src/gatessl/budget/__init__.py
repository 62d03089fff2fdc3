from .ledger import (
    BlockFlops,
    FlopReport,
    bound_loss,
    bound_margin,
    conv_macs,
    dense_flops,
    dense_total,
    dynamic_flops,
    flop_report,
    gate_overhead,
    hard_flops,
    macs_per_active_channel,
    ratio_from_active,
    sparsity_loss,
    total_gating_loss,
)

__all__ = [
    "BlockFlops",
    "FlopReport",
    "bound_loss",
    "bound_margin",
    "conv_macs",
    "dense_flops",
    "dense_total",
    "dynamic_flops",
    "flop_report",
    "gate_overhead",
    "hard_flops",
    "macs_per_active_channel",
    "ratio_from_active",
    "sparsity_loss",
    "total_gating_loss",
]
