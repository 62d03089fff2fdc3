"""Gated encoder, heads and the self-supervised objective."""

from .backbone import BlockGeometry, GatedBasicBlock, GatedResNet, block_geometries, gated_block_forward
from .gating import GateParams, GateState, fixed_mask, gate_logits, sample_mask_eval, sample_mask_train
from .heads import PredictionHead, ProjectionHead
from .layers import BatchNorm, Conv2d, Linear
from .module import Module, Parameter
from .objective import SimSiamModel, ViewOutputs, build_model, negcos, simsiam_loss

__all__ = [
    "BatchNorm",
    "BlockGeometry",
    "Conv2d",
    "GateParams",
    "GateState",
    "GatedBasicBlock",
    "GatedResNet",
    "Linear",
    "Module",
    "Parameter",
    "PredictionHead",
    "ProjectionHead",
    "SimSiamModel",
    "ViewOutputs",
    "block_geometries",
    "build_model",
    "fixed_mask",
    "gate_logits",
    "gated_block_forward",
    "negcos",
    "sample_mask_eval",
    "sample_mask_train",
    "simsiam_loss",
]
