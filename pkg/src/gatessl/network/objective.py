"""Symmetric stop-gradient cosine objective and the model that feeds it."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..autograd import Tensor, l2_normalize, mean, mul, stop_gradient, sum_
from ..models.config import RunConfig
from ..utils.errors import ShapeError
from .backbone import GatedResNet, check_mode
from .gating import GateState
from .heads import PredictionHead, ProjectionHead
from .module import Module


def negcos(a: Tensor, b: Tensor) -> Tensor:
    """Batch mean of the negative cosine similarity of matching rows."""
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"negcos needs two [B,d] tensors of equal shape, got {a.shape} and {b.shape}")
    return -mean(sum_(mul(l2_normalize(a), l2_normalize(b)), axis=1))


def simsiam_loss(p1: Tensor, p2: Tensor, z1: Tensor, z2: Tensor, stop_gradient_targets: bool = True) -> Tensor:
    """0.5 D(p1, SG(z2)) + 0.5 D(p2, SG(z1))."""
    t1 = stop_gradient(z1) if stop_gradient_targets else z1
    t2 = stop_gradient(z2) if stop_gradient_targets else z2
    return negcos(p1, t2) * 0.5 + negcos(p2, t1) * 0.5


@dataclass
class ViewOutputs:
    """Everything one forward of a view pair produces."""

    p1: Tensor
    p2: Tensor
    z1: Tensor
    z2: Tensor
    states1: List[GateState]
    states2: List[GateState]


class SimSiamModel(Module):
    """Encoder, projector and predictor under one parameter namespace."""

    def __init__(self, config: RunConfig, rng: np.random.Generator):
        super().__init__()
        self.encoder = GatedResNet(config.backbone, rng)
        self.projector = ProjectionHead(config.backbone.embedding_dim, config.heads, rng)
        self.predictor = PredictionHead(config.heads.proj_output_dim, config.heads, rng)

    @property
    def geometries(self):
        return self.encoder.geometries

    def project(self, embedding: Tensor, mode: str) -> Tensor:
        return self.projector(embedding, check_mode(mode))

    def predict(self, z: Tensor, mode: str) -> Tensor:
        return self.predictor(z, check_mode(mode))

    def forward_views(
        self,
        x1: Tensor,
        x2: Tensor,
        mode: str,
        rng: Optional[np.random.Generator] = None,
        tau: float = 1.0,
        straight_through: bool = True,
    ) -> ViewOutputs:
        """Each view goes through the encoder separately so BN sees per-view statistics."""
        e1, states1 = self.encoder.encode(x1, mode, rng, tau, straight_through)
        e2, states2 = self.encoder.encode(x2, mode, rng, tau, straight_through)
        z1, z2 = self.project(e1, mode), self.project(e2, mode)
        return ViewOutputs(
            p1=self.predict(z1, mode),
            p2=self.predict(z2, mode),
            z1=z1,
            z2=z2,
            states1=states1,
            states2=states2,
        )

    def head_flops(self) -> int:
        """MACs of the projector and predictor per sample."""
        total = sum(layer.weight.data.size for layer in self.projector.layers)
        total += self.predictor.reduce.weight.data.size + self.predictor.expand.weight.data.size
        return int(total)


def build_model(config: RunConfig, seed: Optional[int] = None) -> SimSiamModel:
    """Freshly initialised model; the init stream is derived from the run seed."""
    seed = config.train.seed if seed is None else seed
    return SimSiamModel(config, np.random.default_rng([seed, 1]))
