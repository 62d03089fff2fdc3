"""Projector and predictor MLPs."""

from typing import List

import numpy as np

from ..autograd import Tensor, relu
from ..models.config import HeadsConfig
from ..utils.errors import ShapeError
from .layers import BatchNorm, Linear
from .module import Module


class ProjectionHead(Module):
    """d_enc -> hidden (... -> hidden) -> d_proj; BN after every layer, the last without affine."""

    def __init__(self, d_in: int, cfg: HeadsConfig, rng: np.random.Generator):
        super().__init__()
        widths = [d_in] + [cfg.proj_hidden_dim] * (cfg.proj_layers - 1) + [cfg.proj_output_dim]
        self.d_in, self.d_out = d_in, cfg.proj_output_dim
        self.layers: List[Linear] = []
        self.norms: List[BatchNorm] = []
        for i in range(cfg.proj_layers):
            last = i == cfg.proj_layers - 1
            self.layers.append(Linear(widths[i], widths[i + 1], rng, bias=False))
            self.norms.append(BatchNorm(widths[i + 1], affine=not last))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"projector expects [B,{self.d_in}], got {x.shape}")
        for i, (layer, norm) in enumerate(zip(self.layers, self.norms)):
            x = norm(layer(x), training)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x


class PredictionHead(Module):
    """Bottleneck d_proj -> hidden -> d_proj."""

    def __init__(self, d_proj: int, cfg: HeadsConfig, rng: np.random.Generator):
        super().__init__()
        self.d_proj = d_proj
        self.reduce = Linear(d_proj, cfg.pred_hidden_dim, rng, bias=False)
        self.bn = BatchNorm(cfg.pred_hidden_dim)
        self.expand = Linear(cfg.pred_hidden_dim, d_proj, rng, bias_no_decay=True)

    def __call__(self, z: Tensor, training: bool) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.d_proj:
            raise ShapeError(f"predictor expects [B,{self.d_proj}], got {z.shape}")
        return self.expand(relu(self.bn(self.reduce(z), training)))
