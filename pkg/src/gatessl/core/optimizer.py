"""SGD with momentum and L2 weight decay."""

from typing import Dict, List, Mapping, Tuple

import numpy as np

from ..network.module import Parameter
from ..utils.errors import ArtifactMismatchError


class SGD:
    """v <- mu v + (g + wd p); p <- p - lr v. Parameters flagged ``no_decay`` skip wd."""

    def __init__(self, named_parameters: List[Tuple[str, Parameter]], momentum: float, weight_decay: float):
        self.params = list(named_parameters)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        for name, p in self.params:
            if p.grad is None:
                continue
            grad = p.grad
            if self.weight_decay and not p.no_decay:
                grad = grad + self.weight_decay * p.data
            v = self.velocity[name]
            v *= self.momentum
            v += grad
            p.data -= lr * v

    def decayed(self) -> List[str]:
        return [name for name, p in self.params if not p.no_decay]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {f"optim/{name}": v.copy() for name, v in self.velocity.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        provided = {k[len("optim/"):]: v for k, v in state.items() if k.startswith("optim/")}
        if set(provided) != set(self.velocity):
            raise ArtifactMismatchError("optimizer state in checkpoint does not match model parameters")
        for name, v in provided.items():
            if v.shape != self.velocity[name].shape:
                raise ArtifactMismatchError(f"optim/{name}: shape {v.shape} != {self.velocity[name].shape}")
            self.velocity[name][...] = v
