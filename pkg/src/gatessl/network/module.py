"""Parameter containers.

A ``Module`` discovers its parameters and child modules from its attributes
in definition order, so names are stable across runs and can key checkpoint
entries directly (``stage1.block0.conv1.weight``).
"""

from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from ..autograd import Tensor, get_default_dtype
from ..utils.errors import ArtifactMismatchError


class Parameter(Tensor):
    """A trainable leaf tensor. ``no_decay`` exempts it from weight decay."""

    def __init__(self, data: np.ndarray, no_decay: bool = False, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name, dtype=get_default_dtype())
        self.no_decay = no_decay


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class for anything that owns parameters or buffers."""

    def __init__(self) -> None:
        self._buffer_names: List[str] = []

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Non-trainable state (BN running statistics) saved with the model."""
        if "_buffer_names" not in vars(self):
            self._buffer_names = []
        setattr(self, name, np.asarray(value, dtype=get_default_dtype()))
        if name not in self._buffer_names:
            self._buffer_names.append(name)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in vars(self).get("_buffer_names", []):
            yield prefix + name, getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Arrays keyed ``param/<name>`` and ``buffer/<name>``."""
        state = {f"param/{name}": p.data.copy() for name, p in self.named_parameters()}
        state.update({f"buffer/{name}": b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Copy arrays in place; any missing, extra or reshaped entry is a mismatch."""
        expected = {f"param/{n}": p.data for n, p in self.named_parameters()}
        expected.update({f"buffer/{n}": b for n, b in self.named_buffers()})
        provided = {k: v for k, v in state.items() if k.startswith(("param/", "buffer/"))}

        missing = sorted(set(expected) - set(provided))
        extra = sorted(set(provided) - set(expected))
        if missing or extra:
            raise ArtifactMismatchError(
                f"checkpoint layout does not match the model: missing {missing[:5]}, unexpected {extra[:5]}"
            )
        for key, target in expected.items():
            value = provided[key]
            if value.shape != target.shape:
                raise ArtifactMismatchError(f"{key}: checkpoint shape {value.shape} != model shape {target.shape}")
            target[...] = value
