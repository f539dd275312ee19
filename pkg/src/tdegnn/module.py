"""Minimal parameter container with optimizer-group tagging."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, parameter

GROUPS = ("embedding", "temporal", "spatial")


class Module:
    """Walks attributes in definition order to find parameters.

    ``param_group`` names the optimizer group of the parameters a module owns
    directly; a child without its own group inherits the parent's.
    """

    param_group: str | None = None

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "", group: str | None = None,
                         trainable_only: bool = True) -> Iterator[tuple[str, Tensor, str | None]]:
        """Yield ``(qualified name, tensor, group)`` for every parameter tensor.

        Frozen tensors (``requires_grad`` off) are skipped unless
        ``trainable_only`` is false.
        """
        group = self.param_group or group
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.", group, trainable_only)
            elif value.requires_grad or not trainable_only:
                yield f"{prefix}{name}", value, group

    def state(self) -> dict[str, Tensor]:
        """Every tensor attribute, frozen or not, keyed by qualified name."""
        return {name: t for name, t, _ in self.named_parameters(trainable_only=False)}

    def parameters(self) -> dict[str, Tensor]:
        return {name: t for name, t, _ in self.named_parameters()}

    def zero_grad(self):
        for _, t, _ in self.named_parameters():
            t.grad = None


class Affine(Module):
    """``x @ W + b`` with uniform fan-in initialization."""

    param_group = "embedding"

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        self.weight = parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
        self.bias = parameter(rng.uniform(-bound, bound, fan_out))

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias
