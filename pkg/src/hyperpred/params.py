"""Named collections of trainable arrays."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .autodiff import Value


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParameterSet:
    """Ordered ``name -> Value`` mapping with state export for checkpoints.

    Names listed in ``frozen`` are excluded from :meth:`trainable`.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray], frozen: frozenset[str] = frozenset()):
        self.values: dict[str, Value] = {k: Value(np.array(v, dtype=np.float64)) for k, v in arrays.items()}
        self.frozen = frozenset(frozen)

    def __getitem__(self, name: str) -> Value:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def trainable(self) -> dict[str, Value]:
        return {k: v for k, v in self.values.items() if k not in self.frozen}

    def zero_grad(self) -> None:
        for v in self.values.values():
            v.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.values.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for k, v in self.values.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != v.data.shape:
                raise ValueError(f"parameter {k}: shape {arr.shape} != {v.data.shape}")
            v.data = arr.copy()
            v.zero_grad()
