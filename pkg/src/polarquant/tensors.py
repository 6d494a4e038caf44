"""In-memory tensor containers shared across the codec modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class DenseTensor:
    """Named, shaped, row-major float32 weight tensor.

    ``data`` is the flat row-major buffer; ``array`` gives a shaped view.
    All values must be finite.
    """

    name: str
    shape: tuple[int, ...]
    data: NDArray[np.float32]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1)
        if int(np.prod(shape, dtype=np.int64)) != data.size:
            raise ValueError(
                f"tensor '{self.name}': shape {shape} does not match {data.size} elements"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError(f"tensor '{self.name}' contains non-finite values")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, name: str, array) -> "DenseTensor":
        arr = np.asarray(array)
        return cls(name=name, shape=arr.shape, data=np.ascontiguousarray(arr, dtype=np.float32).reshape(-1))

    @property
    def array(self) -> NDArray[np.float32]:
        return self.data.reshape(self.shape)

    def __len__(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class HalfTensor:
    """Named, shaped float16 payload for tensors kept out of the codec."""

    name: str
    shape: tuple[int, ...]
    data: NDArray[np.float16]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        data = np.ascontiguousarray(self.data, dtype=np.float16).reshape(-1)
        if int(np.prod(shape, dtype=np.int64)) != data.size:
            raise ValueError(
                f"tensor '{self.name}': shape {shape} does not match {data.size} elements"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError(f"tensor '{self.name}' contains non-finite values")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, name: str, array) -> "HalfTensor":
        arr = np.asarray(array)
        return cls(name=name, shape=arr.shape, data=np.ascontiguousarray(arr, dtype=np.float16).reshape(-1))

    @property
    def array(self) -> NDArray[np.float16]:
        return self.data.reshape(self.shape)
