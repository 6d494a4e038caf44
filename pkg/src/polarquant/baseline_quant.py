"""Blockwise absmax quantizers: the generic scheme and the group-wise INT4 baseline.

Absmax maps a block linearly onto the signed integer grid, using the block's
largest magnitude as the scale.  Rounding is half-away-from-zero so the
scheme is symmetric under negation, and codes stay in the symmetric range
+-(2^(b-1)-1); the extra most-negative integer is never produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .tensors import DenseTensor

MIN_BITS = 2
MAX_BITS = 8


def _round_half_away(x: NDArray) -> NDArray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _check_bits(bits: int) -> int:
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ValueError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    return (1 << (bits - 1)) - 1


def absmax_quantize(block, bits: int):
    """Quantize one block; returns (codes, scale).

    scale = max |element|; code = round_half_away(element / scale * qmax)
    with qmax = 2^(b-1)-1.  An all-zero block yields scale 0 and zero codes.
    """
    qmax = _check_bits(bits)
    arr = np.asarray(block, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot quantize an empty block")
    if not np.all(np.isfinite(arr)):
        raise ValueError("block contains non-finite values")
    scale = float(np.max(np.abs(arr)))
    if scale == 0.0:
        return np.zeros(arr.shape, dtype=np.int8), 0.0
    codes = _round_half_away(arr / scale * qmax).astype(np.int8)
    return codes, scale


def absmax_dequantize(codes, scale: float, bits: int) -> NDArray[np.float64]:
    """Inverse of absmax_quantize: element = code / qmax * scale."""
    qmax = _check_bits(bits)
    arr = np.asarray(codes, dtype=np.int64)
    if np.any(np.abs(arr) > qmax):
        raise ValueError(f"codes out of range for {bits}-bit absmax (|code| <= {qmax})")
    if not (np.isfinite(scale) and scale >= 0.0):
        raise ValueError(f"scale must be finite and non-negative, got {scale}")
    return arr.astype(np.float64) / qmax * scale


@dataclass(frozen=True)
class GroupQuantTensor:
    """Group-wise absmax artifact: one float32 scale per group plus signed codes.

    The flat tensor is padded with zeros to a whole number of groups;
    ``original_len`` trims the padding on dequantization.
    """

    group_size: int
    bits: int
    scales: NDArray[np.float32]
    codes: NDArray[np.int8]
    original_len: int
    shape: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        scales = np.ascontiguousarray(self.scales, dtype=np.float32)
        codes = np.ascontiguousarray(self.codes, dtype=np.int8)
        n_groups = -(-self.original_len // self.group_size)
        if scales.shape != (n_groups,):
            raise ValueError(f"expected {n_groups} scales, got {scales.size}")
        if codes.shape != (n_groups * self.group_size,):
            raise ValueError(f"expected {n_groups * self.group_size} codes, got {codes.size}")
        qmax = (1 << (self.bits - 1)) - 1
        if np.any(np.abs(codes.astype(np.int64)) > qmax):
            raise ValueError(f"codes exceed the +-{qmax} range for {self.bits} bits")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "codes", codes)

    @property
    def n_groups(self) -> int:
        return self.scales.size


def groupwise_int4_quantize(tensor: DenseTensor, group_size: int = 128) -> GroupQuantTensor:
    """4-bit group-wise absmax over the row-major flattened tensor.

    The final group is zero-padded; zeros cannot perturb a group's absmax
    scale, and padding is dropped again on dequantization.
    """
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    bits = 4
    qmax = _check_bits(bits)
    flat = tensor.data
    n = flat.size
    if n < 1:
        raise ValueError(f"tensor '{tensor.name}' is empty")
    n_groups = -(-n // group_size)
    padded = np.zeros(n_groups * group_size, dtype=np.float32)
    padded[:n] = flat
    groups = padded.reshape(n_groups, group_size)

    # The per-group max of float32 data is itself float32-exact, so storing
    # scales at 32 bits loses nothing relative to the codes computed here.
    scales = np.max(np.abs(groups), axis=1)
    safe = np.where(scales == 0.0, np.float32(1.0), scales)
    steps = groups.astype(np.float64) / safe[:, None] * qmax
    codes = _round_half_away(steps).astype(np.int8)
    return GroupQuantTensor(
        group_size=group_size,
        bits=bits,
        scales=scales,
        codes=codes.reshape(-1),
        original_len=n,
        shape=tensor.shape,
        name=tensor.name,
    )


def groupwise_int4_dequantize(g: GroupQuantTensor) -> DenseTensor:
    """Inverse of groupwise_int4_quantize; truncates the zero padding."""
    qmax = (1 << (g.bits - 1)) - 1
    groups = g.codes.reshape(g.n_groups, g.group_size).astype(np.float64)
    recon = groups / qmax * g.scales.astype(np.float64)[:, None]
    flat = recon.reshape(-1)[: g.original_len].astype(np.float32)
    return DenseTensor(name=g.name, shape=g.shape, data=flat)
