"""The polar weight codec: normalize blocks, rotate, quantize against a
Gaussian-optimal codebook.

Encoding flattens a tensor row-major, zero-pads it to whole blocks of
``block_size`` elements, and per block: extracts the l2 norm, normalizes to
the unit sphere, applies the Walsh-Hadamard rotation, scales by sqrt(d) so
coordinates are approximately unit normal, and maps each coordinate to the
nearest codebook centroid.  Decoding runs the exact inverse (the rotation is
its own inverse) and restores the stored per-block norm.

Norms are accumulated in float64 with a sequential compensated sum (so
results cannot depend on reduction order) and stored as IEEE binary16 with
round-to-nearest-even.  Zero-norm blocks - including blocks that are pure
padding - carry the code of z = 0 and reconstruct to exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .gauss_quant import CentroidTable, default_table
from .hadamard import fwht_batch
from .tensors import DenseTensor

FLOAT16_MAX = 65504.0

MIN_BITS = 2
MAX_BITS = 8

# Bit width per tensor role; None marks tensors kept at full precision.
ROLE_BITS: dict[str, int | None] = {
    "mlp_gate_up": 3,
    "mlp_down": 4,
    "attn_qkv": 5,
    "attn_o": 6,
    "embedding": 5,
    "lm_head": 6,
    "keep_fp": None,
}

# Documented reference layout (role, parameter count) for a ~9B-parameter
# mixture-of-experts style model where the expert MLPs dominate the count.
# average_bpw over this table lands at ~3.69 bits per weight.
REFERENCE_LAYOUT: tuple[tuple[str, int], ...] = (
    ("mlp_gate_up", 6_000_000_000),
    ("mlp_down", 1_900_000_000),
    ("attn_qkv", 400_000_000),
    ("attn_o", 200_000_000),
    ("embedding", 220_000_000),
    ("lm_head", 230_000_000),
    ("keep_fp", 50_000_000),
)


@dataclass(frozen=True)
class QuantizedTensor:
    """Encoded tensor: one byte code per padded weight, one half norm per block."""

    name: str
    shape: tuple[int, ...]
    original_len: int
    bits: int
    block_size: int
    codes: NDArray[np.uint8]
    norms: NDArray[np.float16]
    channel_scales: NDArray[np.float32] | None
    table_ref: str

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if not MIN_BITS <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {self.bits}")
        if self.block_size < 1 or (self.block_size & (self.block_size - 1)) != 0:
            raise ValueError(f"block_size must be a power of two, got {self.block_size}")
        codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        norms = np.ascontiguousarray(self.norms, dtype=np.float16)
        n_blocks = -(-self.original_len // self.block_size)
        if norms.shape != (n_blocks,):
            raise ValueError(
                f"tensor '{self.name}': expected {n_blocks} block norms, got {norms.size}"
            )
        if codes.shape != (n_blocks * self.block_size,):
            raise ValueError(
                f"tensor '{self.name}': expected {n_blocks * self.block_size} codes, got {codes.size}"
            )
        if np.any(codes >= (1 << self.bits)):
            raise ValueError(f"tensor '{self.name}': code out of range for {self.bits} bits")
        if not np.all(np.isfinite(norms.astype(np.float64))) or np.any(norms < 0):
            raise ValueError(f"tensor '{self.name}': norms must be finite and non-negative")
        if self.channel_scales is not None:
            scales = np.ascontiguousarray(self.channel_scales, dtype=np.float32)
            if len(self.shape) != 2 or scales.shape != (self.shape[1],):
                raise ValueError(
                    f"tensor '{self.name}': channel scales require a 2-D shape with "
                    f"one scale per column"
                )
            object.__setattr__(self, "channel_scales", scales)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "norms", norms)

    @property
    def num_blocks(self) -> int:
        return self.norms.size


def _compensated_block_norms(blocks: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-row l2 norms via sequential Kahan summation of the squares."""
    n, d = blocks.shape
    total = np.zeros(n)
    carry = np.zeros(n)
    for j in range(d):
        term = blocks[:, j] * blocks[:, j] - carry
        acc = total + term
        carry = (acc - total) - term
        total = acc
    return np.sqrt(total)


def _to_blocks(flat: NDArray[np.float64], block_size: int) -> NDArray[np.float64]:
    n_blocks = -(-flat.size // block_size)
    padded = np.zeros(n_blocks * block_size)
    padded[: flat.size] = flat
    return padded.reshape(n_blocks, block_size)


def polar_quantize(
    tensor: DenseTensor,
    bits: int,
    block_size: int = 128,
    table: CentroidTable | None = None,
    channel_scales=None,
) -> QuantizedTensor:
    """Encode a tensor at ``bits`` bits per weight.

    If ``channel_scales`` is given the tensor must be 2-D; columns are
    multiplied by the scales before encoding and the scales are stored in
    the artifact so decoding can divide them back out.  Deterministic:
    identical inputs produce byte-identical artifacts.
    """
    if table is None:
        table = default_table(bits)
    if table.bits != bits:
        raise ValueError(f"table is for {table.bits} bits, requested {bits}")
    if block_size < 1 or (block_size & (block_size - 1)) != 0:
        raise ValueError(f"block_size must be a power of two, got {block_size}")

    scales_arr = None
    if channel_scales is not None:
        tensor = apply_channel_scales(tensor, channel_scales)
        scales_arr = np.ascontiguousarray(channel_scales, dtype=np.float32)

    blocks = _to_blocks(tensor.data.astype(np.float64), block_size)
    norms = _compensated_block_norms(blocks)
    too_big = np.nonzero(norms > FLOAT16_MAX)[0]
    if too_big.size:
        i = int(too_big[0])
        raise ValueError(
            f"tensor '{tensor.name}': block {i} norm {norms[i]:.6g} exceeds the "
            f"binary16 range ({FLOAT16_MAX:.0f}); rescale the tensor or shrink the blocks"
        )

    z = np.zeros_like(blocks)
    live = norms > 0.0
    if np.any(live):
        unit = blocks[live] / norms[live, None]
        z[live] = fwht_batch(unit) * np.sqrt(block_size)
    # Zero-norm rows keep z = 0, so they encode as the code of zero.
    codes = np.searchsorted(table.boundaries, z.reshape(-1), side="left")
    return QuantizedTensor(
        name=tensor.name,
        shape=tensor.shape,
        original_len=tensor.data.size,
        bits=bits,
        block_size=block_size,
        codes=codes.astype(np.uint8),
        norms=norms.astype(np.float16),
        channel_scales=scales_arr,
        table_ref=table.ref,
    )


def polar_dequantize(q: QuantizedTensor, table: CentroidTable | None = None) -> DenseTensor:
    """Decode a quantized tensor back to float32.

    Looks up centroids, scales by 1/sqrt(d), applies the (self-inverse)
    rotation, restores the stored block norm, trims padding, and divides
    out the channel scales when present.
    """
    if table is None:
        table = default_table(q.bits)
    if table.bits != q.bits or table.ref != q.table_ref:
        raise ValueError(
            f"tensor '{q.name}' was encoded with {q.table_ref}, got {table.ref}"
        )
    zhat = table.centroids[q.codes].reshape(q.num_blocks, q.block_size)
    blocks = fwht_batch(zhat / np.sqrt(q.block_size))
    blocks *= q.norms.astype(np.float64)[:, None]
    flat = blocks.reshape(-1)[: q.original_len].astype(np.float32)
    out = DenseTensor(name=q.name, shape=q.shape, data=flat)
    if q.channel_scales is not None:
        out = remove_channel_scales(out, q.channel_scales)
    return out


def _check_scales(tensor: DenseTensor, scales) -> NDArray[np.float32]:
    if len(tensor.shape) != 2:
        raise ValueError(f"tensor '{tensor.name}' must be 2-D to carry channel scales")
    arr = np.ascontiguousarray(scales, dtype=np.float32)
    if arr.shape != (tensor.shape[1],):
        raise ValueError(
            f"tensor '{tensor.name}': expected {tensor.shape[1]} channel scales, got {arr.size}"
        )
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("channel scales must be finite and strictly positive")
    return arr


def apply_channel_scales(tensor: DenseTensor, scales) -> DenseTensor:
    """Multiply column j of a 2-D tensor by scales[j]."""
    arr = _check_scales(tensor, scales)
    return DenseTensor.from_array(tensor.name, tensor.array * arr[None, :])


def remove_channel_scales(tensor: DenseTensor, scales) -> DenseTensor:
    """Divide column j of a 2-D tensor by scales[j]; exact inverse of apply."""
    arr = _check_scales(tensor, scales)
    return DenseTensor.from_array(tensor.name, tensor.array / arr[None, :])


def allocate_bits(role: str) -> int | None:
    """Bit width assigned to a tensor role; None means keep full precision."""
    try:
        return ROLE_BITS[role]
    except KeyError:
        raise ValueError(
            f"unknown tensor role '{role}' (expected one of {sorted(ROLE_BITS)})"
        ) from None


def bits_per_weight(bits: int, block_size: int) -> float:
    """Logical storage cost per weight: code bits plus the 16/d norm overhead."""
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ValueError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    return bits + 16.0 / block_size


def average_bpw(layout, block_size: int = 128) -> float:
    """Parameter-weighted mean bits per weight over (role, count) pairs.

    Full-precision roles cost 16 bits per weight.
    """
    entries = list(layout)
    if not entries:
        raise ValueError("layout is empty")
    total_bits = 0.0
    total_params = 0
    for role, count in entries:
        count = int(count)
        if count <= 0:
            raise ValueError(f"role '{role}' has non-positive parameter count {count}")
        bits = allocate_bits(role)
        cost = 16.0 if bits is None else bits_per_weight(bits, block_size)
        total_bits += cost * count
        total_params += count
    return total_bits / total_params
