"""Cascaded quantization: polar-codec roundtrip feeding a group-wise INT4 stage.

The cascade encodes a tensor with the polar codec at ``pre_bits``, decodes it,
and hands the reconstruction to the group-wise absmax INT4 baseline.  The
comparison report measures all four pipelines against the original tensor
and records per-group absmax scale statistics for the original versus the
polar-roundtripped weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .baseline_quant import groupwise_int4_dequantize, groupwise_int4_quantize
from .polar_codec import polar_dequantize, polar_quantize
from .tensors import DenseTensor


@dataclass(frozen=True)
class CascadeReport:
    """Relative MSE of each pipeline plus group-scale statistics."""

    source: str
    direct_int4_mse: float
    cascade_q5_mse: float
    cascade_q3_mse: float
    polar_q5_mse: float
    group_scale_mean_orig: float
    group_scale_var_orig: float
    group_scale_mean_pq: float
    group_scale_var_pq: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _truncate_bfloat16(arr: NDArray[np.float32]) -> NDArray[np.float32]:
    """Round float32 values to the nearest bfloat16 (ties to even)."""
    bits = arr.astype(np.float32).view(np.uint32)
    rounded = (bits + 0x7FFF + ((bits >> 16) & 1)) & np.uint32(0xFFFF0000)
    return rounded.view(np.float32)


def cascade_quantize(
    tensor: DenseTensor,
    pre_bits: int,
    group_size: int = 128,
    block_size: int = 128,
    intermediate_bf16: bool = False,
) -> DenseTensor:
    """Polar roundtrip at ``pre_bits`` followed by an INT4 group roundtrip.

    ``intermediate_bf16`` truncates the intermediate reconstruction to
    bfloat16 precision before the INT4 stage; the default keeps the full
    float32 intermediate, which is a superset of that precision.
    """
    q = polar_quantize(tensor, pre_bits, block_size=block_size)
    mid = polar_dequantize(q)
    if intermediate_bf16:
        mid = DenseTensor(name=mid.name, shape=mid.shape, data=_truncate_bfloat16(mid.data))
    g = groupwise_int4_quantize(mid, group_size=group_size)
    return groupwise_int4_dequantize(g)


def relative_mse(original: DenseTensor, reconstruction: DenseTensor) -> float:
    """||W - What||^2 / ||W||^2 in float64."""
    w = original.data.astype(np.float64)
    what = reconstruction.data.astype(np.float64)
    denom = float(np.sum(w * w))
    if denom == 0.0:
        return 0.0
    return float(np.sum((w - what) ** 2)) / denom


def _group_scale_stats(flat: NDArray[np.float32], group_size: int):
    """Mean and variance of per-group absmax scales (zero-padded tail)."""
    n_groups = -(-flat.size // group_size)
    padded = np.zeros(n_groups * group_size, dtype=np.float64)
    padded[: flat.size] = flat
    scales = np.max(np.abs(padded.reshape(n_groups, group_size)), axis=1)
    return float(np.mean(scales)), float(np.var(scales))


def compare_pipelines(
    tensor: DenseTensor,
    seed: int,
    group_size: int = 128,
    block_size: int = 128,
) -> CascadeReport:
    """Measure direct INT4, both cascades, and the polar-only roundtrip.

    ``seed`` identifies the source that produced ``tensor`` and is recorded
    verbatim; every computed quantity is deterministic, so reports for the
    same tensor and seed are byte-identical.
    """
    direct = groupwise_int4_dequantize(groupwise_int4_quantize(tensor, group_size))
    q5 = polar_quantize(tensor, 5, block_size=block_size)
    polar5 = polar_dequantize(q5)
    cascade5 = groupwise_int4_dequantize(groupwise_int4_quantize(polar5, group_size))
    cascade3 = cascade_quantize(tensor, 3, group_size=group_size, block_size=block_size)

    mean_orig, var_orig = _group_scale_stats(tensor.data, group_size)
    mean_pq, var_pq = _group_scale_stats(polar5.data, group_size)
    return CascadeReport(
        source=tensor.name,
        direct_int4_mse=relative_mse(tensor, direct),
        cascade_q5_mse=relative_mse(tensor, cascade5),
        cascade_q3_mse=relative_mse(tensor, cascade3),
        polar_q5_mse=relative_mse(tensor, polar5),
        group_scale_mean_orig=mean_orig,
        group_scale_var_orig=var_orig,
        group_scale_mean_pq=mean_pq,
        group_scale_var_pq=var_pq,
        seed=seed,
    )
