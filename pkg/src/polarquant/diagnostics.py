"""Distribution diagnostics and distortion benchmarks over synthetic sources.

The rotation diagnostics pool the scaled block coordinates sqrt(d) * b/||b||
across all full blocks of a tensor, before and after the Walsh-Hadamard
rotation, and measure each pool against the unit normal CDF with the
Kolmogorov-Smirnov statistic.  Pooling (rather than per-block KS) keeps the
estimate out of the small-sample noise floor.

All random sources use numpy's seeded PCG64 generator, so every report is
bit-reproducible from (kind, seed, count).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .gauss_quant import normal_cdf
from .hadamard import fwht_batch
from .tensors import DenseTensor

SOURCE_KINDS = ("gaussian", "laplace", "student_t", "outlier_spiked")

STUDENT_T_DF = 4.0
OUTLIER_RATE = 0.001
OUTLIER_FACTOR = 50.0

# 100 blocks is the floor for a usable pooled KS estimate.
MIN_BLOCKS = 100


@dataclass(frozen=True)
class SyntheticSource:
    """Seeded stand-in for real weight tensors."""

    kind: str
    seed: int
    count: int

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind '{self.kind}' (expected {SOURCE_KINDS})")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")

    def generate(self) -> NDArray[np.float64]:
        rng = np.random.default_rng(self.seed)
        if self.kind == "gaussian":
            return rng.standard_normal(self.count)
        if self.kind == "laplace":
            return rng.laplace(0.0, 1.0, self.count)
        if self.kind == "student_t":
            return rng.standard_t(STUDENT_T_DF, self.count)
        data = rng.standard_normal(self.count)
        spikes = rng.random(self.count) < OUTLIER_RATE
        data[spikes] *= OUTLIER_FACTOR
        return data

    def as_tensor(self) -> DenseTensor:
        return DenseTensor.from_array(f"{self.kind}-{self.seed}-{self.count}", self.generate())


@dataclass(frozen=True)
class GaussianityReport:
    """KS statistics of pooled block coordinates before/after rotation."""

    ks_before: float
    ks_after: float
    block_max_mean: float
    n_blocks: int
    n_samples: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


@dataclass(frozen=True)
class DistortionReport:
    """Per-bit-width relative MSE of the absmax and polar codecs on one source."""

    source: str
    seed: int
    count: int
    block_size: int
    ks_before: float
    ks_after: float
    block_max_mean: float
    results: tuple[dict, ...]

    def to_json(self) -> str:
        payload = asdict(self)
        payload["results"] = list(self.results)
        return json.dumps(payload, indent=2) + "\n"


def ks_statistic(samples, cdf=normal_cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a reference CDF.

    D = max_i max(|i/n - F(x_i)|, |(i-1)/n - F(x_i)|) over the sorted
    sample with 1-based index i.  The input is sorted internally.
    """
    arr = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    n = arr.size
    if n < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values")
    ref = np.asarray(cdf(arr), dtype=np.float64)
    steps = np.arange(1, n + 1, dtype=np.float64) / n
    return float(max(np.max(steps - ref), np.max(ref - (steps - 1.0 / n))))


def _unit_blocks(tensor: DenseTensor, block_size: int) -> NDArray[np.float64]:
    """Full-size blocks normalized to the unit sphere; zero blocks dropped.

    The tail remainder that cannot fill a block is excluded so padding
    zeros never distort the pooled statistics.
    """
    if block_size < 1 or (block_size & (block_size - 1)) != 0:
        raise ValueError(f"block_size must be a power of two, got {block_size}")
    flat = tensor.data.astype(np.float64)
    n_blocks = flat.size // block_size
    if n_blocks < MIN_BLOCKS:
        raise ValueError(
            f"tensor '{tensor.name}' has {flat.size} elements; need at least "
            f"{MIN_BLOCKS * block_size} for stable block statistics"
        )
    blocks = flat[: n_blocks * block_size].reshape(n_blocks, block_size)
    norms = np.linalg.norm(blocks, axis=1)
    live = norms > 0.0
    if not np.any(live):
        raise ValueError(f"tensor '{tensor.name}' has no non-zero blocks")
    return blocks[live] / norms[live, None]


def gaussianity_report(tensor: DenseTensor, block_size: int = 128) -> GaussianityReport:
    """Pooled KS against the unit normal, before and after rotation."""
    unit = _unit_blocks(tensor, block_size)
    scale = np.sqrt(block_size)
    before = unit * scale
    after = fwht_batch(unit) * scale
    return GaussianityReport(
        ks_before=ks_statistic(before.reshape(-1)),
        ks_after=ks_statistic(after.reshape(-1)),
        block_max_mean=float(np.mean(np.max(np.abs(after), axis=1))),
        n_blocks=unit.shape[0],
        n_samples=unit.size,
    )


def block_max_stats(tensor: DenseTensor, block_size: int = 128) -> float:
    """Mean over blocks of max |z| with z = sqrt(d) * rotate(block/||block||)."""
    unit = _unit_blocks(tensor, block_size)
    z = fwht_batch(unit) * np.sqrt(block_size)
    return float(np.mean(np.max(np.abs(z), axis=1)))


def _absmax_block_roundtrip(blocks: NDArray[np.float64], bits: int) -> NDArray[np.float64]:
    qmax = (1 << (bits - 1)) - 1
    scales = np.max(np.abs(blocks), axis=1, keepdims=True)
    safe = np.where(scales == 0.0, 1.0, scales)
    steps = blocks / safe * qmax
    codes = np.copysign(np.floor(np.abs(steps) + 0.5), steps)
    return codes / qmax * scales


def distortion_bench(
    source: SyntheticSource,
    bits_list,
    block_size: int = 128,
) -> DistortionReport:
    """Relative MSE of blockwise absmax versus the polar codec per bit width."""
    from .cascade import relative_mse
    from .polar_codec import polar_dequantize, polar_quantize

    tensor = source.as_tensor()
    gauss = gaussianity_report(tensor, block_size)

    flat = tensor.data.astype(np.float64)
    n_blocks = -(-flat.size // block_size)
    padded = np.zeros(n_blocks * block_size)
    padded[: flat.size] = flat
    blocks = padded.reshape(n_blocks, block_size)
    denom = float(np.sum(flat * flat))

    results = []
    for bits in bits_list:
        absmax = _absmax_block_roundtrip(blocks, bits).reshape(-1)[: flat.size]
        absmax_mse = float(np.sum((flat - absmax) ** 2)) / denom
        recon = polar_dequantize(polar_quantize(tensor, bits, block_size=block_size))
        polar_mse = relative_mse(tensor, recon)
        results.append(
            {
                "bits": int(bits),
                "absmax_rel_mse": absmax_mse,
                "polar_rel_mse": polar_mse,
                "mse_ratio": polar_mse / absmax_mse,
            }
        )
    return DistortionReport(
        source=source.kind,
        seed=source.seed,
        count=source.count,
        block_size=block_size,
        ks_before=gauss.ks_before,
        ks_after=gauss.ks_after,
        block_max_mean=gauss.block_max_mean,
        results=tuple(results),
    )
