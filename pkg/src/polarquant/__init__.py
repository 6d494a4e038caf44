"""Block-normalized Walsh-Hadamard weight quantization with Lloyd-Max
Gaussian codebooks, plus absmax baselines, a cascade pipeline, binary
containers, and distribution diagnostics."""

from .baseline_quant import (
    GroupQuantTensor,
    absmax_dequantize,
    absmax_quantize,
    groupwise_int4_dequantize,
    groupwise_int4_quantize,
)
from .cascade import CascadeReport, cascade_quantize, compare_pipelines, relative_mse
from .container_io import (
    ContainerError,
    QuantizedModel,
    build_model,
    models_equal,
    read_pqz,
    read_rtz,
    write_pqz,
    write_rtz,
)
from .diagnostics import (
    DistortionReport,
    GaussianityReport,
    SyntheticSource,
    block_max_stats,
    distortion_bench,
    gaussianity_report,
    ks_statistic,
)
from .gauss_quant import (
    CentroidTable,
    absmax_mse_ratio,
    default_table,
    nearest_centroid,
    normal_cdf,
    normal_pdf,
    quantizer_mse,
    solve_centroids,
)
from .hadamard import build_hadamard, fwht, fwht_batch
from .polar_codec import (
    REFERENCE_LAYOUT,
    ROLE_BITS,
    QuantizedTensor,
    allocate_bits,
    apply_channel_scales,
    average_bpw,
    bits_per_weight,
    polar_dequantize,
    polar_quantize,
    remove_channel_scales,
)
from .tensors import DenseTensor, HalfTensor

__version__ = "0.1.0"
