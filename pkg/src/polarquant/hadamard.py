"""Normalized Walsh-Hadamard matrices and the fast transform.

The order-d matrix (d a power of two) follows the Sylvester doubling rule
in natural ordering, scaled by 1/sqrt(d) so it is orthonormal.  Because the
matrix is symmetric and orthogonal it is its own inverse, so the same
butterfly kernel serves both the forward and inverse transform.

All arithmetic runs in float64 regardless of the input dtype: the transform
round-off has to stay far below the quantization error it is paired with.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

MAX_ORDER = 1 << 16


def _check_order(d: int) -> None:
    if d < 1 or (d & (d - 1)) != 0:
        raise ValueError(f"transform size must be a power of two, got {d}")
    if d > MAX_ORDER:
        raise ValueError(f"transform size {d} exceeds the supported maximum {MAX_ORDER}")


def build_hadamard(d: int) -> NDArray[np.float64]:
    """Dense normalized Walsh-Hadamard matrix of order d (power of two).

    Entries are +-1/sqrt(d); the matrix is symmetric and orthonormal.
    Deterministic: natural (Sylvester) ordering, which the file format
    treats as canonical.
    """
    _check_order(d)
    h = np.array([[1.0]])
    block = np.array([[1.0, 1.0], [1.0, -1.0]])
    while h.shape[0] < d:
        h = np.kron(block, h)
    return h / np.sqrt(d)


def fwht_batch(blocks: NDArray) -> NDArray[np.float64]:
    """Apply the normalized Walsh-Hadamard transform to each row.

    Equivalent to ``blocks @ build_hadamard(d)`` (the matrix is symmetric)
    but runs in O(d log d) per row.  The unnormalized butterfly runs first;
    the 1/sqrt(d) factor is applied once at the end, which keeps the result
    bit-identical across rows and independent of batch size.
    """
    out = np.array(blocks, dtype=np.float64, copy=True)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D batch of rows, got shape {out.shape}")
    n, d = out.shape
    _check_order(d)
    h = 1
    while h < d:
        out = out.reshape(n, -1, 2, h)
        lo = out[:, :, 0, :]
        hi = out[:, :, 1, :]
        out = np.stack((lo + hi, lo - hi), axis=2)
        h *= 2
    return out.reshape(n, d) / np.sqrt(d)


def fwht(x: NDArray) -> NDArray[np.float64]:
    """Normalized fast Walsh-Hadamard transform of a 1-D vector.

    Self-inverse: ``fwht(fwht(x)) == x`` up to float64 round-off.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    return fwht_batch(arr[np.newaxis, :])[0]
