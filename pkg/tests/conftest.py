import numpy as np
import pytest

from polarquant import DenseTensor


@pytest.fixture(scope="session")
def gauss_tensor_1m() -> DenseTensor:
    """Seeded i.i.d. unit-normal tensor of 2^20 elements, shared across tests."""
    rng = np.random.default_rng(20240811)
    return DenseTensor.from_array("gauss-1m", rng.standard_normal(1 << 20))


@pytest.fixture(scope="session")
def gauss_tensor_128k() -> DenseTensor:
    rng = np.random.default_rng(77)
    return DenseTensor.from_array("gauss-128k", rng.standard_normal(1 << 17))
