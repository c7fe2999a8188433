import numpy as np
import pytest

from zstsr import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.use(request.param)
    yield request.param
    kernels.use(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
