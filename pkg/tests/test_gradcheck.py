import zlib

import numpy as np
import pytest

from cfnet.tensor.gradcheck import KERNELS, check_gradients, relative_error

from composites import COMPOSITES

REQUIRED = {"conv2d", "depthwise_conv2d", "conv3d", "batch_norm_train", "batch_norm_eval",
            "silu", "relu", "sigmoid", "tanh", "global_avg_pool", "max_pool", "upsample2x",
            "concat", "add", "mul", "sub", "scalar_mul", "scalar_add", "channel_mean", "mse"}


def test_registry_covers_required_kernels():
    assert REQUIRED <= set(KERNELS)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_kernel_gradients(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(5):
        fn, arrays = KERNELS[name](rng)
        assert check_gradients(fn, arrays, rng) <= 1e-4


@pytest.mark.parametrize("name", sorted(COMPOSITES))
def test_composite_gradients(name):
    rng = np.random.default_rng(7)
    for _ in range(5):
        fn, arrays = COMPOSITES[name](rng)
        assert check_gradients(fn, arrays, rng) <= 1e-4


def test_relative_error_detects_mismatch():
    assert relative_error(np.array([1.0]), np.array([1.1])) > 0.05
    assert relative_error(np.array([0.0]), np.array([1e-9])) < 1e-2
