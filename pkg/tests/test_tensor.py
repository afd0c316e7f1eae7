import numpy as np
import pytest

import oracles
from conftest import rel_err
from ultralight import tensor as T
from ultralight.errors import DimensionError


def test_as_tensor_checks_rank_and_extents():
    assert T.as_tensor([1, 2]).dtype == np.float32
    with pytest.raises(DimensionError):
        T.as_tensor(np.zeros((2, 2)), rank=3)
    with pytest.raises(DimensionError):
        T.as_tensor(np.zeros((2, 0)))
    with pytest.raises(DimensionError):
        T.as_tensor(np.zeros((1, 1, 1, 1, 1)))


def test_matmul_matches_loops(rng):
    a = rng.standard_normal((5, 7)).astype(np.float32)
    b = rng.standard_normal((7, 3)).astype(np.float32)
    assert rel_err(T.matmul(a, b), oracles.matmul(a, b)) < 1e-6
    with pytest.raises(DimensionError):
        T.matmul(a, a)


def test_linear_bias_and_shape(rng):
    x = rng.standard_normal((4, 3)).astype(np.float32)
    w = rng.standard_normal((3, 2)).astype(np.float32)
    bias = np.array([1.0, -1.0], np.float32)
    assert rel_err(T.linear(x, w, bias), np.array(oracles.matmul(x, w)) + bias) < 1e-6
    with pytest.raises(DimensionError):
        T.linear(x, w, np.zeros(3))


@pytest.mark.parametrize("pad,dilation", [(0, 1), (1, 1), (2, 2), (9, 3)])
def test_conv2d_matches_direct_sum(rng, pad, dilation):
    x = rng.standard_normal((2, 6, 5)).astype(np.float32)
    k = 3 if dilation < 3 else 7
    kernel = rng.standard_normal((3, 2, k, k)).astype(np.float32)
    bias = rng.standard_normal(3).astype(np.float32)
    got = T.conv2d(x, kernel, bias, pad=pad, dilation=dilation)
    assert rel_err(got, oracles.conv2d(x, kernel, bias, pad, dilation)) < 1e-5


def test_conv2d_depthwise_matches_direct_sum(rng):
    x = rng.standard_normal((3, 4, 4)).astype(np.float32)
    kernel = rng.standard_normal((3, 3, 3)).astype(np.float32)
    bias = rng.standard_normal(3).astype(np.float32)
    got = T.conv2d_depthwise(x, kernel, bias, pad=1)
    assert rel_err(got, oracles.conv2d_depthwise(x, kernel, bias, 1)) < 1e-5


def test_causal_convs_match_direct_sum(rng):
    x = rng.standard_normal((3, 9)).astype(np.float32)
    dense = rng.standard_normal((3, 3, 4)).astype(np.float32)
    depth = rng.standard_normal((3, 4)).astype(np.float32)
    bias = rng.standard_normal(3).astype(np.float32)
    want_dense = np.array(oracles.causal_conv(x.T, dense, bias, True)).T
    want_depth = np.array(oracles.causal_conv(x.T, depth, bias, False)).T
    assert rel_err(T.conv1d_causal(x, dense, bias), want_dense) < 1e-5
    assert rel_err(T.conv1d_depthwise(x, depth, bias), want_depth) < 1e-5


def test_causal_conv_ignores_future():
    x = np.zeros((1, 6), np.float32)
    x[0, 4] = 1.0
    out = T.conv1d_depthwise(x, np.ones((1, 4), np.float32), np.zeros(1, np.float32))
    assert np.all(out[0, :4] == 0) and np.all(out[0, 4:] == 1)


def test_pooling_and_upsampling():
    x = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
    assert T.maxpool2(x).tolist() == [[[5, 7], [13, 15]]]
    assert T.avgpool_global(x).tolist() == [7.5]
    up = T.upsample2_nearest(T.maxpool2(x))
    assert up.shape == (1, 4, 4) and up[0, 1, 1] == 5 and up[0, 3, 2] == 15
    with pytest.raises(DimensionError):
        T.maxpool2(np.zeros((1, 3, 4)))


def test_layernorm_two_pass(rng):
    x = (rng.standard_normal((6, 5)) * 3 + 10).astype(np.float32)
    gamma = rng.standard_normal(5).astype(np.float32)
    beta = rng.standard_normal(5).astype(np.float32)
    assert rel_err(T.layernorm(x, gamma, beta), oracles.layernorm_rows(x, gamma, beta)) < 1e-5
    with pytest.raises(DimensionError):
        T.layernorm(x, gamma[:4], beta)


def test_activations_stable():
    v = np.array([-1000, -20, -1, 0, 1, 20, 1000], np.float32)
    with np.errstate(over="raise", invalid="raise"):
        s = T.sigmoid(v)
        sp = T.softplus(v)
    assert s[0] == 0 and s[-1] == 1 and s[3] == 0.5
    assert np.all(np.isfinite(sp)) and sp[-1] == 1000
    for x in (-3.0, 0.5, 4.0):
        assert T.silu(np.float32(x)) == pytest.approx(oracles.silu(x), rel=1e-6)
        assert T.softplus(np.array([x], np.float32))[0] == pytest.approx(oracles.softplus(x), rel=1e-6)
    assert T.relu(v).min() == 0
