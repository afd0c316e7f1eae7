import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rel_err
from ultralight.errors import DimensionError, DomainError
from ultralight.scan import (
    combine, discretize, scan_parallel, scan_sequential, selective_scan, ssm_output,
)


def scalar_recurrence(a, b):
    h, out = 0.0, []
    for at, bt in zip(a, b):
        h = at * h + bt
        out.append(h)
    return out


def random_pair(rng, d, n, length):
    a = rng.uniform(0.3, 1.0, (d, n, length)).astype(np.float32)
    b = rng.standard_normal((d, n, length)).astype(np.float32)
    return a, b


def test_discretize_closed_form():
    dt = np.array([[0.5, 2.0]], np.float32)
    A = np.array([[-1.0, -3.0]], np.float32)
    B = np.array([[1.0, 2.0], [0.5, -1.0]], np.float32)
    x = np.array([[4.0, -1.0]], np.float32)
    a_bar, b_term = discretize(dt, A, B, x)
    assert a_bar[0, 1, 0] == pytest.approx(math.exp(-1.5), rel=1e-6)
    assert b_term[0, 0, 1] == pytest.approx(2.0 * 2.0 * -1.0)
    assert b_term[0, 1, 0] == pytest.approx(0.5 * 0.5 * 4.0)


def test_discretize_rejects_bad_input():
    ok = dict(dt=np.ones((2, 3)), A=-np.ones((2, 4)), B=np.ones((4, 3)), x=np.ones((2, 3)))
    with pytest.raises(DomainError):
        discretize(**{**ok, "dt": np.zeros((2, 3))})
    with pytest.raises(DimensionError):
        discretize(**{**ok, "B": np.ones((4, 2))})


def test_sequential_matches_scalar_loop(rng):
    a, b = random_pair(rng, 2, 3, 17)
    h = scan_sequential(a, b)
    for d in range(2):
        for n in range(3):
            assert np.allclose(h[d, n], scalar_recurrence(a[d, n].tolist(), b[d, n].tolist()), rtol=1e-5)


def test_combine_is_associative(rng):
    x, y, z = (tuple(rng.standard_normal(2)) for _ in range(3))
    left = combine(combine(x, y), z)
    right = combine(x, combine(y, z))
    assert np.allclose(left, right)


@pytest.mark.parametrize("length", [1, 2, 3, 7, 8, 9, 63, 64, 65, 200])
@pytest.mark.parametrize("chunk", [1, 2, 7, 64, 1000])
def test_parallel_matches_sequential(rng, length, chunk):
    a, b = random_pair(rng, 2, 4, length)
    assert rel_err(scan_parallel(a, b, chunk), scan_sequential(a, b)) <= 1e-5


def test_parallel_rejects_bad_chunk(rng):
    a, b = random_pair(rng, 1, 1, 4)
    with pytest.raises(DomainError):
        scan_parallel(a, b, 0)
    with pytest.raises(DimensionError):
        scan_parallel(a, b[..., :3])


def test_ssm_output_and_full_pass(rng):
    d, n, length = 3, 4, 10
    dt = rng.uniform(0.01, 0.5, (d, length)).astype(np.float32)
    A = -rng.uniform(0.5, 2.0, (d, n)).astype(np.float32)
    B = rng.standard_normal((n, length)).astype(np.float32)
    C = rng.standard_normal((n, length)).astype(np.float32)
    D = rng.standard_normal(d).astype(np.float32)
    x = rng.standard_normal((d, length)).astype(np.float32)
    want = np.zeros((d, length))
    for i in range(d):
        h = [0.0] * n
        for t in range(length):
            for k in range(n):
                h[k] = math.exp(dt[i, t] * A[i, k]) * h[k] + dt[i, t] * B[k, t] * x[i, t]
            want[i, t] = sum(C[k, t] * h[k] for k in range(n)) + D[i] * x[i, t]
    assert rel_err(selective_scan(dt, A, B, C, D, x), want) < 1e-5
    assert rel_err(selective_scan(dt, A, B, C, D, x, chunk=3), want) < 1e-5
    with pytest.raises(DimensionError):
        ssm_output(np.zeros((d, n, length)), C, D[:2], x)


# -- properties ---------------------------------------------------------------

lengths = st.integers(min_value=1, max_value=80)
chunks = st.integers(min_value=1, max_value=90)


def _pair(seed, length, d=2, n=3):
    return random_pair(np.random.default_rng(seed), d, n, length)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), length=lengths, chunk=chunks)
def test_prop_chunk_independence(seed, length, chunk):
    a, b = _pair(seed, length)
    assert rel_err(scan_parallel(a, b, chunk), scan_sequential(a, b)) <= 1e-5


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), length=lengths, alpha=st.floats(-4, 4), beta=st.floats(-4, 4))
def test_prop_linear_in_inputs(seed, length, alpha, beta):
    rng = np.random.default_rng(seed)
    a, b1 = random_pair(rng, 2, 3, length)
    b2 = rng.standard_normal(b1.shape).astype(np.float32)
    combo = scan_sequential(a, (alpha * b1 + beta * b2).astype(np.float32))
    parts = alpha * scan_sequential(a, b1).astype(np.float64) + beta * scan_sequential(a, b2)
    scale = np.abs(alpha * b1).max() + np.abs(beta * b2).max() + 1e-6
    assert np.abs(combo - parts).max() <= 1e-4 * scale * length


@settings(max_examples=40, deadline=None)
@given(a=arrays(np.float32, (1, 1, 50), elements=st.floats(0, 0.875, width=32)),
       b=arrays(np.float32, (1, 1, 50), elements=st.floats(-1, 1, width=32)))
def test_prop_bounded_accumulation(a, b):
    # |h_t| <= sum_k |b_k| * prod a, which is at most max|b| / (1 - max a)
    h = scan_parallel(a, b, 7)
    bound = np.abs(b).max() / (1 - a.max()) if a.max() < 1 else np.inf
    assert np.all(np.abs(h) <= bound * (1 + 1e-5) + 1e-6)
