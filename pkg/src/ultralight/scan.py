"""Selective-scan SSM kernel.

The state update is the first-order linear recurrence

    h[t] = a_bar[t] * h[t-1] + b_term[t],   h[-1] = 0

evaluated independently on every (channel, state) lane. ``scan_sequential``
is the reference loop; ``scan_parallel`` evaluates the same recurrence with
the associative operator

    (a1, b1) (+) (a2, b2) = (a2 * a1, a2 * b1 + b2)

using a chunked scheme: a sequential pass inside fixed-size chunks
(vectorized across chunks), a Blelloch up-sweep/down-sweep over the chunk
summaries, and a fix-up pass that folds each chunk's carry back in.
``chunk=1`` is a pure Blelloch scan, ``chunk>=L`` a single sequential pass.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import DTYPE, as_tensor


def discretize(dt, A, B, x) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order hold on the state matrix, Euler step on the input matrix.

    Shapes: ``dt`` D x L, ``A`` D x N, ``B`` N x L, ``x`` D x L.
    Returns ``(a_bar, b_term)``, both D x N x L, with
    ``a_bar = exp(dt * A)`` and ``b_term = dt * B * x``.
    """
    dt = as_tensor(dt, 2, "dt")
    A = as_tensor(A, 2, "A")
    B = as_tensor(B, 2, "B")
    x = as_tensor(x, 2, "x")
    d, length = dt.shape
    n = A.shape[1]
    if A.shape[0] != d or B.shape != (n, length) or x.shape != (d, length):
        raise DimensionError(
            f"discretize: dt {dt.shape}, A {A.shape}, B {B.shape}, x {x.shape} disagree"
        )
    if not np.all(dt > 0):
        raise DomainError("discretize: step sizes dt must be strictly positive")
    a_bar = np.exp(dt[:, None, :] * A[:, :, None])
    b_term = (dt * x)[:, None, :] * B[None, :, :]
    return a_bar, b_term


def _check_pair(a_bar, b_term) -> tuple[np.ndarray, np.ndarray]:
    a_bar = as_tensor(a_bar, 3, "a_bar")
    b_term = as_tensor(b_term, 3, "b_term")
    if a_bar.shape != b_term.shape:
        raise DimensionError(f"scan: a_bar {a_bar.shape} vs b_term {b_term.shape}")
    return a_bar, b_term


def scan_sequential(a_bar, b_term) -> np.ndarray:
    a_bar, b_term = _check_pair(a_bar, b_term)
    h = np.empty_like(b_term)
    state = np.zeros(b_term.shape[:2], dtype=DTYPE)
    for t in range(b_term.shape[2]):
        state = a_bar[:, :, t] * state + b_term[:, :, t]
        h[:, :, t] = state
    return h


def combine(first, second):
    """Compose two affine maps, ``first`` applied before ``second``."""
    a1, b1 = first
    a2, b2 = second
    return a2 * a1, a2 * b1 + b2


def _blelloch_exclusive(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exclusive scan along the last axis; the length must be a power of two."""
    a = a.copy()
    b = b.copy()
    n = a.shape[-1]
    stride = 2
    while stride <= n:
        right = np.arange(stride - 1, n, stride)
        left = right - stride // 2
        a[..., right], b[..., right] = combine((a[..., left], b[..., left]), (a[..., right], b[..., right]))
        stride *= 2
    a[..., n - 1] = 1
    b[..., n - 1] = 0
    stride = n
    while stride >= 2:
        right = np.arange(stride - 1, n, stride)
        left = right - stride // 2
        la, lb = a[..., left], b[..., left]
        pa, pb = a[..., right], b[..., right]
        a[..., left], b[..., left] = pa, pb
        a[..., right], b[..., right] = combine((pa, pb), (la, lb))
        stride //= 2
    return a, b


def scan_parallel(a_bar, b_term, chunk: int = 64) -> np.ndarray:
    a_bar, b_term = _check_pair(a_bar, b_term)
    if chunk < 1:
        raise DomainError(f"scan_parallel: chunk must be >= 1, got {chunk}")
    d, n, length = b_term.shape
    chunk = min(chunk, length)
    n_chunks = -(-length // chunk)
    padded = n_chunks * chunk
    if padded != length:
        # identity elements keep the tail inert
        a_bar = np.concatenate([a_bar, np.ones((d, n, padded - length), DTYPE)], axis=2)
        b_term = np.concatenate([b_term, np.zeros((d, n, padded - length), DTYPE)], axis=2)
    a = a_bar.reshape(d, n, n_chunks, chunk)
    b = b_term.reshape(d, n, n_chunks, chunk)

    # phase 1: inclusive scan inside every chunk, all chunks at once
    local_a = np.empty_like(a)
    local_b = np.empty_like(b)
    local_a[..., 0] = a[..., 0]
    local_b[..., 0] = b[..., 0]
    for j in range(1, chunk):
        local_a[..., j], local_b[..., j] = combine(
            (local_a[..., j - 1], local_b[..., j - 1]), (a[..., j], b[..., j])
        )

    # phase 2: exclusive Blelloch scan over the chunk totals
    width = 1 << (n_chunks - 1).bit_length()
    tot_a = np.ones((d, n, width), DTYPE)
    tot_b = np.zeros((d, n, width), DTYPE)
    tot_a[..., :n_chunks] = local_a[..., -1]
    tot_b[..., :n_chunks] = local_b[..., -1]
    _, carry = _blelloch_exclusive(tot_a, tot_b)
    carry = carry[..., :n_chunks]

    # phase 3: fold each chunk's incoming state into its local prefixes
    h = local_b + local_a * carry[..., None]
    return h.reshape(d, n, padded)[..., :length]


def ssm_output(h, C, D_skip, x) -> np.ndarray:
    """Read out ``y[d, t] = sum_n C[n, t] * h[d, n, t] + D_skip[d] * x[d, t]``."""
    h = as_tensor(h, 3, "h")
    C = as_tensor(C, 2, "C")
    D_skip = as_tensor(D_skip, 1, "D_skip")
    x = as_tensor(x, 2, "x")
    d, n, length = h.shape
    if C.shape != (n, length) or D_skip.shape != (d,) or x.shape != (d, length):
        raise DimensionError(
            f"ssm_output: h {h.shape}, C {C.shape}, D {D_skip.shape}, x {x.shape} disagree"
        )
    return np.einsum("dnl,nl->dl", h, C) + D_skip[:, None] * x


def selective_scan(dt, A, B, C, D_skip, x, chunk: int | None = None) -> np.ndarray:
    """Full S6 pass: discretize, run the recurrence, read out.

    ``chunk=None`` uses the sequential reference; any positive value routes
    through :func:`scan_parallel`.
    """
    a_bar, b_term = discretize(dt, A, B, x)
    h = scan_sequential(a_bar, b_term) if chunk is None else scan_parallel(a_bar, b_term, chunk)
    return ssm_output(h, C, D_skip, x)
