"""Dense float32 tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 and rank 1 to 4.
Every function checks its shape contract up front and raises
:class:`~ultralight.errors.DimensionError` instead of broadcasting, so a
wiring mistake in a block surfaces as an error rather than a wrong number.

Layout conventions: sequences are ``channels x length``, feature maps are
``channels x height x width``, and linear weights are stored ``in x out`` so
that a projection is ``x @ w``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError

DTYPE = np.float32


def as_tensor(x, rank: int | None = None, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a contiguous float32 array and validate its rank."""
    t = np.ascontiguousarray(x, dtype=DTYPE)
    if not 1 <= t.ndim <= 4:
        raise DimensionError(f"{name}: rank must be 1..4, got shape {t.shape}")
    if rank is not None and t.ndim != rank:
        raise DimensionError(f"{name}: expected rank {rank}, got shape {t.shape}")
    if min(t.shape) < 1:
        raise DimensionError(f"{name}: extents must be >= 1, got shape {t.shape}")
    return t


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise DimensionError(message)


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, 2, "matmul lhs")
    b = as_tensor(b, 2, "matmul rhs")
    _check(a.shape[1] == b.shape[0], f"matmul: inner dims differ, {a.shape} x {b.shape}")
    return a @ b


def linear(x, w, bias=None) -> np.ndarray:
    """Row-wise projection of ``x`` (rows x in) by ``w`` (in x out)."""
    y = matmul(x, w)
    if bias is not None:
        bias = as_tensor(bias, 1, "linear bias")
        _check(bias.shape[0] == y.shape[1], f"linear: bias {bias.shape} vs output {y.shape}")
        y = y + bias
    return y


def conv1d_depthwise(x, kernel, bias, pad: int | None = None) -> np.ndarray:
    """Per-channel causal 1-D convolution.

    ``x`` is C x L, ``kernel`` C x k. The input is left-padded by ``pad``
    zeros (default ``k - 1``, which keeps the length unchanged), so output
    position t only sees inputs at t and earlier.
    """
    x = as_tensor(x, 2, "conv1d input")
    kernel = as_tensor(kernel, 2, "conv1d kernel")
    bias = as_tensor(bias, 1, "conv1d bias")
    c, _ = x.shape
    k = kernel.shape[1]
    _check(kernel.shape[0] == c, f"conv1d_depthwise: kernel {kernel.shape} vs input {x.shape}")
    _check(bias.shape[0] == c, f"conv1d_depthwise: bias {bias.shape} vs input {x.shape}")
    pad = k - 1 if pad is None else pad
    _check(pad >= 0, f"conv1d_depthwise: negative pad {pad}")
    xp = np.pad(x, ((0, 0), (pad, 0)))
    _check(xp.shape[1] >= k, f"conv1d_depthwise: input {x.shape} shorter than kernel {kernel.shape}")
    windows = sliding_window_view(xp, k, axis=1)  # C x L' x k
    return np.einsum("clk,ck->cl", windows, kernel) + bias[:, None]


def conv1d_causal(x, kernel, bias, pad: int | None = None) -> np.ndarray:
    """Dense (channel-mixing) causal 1-D convolution, kernel Cout x Cin x k."""
    x = as_tensor(x, 2, "conv1d input")
    kernel = as_tensor(kernel, 3, "conv1d kernel")
    bias = as_tensor(bias, 1, "conv1d bias")
    cout, cin, k = kernel.shape
    _check(x.shape[0] == cin, f"conv1d_causal: kernel {kernel.shape} vs input {x.shape}")
    _check(bias.shape[0] == cout, f"conv1d_causal: bias {bias.shape} vs kernel {kernel.shape}")
    pad = k - 1 if pad is None else pad
    _check(pad >= 0, f"conv1d_causal: negative pad {pad}")
    xp = np.pad(x, ((0, 0), (pad, 0)))
    _check(xp.shape[1] >= k, f"conv1d_causal: input {x.shape} shorter than kernel {kernel.shape}")
    windows = sliding_window_view(xp, k, axis=1)  # Cin x L' x k
    cols = windows.transpose(1, 0, 2).reshape(windows.shape[1], cin * k)
    return (cols @ kernel.reshape(cout, cin * k).T).T + bias[:, None]


def _windows2d(x: np.ndarray, k: int, pad: int, dilation: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    span = dilation * (k - 1) + 1
    _check(
        xp.shape[1] >= span and xp.shape[2] >= span,
        f"conv2d: padded input {xp.shape} smaller than dilated kernel span {span}",
    )
    w = sliding_window_view(xp, (span, span), axis=(1, 2))  # C x H' x W' x span x span
    return w[..., ::dilation, ::dilation]


def conv2d(x, kernel, bias, pad: int = 1, dilation: int = 1) -> np.ndarray:
    """Stride-1 2-D cross-correlation (the kernel is not flipped).

    ``x`` is Cin x H x W, ``kernel`` Cout x Cin x k x k. Output extents are
    ``H + 2*pad - dilation*(k-1)``.
    """
    x = as_tensor(x, 3, "conv2d input")
    kernel = as_tensor(kernel, 4, "conv2d kernel")
    bias = as_tensor(bias, 1, "conv2d bias")
    cout, cin, k, k2 = kernel.shape
    _check(k == k2, f"conv2d: kernel must be square, got {kernel.shape}")
    _check(pad >= 0, f"conv2d: negative pad {pad}")
    _check(dilation >= 1, f"conv2d: dilation must be >= 1, got {dilation}")
    _check(x.shape[0] == cin, f"conv2d: kernel {kernel.shape} vs input {x.shape}")
    _check(bias.shape[0] == cout, f"conv2d: bias {bias.shape} vs kernel {kernel.shape}")
    win = _windows2d(x, k, pad, dilation)  # Cin x H' x W' x k x k
    _, ho, wo = win.shape[:3]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * k * k)
    out = cols @ kernel.reshape(cout, cin * k * k).T
    return out.T.reshape(cout, ho, wo) + bias[:, None, None]


def conv2d_depthwise(x, kernel, bias, pad: int = 1, dilation: int = 1) -> np.ndarray:
    """Per-channel 2-D cross-correlation, kernel C x k x k."""
    x = as_tensor(x, 3, "conv2d input")
    kernel = as_tensor(kernel, 3, "conv2d kernel")
    bias = as_tensor(bias, 1, "conv2d bias")
    c, k, k2 = kernel.shape
    _check(k == k2, f"conv2d_depthwise: kernel must be square, got {kernel.shape}")
    _check(pad >= 0, f"conv2d_depthwise: negative pad {pad}")
    _check(x.shape[0] == c, f"conv2d_depthwise: kernel {kernel.shape} vs input {x.shape}")
    _check(bias.shape[0] == c, f"conv2d_depthwise: bias {bias.shape} vs kernel {kernel.shape}")
    win = _windows2d(x, k, pad, dilation)
    return np.einsum("chwij,cij->chw", win, kernel) + bias[:, None, None]


def maxpool2(x) -> np.ndarray:
    x = as_tensor(x, 3, "maxpool2 input")
    c, h, w = x.shape
    _check(h % 2 == 0 and w % 2 == 0, f"maxpool2: extents must be even, got {x.shape}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def avgpool_global(x) -> np.ndarray:
    x = as_tensor(x, 3, "avgpool input")
    return x.mean(axis=(1, 2), dtype=DTYPE)


def upsample2_nearest(x) -> np.ndarray:
    x = as_tensor(x, 3, "upsample input")
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def layernorm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Normalize over the trailing axis, then scale by ``gamma`` and shift by ``beta``."""
    x = as_tensor(x, name="layernorm input")
    gamma = as_tensor(gamma, 1, "layernorm gamma")
    beta = as_tensor(beta, 1, "layernorm beta")
    c = x.shape[-1]
    _check(gamma.shape[0] == c and beta.shape[0] == c,
           f"layernorm: affine {gamma.shape}/{beta.shape} vs input {x.shape}")
    mean = x.mean(axis=-1, keepdims=True, dtype=DTYPE)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True, dtype=DTYPE)
    return centered / np.sqrt(var + DTYPE(eps)) * gamma + beta


def sigmoid(x) -> np.ndarray:
    x = as_tensor(x, name="sigmoid input")
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(DTYPE)


def silu(x) -> np.ndarray:
    x = as_tensor(x, name="silu input")
    return x * sigmoid(x)


def softplus(x) -> np.ndarray:
    x = as_tensor(x, name="softplus input")
    safe = np.minimum(x, 20)
    return np.where(x > 20, x, np.log1p(np.exp(safe))).astype(DTYPE)


def relu(x) -> np.ndarray:
    x = as_tensor(x, name="relu input")
    return np.maximum(x, 0)
