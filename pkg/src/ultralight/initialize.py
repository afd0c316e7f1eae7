"""Deterministic weight initialization from a SplitMix64 stream.

Tensors are filled in lexicographic name order from one stream, so the
same seed and config give bitwise-identical weights on every platform.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .segnet import NetConfig, NetWeights, net_shapes
from .tensor import DTYPE

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

DT_MIN, DT_MAX = 1e-3, 1e-1


class SplitMix64:
    """Scalar reference generator."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def splitmix64_block(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs ``start+1 .. start+count`` of the stream, vectorized."""
    i = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + i * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class UniformStream:
    def __init__(self, seed: int):
        self.seed = seed
        self.drawn = 0

    def unit(self, count: int) -> np.ndarray:
        """``count`` draws in [0, 1) carrying 24 random bits each."""
        bits = splitmix64_block(self.seed, self.drawn, count)
        self.drawn += count
        return (bits >> np.uint64(40)).astype(np.float64) * 2.0 ** -24

    def uniform(self, shape: tuple, scale: float) -> np.ndarray:
        u = self.unit(int(np.prod(shape)))
        return ((2 * u - 1) * scale).astype(DTYPE).reshape(shape)


def _weight_for(name: str) -> str | None:
    if name.endswith("conv_bias"):
        return name[: -len("conv_bias")] + "conv_weight"
    if name.endswith(".bias"):
        return name[: -len(".bias")] + ".weight"
    return None


def fan_in(name: str, shape: tuple, shapes: Mapping[str, tuple]) -> int:
    src = _weight_for(name)
    if src is not None and src in shapes:
        name, shape = src, shapes[src]
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "conv_weight" or (leaf == "weight" and len(shape) == 4):
        # conv kernels lead with the output channel for dense and depthwise alike
        return int(np.prod(shape[1:]))
    return shape[-2] if len(shape) >= 2 else shape[0]


def init_tensors(shapes: Mapping[str, tuple], seed: int, theta_init: float = 1.0) -> dict[str, np.ndarray]:
    stream = UniformStream(seed)
    out = {}
    for name in sorted(shapes):
        shape = tuple(shapes[name])
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("gamma") or leaf in ("D", "Ds"):
            out[name] = np.ones(shape, DTYPE)
        elif leaf.endswith("beta"):
            out[name] = np.zeros(shape, DTYPE)
        elif leaf == "theta":
            out[name] = np.full(shape, theta_init, DTYPE)
        elif leaf == "A_log":
            n = shape[-1]
            out[name] = np.broadcast_to(np.log(np.arange(1, n + 1, dtype=np.float64)), shape).astype(DTYPE)
        elif leaf == "dt_bias":
            u = stream.unit(int(np.prod(shape)))
            dt = np.exp(u * (math.log(DT_MAX) - math.log(DT_MIN)) + math.log(DT_MIN))
            out[name] = (dt + np.log(-np.expm1(-dt))).astype(DTYPE).reshape(shape)
        else:
            out[name] = stream.uniform(shape, 1 / math.sqrt(fan_in(name, shape, shapes)))
    return out


def init_weights(cfg: NetConfig, seed: int) -> NetWeights:
    return NetWeights(init_tensors(net_shapes(cfg), seed, cfg.theta_init))


def init_bundle(bundle_cls, cfg, seed: int):
    """Seeded weights for a single block bundle (``MambaWeights``, ``VSSWeights``, ...)."""
    return bundle_cls.from_tensors(cfg, init_tensors(bundle_cls.shapes(cfg), seed))
