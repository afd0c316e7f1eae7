"""Six-stage U-shaped segmentation network, inference only.

Resolution schedule for an H x W input (channels c0..c5)::

    enc1 conv block  in -> c0   H     -> H/2    skip t1
    enc2 conv block  c0 -> c1   H/2   -> H/4    skip t2
    enc3 conv block  c1 -> c2   H/4   -> H/8    skip t3
    enc4 PVM + pool  c2 -> c3   H/8   -> H/16   skip t4
    enc5 PVM + pool  c3 -> c4   H/16  -> H/32   skip t5
    enc6 PVM         c4 -> c5   H/32            bottleneck
    dec1 PVM         c5 -> c4   H/32            + t5
    dec2 PVM, up     c4 -> c3   H/32  -> H/16   + t4
    dec3 PVM, up     c3 -> c2   H/16  -> H/8    + t3
    dec4 conv, up    c2 -> c1   H/8   -> H/4    + t2
    dec5 conv, up    c1 -> c0   H/4   -> H/2    + t1
    head 1x1, up     c0 -> 1    H/2   -> H      sigmoid

The skips t1..t5 pass through the spatial then the channel attention bridge
when ``bridge_enabled`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import tensor as T
from .blocks import PVMConfig, PVMWeights, pvm_forward
from .errors import ConfigError, DimensionError

PVM_STAGES = ("enc4", "enc5", "enc6", "dec1", "dec2", "dec3")


@dataclass(frozen=True)
class NetConfig:
    channels: tuple = (8, 16, 24, 32, 48, 64)
    input_size: tuple = (256, 256)
    in_channels: int = 3
    parallelism: int = 4
    bridge_enabled: bool = True
    inner_kind: str = "mamba-1d"
    shared_branches: bool = True
    conv_mode: str = "depthwise"
    theta_init: float = 1.0
    sab_kernel: int = 7
    sab_dilation: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        size = self.input_size
        if isinstance(size, int):
            size = (size, size)
        object.__setattr__(self, "input_size", tuple(int(s) for s in size))
        c = self.channels
        if len(c) != 6:
            raise ConfigError(f"channels must list 6 stage widths, got {list(c)}")
        if any(a >= b for a, b in zip(c, c[1:])) or c[0] < 1:
            raise ConfigError(f"channels must be positive and strictly increasing, got {list(c)}")
        if len(self.input_size) != 2 or any(s < 32 or s % 32 for s in self.input_size):
            raise ConfigError(f"input_size extents must be positive multiples of 32, got {self.input_size}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        for cin, _ in self.pvm_io().values():
            if cin % self.parallelism:
                raise ConfigError(
                    f"PVM stage width {cin} not divisible by parallelism {self.parallelism}"
                )
        if self.sab_kernel < 1 or self.sab_dilation < 1:
            raise ConfigError("SAB kernel and dilation must be >= 1")

    def pvm_io(self) -> dict[str, tuple[int, int]]:
        c = self.channels
        return {
            "enc4": (c[2], c[3]), "enc5": (c[3], c[4]), "enc6": (c[4], c[5]),
            "dec1": (c[5], c[4]), "dec2": (c[4], c[3]), "dec3": (c[3], c[2]),
        }

    def conv_io(self) -> dict[str, tuple[int, int]]:
        c = self.channels
        return {
            "enc1": (self.in_channels, c[0]), "enc2": (c[0], c[1]), "enc3": (c[1], c[2]),
            "dec4": (c[2], c[1]), "dec5": (c[1], c[0]),
        }

    def pvm_config(self, stage: str) -> PVMConfig:
        cin, cout = self.pvm_io()[stage]
        return PVMConfig(cin, self.parallelism, self.inner_kind, out_channels=cout,
                         shared=self.shared_branches, conv_mode=self.conv_mode,
                         theta_init=self.theta_init)

    @property
    def skip_channels(self) -> tuple:
        return self.channels[:5]

    @property
    def sab_pad(self) -> int:
        return self.sab_dilation * (self.sab_kernel - 1) // 2


def net_shapes(cfg: NetConfig) -> dict[str, tuple]:
    """Name and shape of every tensor a network with ``cfg`` carries."""
    shapes: dict[str, tuple] = {}
    for stage, (cin, cout) in cfg.conv_io().items():
        shapes[f"{stage}.weight"] = (cout, cin, 3, 3)
        shapes[f"{stage}.bias"] = (cout,)
    for stage in PVM_STAGES:
        for k, s in PVMWeights.shapes(cfg.pvm_config(stage)).items():
            shapes[f"{stage}.{k}"] = s
    if cfg.bridge_enabled:
        k = cfg.sab_kernel
        shapes["bridge.sab.weight"] = (1, 2, k, k)
        shapes["bridge.sab.bias"] = (1,)
        total = sum(cfg.skip_channels)
        for i, c in enumerate(cfg.skip_channels, 1):
            shapes[f"bridge.cab.fc{i}.weight"] = (total, c)
            shapes[f"bridge.cab.fc{i}.bias"] = (c,)
    shapes["head.weight"] = (1, cfg.channels[0], 1, 1)
    shapes["head.bias"] = (1,)
    return shapes


class NetWeights(Mapping):
    """Read-only mapping from tensor name to float32 array."""

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        frozen = {}
        for name in sorted(tensors):
            arr = np.array(tensors[name], dtype=T.DTYPE, copy=True)
            arr.flags.writeable = False
            frozen[name] = arr
        self._tensors = MappingProxyType(frozen)

    def __getitem__(self, name):
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def numel(self) -> int:
        return sum(int(a.size) for a in self._tensors.values())

    def check(self, cfg: NetConfig) -> None:
        expected = net_shapes(cfg)
        missing = sorted(set(expected) - set(self._tensors))
        extra = sorted(set(self._tensors) - set(expected))
        if missing or extra:
            raise DimensionError(f"weights do not match config: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, shape in expected.items():
            if self._tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {self._tensors[name].shape}")

    def equals(self, other: Mapping) -> bool:
        """Bitwise equality of names, shapes and payloads."""
        if set(self) != set(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == np.asarray(other[k], T.DTYPE).tobytes()
            for k in self
        )


# -- stage blocks -----------------------------------------------------------

def conv_block(x, weight, bias) -> np.ndarray:
    """3x3 conv (pad 1), ReLU, 2x2 max pool."""
    return T.maxpool2(T.relu(T.conv2d(x, weight, bias, pad=1)))


def _pvm_stage(cfg: NetConfig, w: NetWeights, stage: str, x: np.ndarray, chunk) -> np.ndarray:
    pcfg = cfg.pvm_config(stage)
    pw = PVMWeights.from_tensors(pcfg, w, f"{stage}.")
    out = pvm_forward(pcfg, pw, x.transpose(1, 2, 0), chunk)
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def sab(features, weight, bias, dilation: int = 3, pad: int = 9) -> list[np.ndarray]:
    """Spatial attention bridge with one dilated conv shared by every stage.

    Each stage's channel-wise max and mean maps go through the shared conv
    and a sigmoid; the resulting spatial gate scales the feature, and the
    original feature is added back.
    """
    out = []
    for f in features:
        f = T.as_tensor(f, 3, "sab feature")
        pooled = np.stack([f.max(axis=0), f.mean(axis=0, dtype=T.DTYPE)])
        gate = T.sigmoid(T.conv2d(pooled, weight, bias, pad=pad, dilation=dilation))
        out.append(gate * f + f)
    return out


def cab_gates(features, fc_weights, fc_biases) -> list[np.ndarray]:
    descriptor = np.concatenate([T.avgpool_global(f) for f in features])
    return [T.sigmoid(descriptor @ w + b) for w, b in zip(fc_weights, fc_biases)]


def cab(features, fc_weights, fc_biases) -> list[np.ndarray]:
    """Channel attention bridge.

    The global-average descriptors of all stages are concatenated into one
    vector; a per-stage fully connected layer maps it to that stage's channel
    gates, which scale the feature before the residual add.
    """
    features = [T.as_tensor(f, 3, "cab feature") for f in features]
    if len(fc_weights) != len(features) or len(fc_biases) != len(features):
        raise DimensionError("cab: need one fully connected layer per stage")
    gates = cab_gates(features, fc_weights, fc_biases)
    return [g[:, None, None] * f + f for g, f in zip(gates, features)]


def bridge(cfg: NetConfig, w: NetWeights, skips: list[np.ndarray]) -> list[np.ndarray]:
    skips = sab(skips, w["bridge.sab.weight"], w["bridge.sab.bias"], cfg.sab_dilation, cfg.sab_pad)
    n = len(cfg.skip_channels)
    return cab(
        skips,
        [w[f"bridge.cab.fc{i}.weight"] for i in range(1, n + 1)],
        [w[f"bridge.cab.fc{i}.bias"] for i in range(1, n + 1)],
    )


def net_forward(cfg: NetConfig, w: NetWeights, image, chunk: int | None = None) -> np.ndarray:
    """Probability map (1 x H x W, values in [0, 1]) for one C x H x W image."""
    image = T.as_tensor(image, 3, "image")
    expected = (cfg.in_channels, *cfg.input_size)
    if image.shape != expected:
        raise ConfigError(f"image shape {image.shape} does not match config {expected}")
    if not isinstance(w, NetWeights):
        w = NetWeights(w)
    w.check(cfg)

    t1 = conv_block(image, w["enc1.weight"], w["enc1.bias"])
    t2 = conv_block(t1, w["enc2.weight"], w["enc2.bias"])
    t3 = conv_block(t2, w["enc3.weight"], w["enc3.bias"])
    t4 = T.maxpool2(_pvm_stage(cfg, w, "enc4", t3, chunk))
    t5 = T.maxpool2(_pvm_stage(cfg, w, "enc5", t4, chunk))
    out = _pvm_stage(cfg, w, "enc6", t5, chunk)

    skips = [t1, t2, t3, t4, t5]
    if cfg.bridge_enabled:
        skips = bridge(cfg, w, skips)
    s1, s2, s3, s4, s5 = skips

    out = _pvm_stage(cfg, w, "dec1", out, chunk) + s5
    out = T.upsample2_nearest(_pvm_stage(cfg, w, "dec2", out, chunk)) + s4
    out = T.upsample2_nearest(_pvm_stage(cfg, w, "dec3", out, chunk)) + s3
    out = T.upsample2_nearest(T.relu(T.conv2d(out, w["dec4.weight"], w["dec4.bias"], pad=1))) + s2
    out = T.upsample2_nearest(T.relu(T.conv2d(out, w["dec5.weight"], w["dec5.bias"], pad=1))) + s1
    logits = T.upsample2_nearest(T.conv2d(out, w["head.weight"], w["head.bias"], pad=0))
    return T.sigmoid(logits)
