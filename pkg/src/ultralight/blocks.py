"""Mamba, VSS and Parallel Vision Mamba blocks (forward pass only).

Weight bundles are frozen dataclasses of read-only float32 arrays. Each
bundle type knows the exact shape of every tensor for a given config
(``shapes``), which is what the parameter census is checked against.

Two conv variants are supported for the token-mixing convolution inside a
block. ``conv_mode="full"`` is a dense channel-mixing convolution and is what
the analytic census formulas count (``d_conv * d_inner**2 + d_inner``);
``conv_mode="depthwise"`` is one filter per channel (``d_conv * d_inner +
d_inner``), which is what the segmentation network instantiates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import ClassVar, Mapping

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .scan import selective_scan

CONV_MODES = ("full", "depthwise")
INNER_KINDS = ("mamba-1d", "ss2d")


def default_dt_rank(d_model: int) -> int:
    return max(1, d_model // 16)


@dataclass(frozen=True)
class MambaConfig:
    d_model: int
    expand: int = 2
    d_state: int = 16
    d_conv: int = 4
    dt_rank: int | None = None
    conv_mode: str = "full"

    def __post_init__(self):
        if self.dt_rank is None:
            object.__setattr__(self, "dt_rank", default_dt_rank(self.d_model))
        for name in ("d_model", "expand", "d_state", "d_conv", "dt_rank"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{type(self).__name__}.{name} must be >= 1, got {getattr(self, name)}")
        if self.conv_mode not in CONV_MODES:
            raise ConfigError(f"conv_mode must be one of {CONV_MODES}, got {self.conv_mode!r}")

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model


@dataclass(frozen=True)
class SS2DConfig(MambaConfig):
    d_conv: int = 3
    K: int = 4

    def __post_init__(self):
        super().__post_init__()
        if self.K != 4:
            raise ConfigError(f"SS2D uses exactly 4 scan directions, got K={self.K}")


def _readonly(a, shape: tuple, name: str) -> np.ndarray:
    arr = np.array(a, dtype=T.DTYPE, copy=True)
    if arr.shape != tuple(shape):
        raise DimensionError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


class _Bundle:
    """Shared plumbing for flat tensor bundles keyed by field name."""

    @classmethod
    def shapes(cls, cfg) -> dict[str, tuple]:
        raise NotImplementedError

    @classmethod
    def from_tensors(cls, cfg, tensors: Mapping[str, np.ndarray], prefix: str = ""):
        shapes = cls.shapes(cfg)
        missing = [prefix + k for k in shapes if prefix + k not in tensors]
        if missing:
            raise DimensionError(f"missing weight tensors: {missing}")
        return cls(**{k: _readonly(tensors[prefix + k], s, prefix + k) for k, s in shapes.items()})

    @classmethod
    def zeros(cls, cfg):
        return cls(**{k: _readonly(np.zeros(s), s, k) for k, s in cls.shapes(cfg).items()})

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}

    def numel(self) -> int:
        return sum(int(getattr(self, f.name).size) for f in fields(self))


@dataclass(frozen=True, eq=False)
class MambaWeights(_Bundle):
    in_proj: np.ndarray
    conv_weight: np.ndarray
    conv_bias: np.ndarray
    x_proj: np.ndarray
    dt_proj: np.ndarray
    dt_bias: np.ndarray
    A_log: np.ndarray
    D: np.ndarray
    out_proj: np.ndarray

    @classmethod
    def shapes(cls, cfg: MambaConfig) -> dict[str, tuple]:
        di, r, n = cfg.d_inner, cfg.dt_rank, cfg.d_state
        conv = (di, di, cfg.d_conv) if cfg.conv_mode == "full" else (di, cfg.d_conv)
        return {
            "in_proj": (cfg.d_model, 2 * di),
            "conv_weight": conv,
            "conv_bias": (di,),
            "x_proj": (di, r + 2 * n),
            "dt_proj": (r, di),
            "dt_bias": (di,),
            "A_log": (di, n),
            "D": (di,),
            "out_proj": (di, cfg.d_model),
        }


@dataclass(frozen=True, eq=False)
class VSSWeights(_Bundle):
    in_proj: np.ndarray
    conv_weight: np.ndarray
    conv_bias: np.ndarray
    x_proj: np.ndarray
    dt_proj: np.ndarray
    dt_bias: np.ndarray
    A_log: np.ndarray
    Ds: np.ndarray
    norm_gamma: np.ndarray
    norm_beta: np.ndarray
    out_proj: np.ndarray

    @classmethod
    def shapes(cls, cfg: SS2DConfig) -> dict[str, tuple]:
        di, r, n, k = cfg.d_inner, cfg.dt_rank, cfg.d_state, cfg.K
        c = cfg.d_conv
        conv = (di, di, c, c) if cfg.conv_mode == "full" else (di, c, c)
        return {
            "in_proj": (cfg.d_model, 2 * di),
            "conv_weight": conv,
            "conv_bias": (di,),
            "x_proj": (k, di, r + 2 * n),
            "dt_proj": (k, r, di),
            "dt_bias": (k, di),
            "A_log": (k * di, n),
            "Ds": (k * di,),
            "norm_gamma": (di,),
            "norm_beta": (di,),
            "out_proj": (di, cfg.d_model),
        }


def _s6(u: np.ndarray, x_proj, dt_proj, dt_bias, A_log, D, dt_rank: int, d_state: int,
        chunk: int | None) -> np.ndarray:
    """Input-dependent S6 on one sequence ``u`` (d_inner x L)."""
    xdbl = T.matmul(u.T, x_proj)
    dt_raw = xdbl[:, :dt_rank]
    B = xdbl[:, dt_rank:dt_rank + d_state].T
    C = xdbl[:, dt_rank + d_state:].T
    dt = T.softplus(T.linear(dt_raw, dt_proj, dt_bias)).T
    A = -np.exp(A_log)
    return selective_scan(dt, A, B, C, D, u, chunk)


def mamba_forward(cfg: MambaConfig, w: MambaWeights, x, chunk: int | None = None) -> np.ndarray:
    """Mamba block on a token sequence ``x`` of shape L x d_model."""
    x = T.as_tensor(x, 2, "mamba input")
    if x.shape[1] != cfg.d_model:
        raise DimensionError(f"mamba_forward: input {x.shape} vs d_model {cfg.d_model}")
    di = cfg.d_inner
    xz = T.matmul(x, w.in_proj)
    u, z = xz[:, :di].T, xz[:, di:]
    if cfg.conv_mode == "full":
        u = T.conv1d_causal(u, w.conv_weight, w.conv_bias)
    else:
        u = T.conv1d_depthwise(u, w.conv_weight, w.conv_bias)
    u = T.silu(u)
    y = _s6(u, w.x_proj, w.dt_proj, w.dt_bias, w.A_log, w.D, cfg.dt_rank, cfg.d_state, chunk)
    return T.matmul(y.T * T.silu(z), w.out_proj)


def vm_forward(cfg: MambaConfig, w: MambaWeights, theta: float, x, chunk: int | None = None) -> np.ndarray:
    """Residual Vision Mamba unit: ``mamba(x) + theta * x``."""
    x = T.as_tensor(x, 2, "vm input")
    return mamba_forward(cfg, w, x, chunk) + T.DTYPE(theta) * x


# -- four-direction scan for SS2D ------------------------------------------

def direction_index_maps(height: int, width: int) -> np.ndarray:
    """Flat grid index visited at each sequence position, per direction.

    Row 0 is row-major (top-left to bottom-right), row 1 its reverse, row 2
    column-major (the transposed grid read row-major), row 3 its reverse.
    """
    grid = np.arange(height * width).reshape(height, width)
    row_major = grid.reshape(-1)
    col_major = grid.T.reshape(-1)
    return np.stack([row_major, row_major[::-1], col_major, col_major[::-1]])


def scan_expand(x) -> np.ndarray:
    """C x H x W feature map to the four directional sequences, 4 x C x (H*W)."""
    x = T.as_tensor(x, 3, "scan_expand input")
    c, h, w = x.shape
    flat = x.reshape(c, h * w)
    return np.stack([flat[:, idx] for idx in direction_index_maps(h, w)])


def scan_merge(seqs, height: int, width: int) -> np.ndarray:
    """Put each directional sequence back on the grid and sum the four grids."""
    seqs = T.as_tensor(seqs, 3, "scan_merge input")
    k, c, length = seqs.shape
    if k != 4 or length != height * width:
        raise DimensionError(f"scan_merge: sequences {seqs.shape} vs grid {height}x{width}")
    out = np.zeros((c, length), dtype=T.DTYPE)
    for seq, idx in zip(seqs, direction_index_maps(height, width)):
        out[:, idx] += seq
    return out.reshape(c, height, width)


def vss_forward(cfg: SS2DConfig, w: VSSWeights, x, chunk: int | None = None) -> np.ndarray:
    """VSS block on an H x W x C feature map."""
    x = T.as_tensor(x, 3, "vss input")
    h, wd, c = x.shape
    if c != cfg.d_model:
        raise DimensionError(f"vss_forward: input {x.shape} vs d_model {cfg.d_model}")
    di = cfg.d_inner
    xz = T.matmul(x.reshape(h * wd, c), w.in_proj)
    u, z = xz[:, :di], xz[:, di:]
    grid = u.T.reshape(di, h, wd)
    if cfg.conv_mode == "full":
        grid = T.conv2d(grid, w.conv_weight, w.conv_bias, pad=(cfg.d_conv - 1) // 2)
    else:
        grid = T.conv2d_depthwise(grid, w.conv_weight, w.conv_bias, pad=(cfg.d_conv - 1) // 2)
    grid = T.silu(grid)
    seqs = scan_expand(grid)
    ys = np.stack([
        _s6(seqs[k], w.x_proj[k], w.dt_proj[k], w.dt_bias[k],
            w.A_log[k * di:(k + 1) * di], w.Ds[k * di:(k + 1) * di],
            cfg.dt_rank, cfg.d_state, chunk)
        for k in range(cfg.K)
    ])
    merged = scan_merge(ys, h, wd).reshape(di, h * wd).T
    y = T.layernorm(merged, w.norm_gamma, w.norm_beta) * T.silu(z)
    return T.matmul(y, w.out_proj).reshape(h, wd, c)


# -- Parallel Vision Mamba layer -------------------------------------------

@dataclass(frozen=True)
class PVMConfig:
    """Parallel Vision Mamba layer.

    ``shared=True`` runs every channel group through one set of block
    weights; ``shared=False`` gives each group its own. ``out_channels``
    lets the closing projection change width (defaults to ``channels``).
    """

    channels: int
    parallelism: int = 4
    inner_kind: str = "mamba-1d"
    out_channels: int | None = None
    shared: bool = False
    conv_mode: str = "full"
    expand: int = 2
    d_state: int = 16
    theta_init: float = 1.0

    def __post_init__(self):
        if self.out_channels is None:
            object.__setattr__(self, "out_channels", self.channels)
        if self.parallelism < 1 or self.channels % self.parallelism:
            raise ConfigError(
                f"channels {self.channels} not divisible by parallelism {self.parallelism}"
            )
        if self.inner_kind not in INNER_KINDS:
            raise ConfigError(f"inner_kind must be one of {INNER_KINDS}, got {self.inner_kind!r}")
        if self.out_channels < 1:
            raise ConfigError(f"out_channels must be >= 1, got {self.out_channels}")

    @property
    def branch_channels(self) -> int:
        return self.channels // self.parallelism

    @property
    def n_branch_weights(self) -> int:
        return 1 if self.shared else self.parallelism

    def branch_config(self) -> MambaConfig:
        if self.inner_kind == "ss2d":
            return SS2DConfig(self.branch_channels, expand=self.expand, d_state=self.d_state,
                              conv_mode=self.conv_mode)
        return MambaConfig(self.branch_channels, expand=self.expand, d_state=self.d_state,
                           conv_mode=self.conv_mode)

    def branch_bundle_type(self) -> type:
        return VSSWeights if self.inner_kind == "ss2d" else MambaWeights


@dataclass(frozen=True, eq=False)
class PVMWeights:
    ln_in_gamma: np.ndarray
    ln_in_beta: np.ndarray
    ln_out_gamma: np.ndarray
    ln_out_beta: np.ndarray
    proj: np.ndarray
    theta: np.ndarray
    branches: tuple = field(default=())

    OUTER: ClassVar[tuple] = ("ln_in_gamma", "ln_in_beta", "ln_out_gamma", "ln_out_beta", "proj", "theta")

    @staticmethod
    def outer_shapes(cfg: PVMConfig) -> dict[str, tuple]:
        c = cfg.channels
        return {
            "ln_in_gamma": (c,), "ln_in_beta": (c,),
            "ln_out_gamma": (c,), "ln_out_beta": (c,),
            "proj": (c, cfg.out_channels),
            "theta": (cfg.parallelism,),
        }

    @staticmethod
    def branch_prefix(cfg: PVMConfig, i: int) -> str:
        return "mamba." if cfg.shared else f"branch{i}."

    @classmethod
    def shapes(cls, cfg: PVMConfig) -> dict[str, tuple]:
        out = dict(cls.outer_shapes(cfg))
        inner = cfg.branch_bundle_type().shapes(cfg.branch_config())
        for i in range(cfg.n_branch_weights):
            out.update({cls.branch_prefix(cfg, i) + k: s for k, s in inner.items()})
        return out

    @classmethod
    def from_tensors(cls, cfg: PVMConfig, tensors: Mapping[str, np.ndarray], prefix: str = ""):
        outer = {}
        for k, s in cls.outer_shapes(cfg).items():
            if prefix + k not in tensors:
                raise DimensionError(f"missing weight tensor {prefix + k!r}")
            outer[k] = _readonly(tensors[prefix + k], s, prefix + k)
        bundle = cfg.branch_bundle_type()
        branches = tuple(
            bundle.from_tensors(cfg.branch_config(), tensors, prefix + cls.branch_prefix(cfg, i))
            for i in range(cfg.n_branch_weights)
        )
        return cls(branches=branches, **outer)

    def tensors(self, cfg: PVMConfig, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: getattr(self, k) for k in self.OUTER}
        for i, b in enumerate(self.branches):
            out.update(b.tensors(prefix + self.branch_prefix(cfg, i)))
        return out

    def numel(self) -> int:
        return sum(int(getattr(self, k).size) for k in self.OUTER) + sum(b.numel() for b in self.branches)


def split_channels(x, p: int) -> list[np.ndarray]:
    """Split the trailing channel axis into ``p`` contiguous, equal groups."""
    x = T.as_tensor(x, name="split input")
    c = x.shape[-1]
    if p < 1 or c % p:
        raise ConfigError(f"cannot split {c} channels into {p} equal groups")
    step = c // p
    return [x[..., i * step:(i + 1) * step] for i in range(p)]


def concat_channels(parts) -> np.ndarray:
    return np.concatenate(parts, axis=-1)


def pvm_forward(cfg: PVMConfig, w: PVMWeights, x, chunk: int | None = None) -> np.ndarray:
    """PVM layer on an H x W x C map; returns H x W x out_channels."""
    x = T.as_tensor(x, 3, "pvm input")
    h, wd, c = x.shape
    if c != cfg.channels:
        raise DimensionError(f"pvm_forward: input {x.shape} vs channels {cfg.channels}")
    if len(w.branches) != cfg.n_branch_weights:
        raise ConfigError(f"pvm_forward: expected {cfg.n_branch_weights} branch bundles, got {len(w.branches)}")
    bcfg = cfg.branch_config()
    y = T.layernorm(x.reshape(h * wd, c), w.ln_in_gamma, w.ln_in_beta)
    outs = []
    for i, group in enumerate(split_channels(y, cfg.parallelism)):
        bw = w.branches[0 if cfg.shared else i]
        theta = w.theta[i]
        group = np.ascontiguousarray(group)
        if cfg.inner_kind == "ss2d":
            g = group.reshape(h, wd, -1)
            out = vss_forward(bcfg, bw, g, chunk).reshape(h * wd, -1) + theta * group
        else:
            out = vm_forward(bcfg, bw, theta, group, chunk)
        outs.append(out)
    y = T.layernorm(concat_channels(outs), w.ln_out_gamma, w.ln_out_beta)
    return T.matmul(y, w.proj).reshape(h, wd, cfg.out_channels)
