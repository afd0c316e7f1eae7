"""Exact parameter census and closed-form FLOP estimates.

All counts are Python integers. The formulas here are written out term by
term and do not consult the weight-shape tables in :mod:`ultralight.blocks`;
the tests compare the two so that either side catches mistakes in the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import MambaConfig, PVMConfig, SS2DConfig
from .errors import ConfigError
from .segnet import NetConfig

FLOP_CONVENTIONS = ("macs", "2macs")


@dataclass
class ParamReport:
    """Itemized parameter count.

    When ``baseline`` is set, ``reduction_fraction`` is ``1 - total/baseline``.
    ``parts`` is the number of identical units the total is made of; the
    rounded reduction first rounds the per-unit ratio to three decimals and
    then scales it back up, which is how a per-block figure such as 0.063 is
    turned into a layer-level one.
    """

    name: str
    items: list = field(default_factory=list)
    baseline: int | None = None
    parts: int = 1

    @property
    def total(self) -> int:
        return sum(count for _, count in self.items)

    def item(self, term: str) -> int:
        for name, count in self.items:
            if name == term:
                return count
        raise KeyError(term)

    def subtotal(self, prefix: str) -> int:
        return sum(count for name, count in self.items if name.startswith(prefix))

    @property
    def reduction_fraction(self) -> float | None:
        if self.baseline is None:
            return None
        return 1 - self.total / self.baseline

    @property
    def reduction_rounded(self) -> float | None:
        if self.baseline is None:
            return None
        unit = round(self.total / self.parts / self.baseline, 3)
        return round(1 - self.parts * unit, 3)

    def with_baseline(self, baseline: int, parts: int = 1) -> "ParamReport":
        return ParamReport(self.name, list(self.items), baseline, parts)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "items": [{"term": t, "count": c} for t, c in self.items],
            "total": self.total,
        }
        if self.baseline is not None:
            out["baseline"] = self.baseline
            out["reduction_percent_exact"] = round(100 * self.reduction_fraction, 4)
            out["reduction_percent_rounded"] = round(100 * self.reduction_rounded, 1)
        return out


@dataclass
class FlopReport:
    name: str
    convention: str
    items: list = field(default_factory=list)

    def __post_init__(self):
        if self.convention not in FLOP_CONVENTIONS:
            raise ConfigError(f"flop convention must be one of {FLOP_CONVENTIONS}, got {self.convention!r}")

    @property
    def total(self) -> int:
        return sum(f for _, f in self.items)

    @property
    def total_gflops(self) -> float:
        return self.total / 1e9

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "convention": self.convention,
            "items": [{"term": t, "flops": f} for t, f in self.items],
            "total": self.total,
            "total_gflops": round(self.total_gflops, 6),
        }


# -- block census -------------------------------------------------------------

def _conv_term(cfg: MambaConfig, spatial_dims: int) -> int:
    di, k = cfg.d_inner, cfg.d_conv
    taps = k ** spatial_dims
    if cfg.conv_mode == "full":
        return taps * di * di + di
    return taps * di + di


def mamba_params(cfg: MambaConfig) -> ParamReport:
    d, di, r, n = cfg.d_model, cfg.d_inner, cfg.dt_rank, cfg.d_state
    return ParamReport(f"mamba(d_model={d})", [
        ("in_proj", d * di * 2),
        ("out_proj", di * d),
        ("x_proj", di * (r + n * 2)),
        ("dt_proj", r * di + di),
        ("conv1d", _conv_term(cfg, 1)),
        ("A_logs", di * n),
        ("D", di),
    ])


def ss2d_params(cfg: SS2DConfig) -> ParamReport:
    d, di, r, n, k = cfg.d_model, cfg.d_inner, cfg.dt_rank, cfg.d_state, cfg.K
    return ParamReport(f"ss2d(d_model={d})", [
        ("in_proj", d * di * 2),
        ("out_proj", di * d),
        ("out_norm", di + di),
        ("x_proj", k * (di * (r + n * 2))),
        ("dt_proj", k * (r * di + di)),
        ("conv2d", _conv_term(cfg, 2)),
        ("A_logs", di * n * k),
        ("Ds", k * di),
    ])


def block_params(cfg: MambaConfig) -> ParamReport:
    return ss2d_params(cfg) if isinstance(cfg, SS2DConfig) else mamba_params(cfg)


def pvm_params(channels: int, p: int = 4, kind: str = "mamba-1d", *, out_channels: int | None = None,
               shared: bool = False, conv_mode: str = "full") -> ParamReport:
    cfg = PVMConfig(channels, p, kind, out_channels=out_channels, shared=shared, conv_mode=conv_mode)
    return pvm_params_for(cfg)


def pvm_params_for(cfg: PVMConfig) -> ParamReport:
    c, p = cfg.channels, cfg.parallelism
    branch = block_params(cfg.branch_config()).total
    return ParamReport(f"pvm(C={c}, p={p}, {cfg.inner_kind}{', shared' if cfg.shared else ''})", [
        ("branches", cfg.n_branch_weights * branch),
        ("ln_in", 2 * c),
        ("ln_out", 2 * c),
        ("projection", c * cfg.out_channels),
        ("theta", p),
    ])


def model_params(cfg: NetConfig) -> ParamReport:
    items = []
    for stage, (cin, cout) in cfg.conv_io().items():
        if stage.startswith("dec"):
            continue
        items.append((f"{stage}.conv", cout * cin * 9 + cout))
    for stage in ("enc4", "enc5", "enc6", "dec1", "dec2", "dec3"):
        rep = pvm_params_for(cfg.pvm_config(stage))
        items.extend((f"{stage}.{term}", count) for term, count in rep.items)
    for stage in ("dec4", "dec5"):
        cin, cout = cfg.conv_io()[stage]
        items.append((f"{stage}.conv", cout * cin * 9 + cout))
    if cfg.bridge_enabled:
        k = cfg.sab_kernel
        items.append(("bridge.sab", 2 * k * k + 1))
        total = sum(cfg.skip_channels)
        items.append(("bridge.cab", sum(total * c + c for c in cfg.skip_channels)))
    items.append(("head", cfg.channels[0] + 1))
    return ParamReport(f"net(channels={list(cfg.channels)}, p={cfg.parallelism})", items)


# -- FLOPs --------------------------------------------------------------------
# Only multiply-accumulate work is counted: convolutions, projections and the
# selective scan. Activations, normalizations, pooling and residual adds are
# left out.

def scan_macs(d_inner: int, d_state: int, length: int) -> int:
    # per (channel, state, step): dt*A, (dt*x)*B, recurrence update, readout by C
    # per (channel, step): dt*x and the skip term
    return length * d_inner * (4 * d_state + 2)


def mamba_macs(cfg: MambaConfig, length: int) -> int:
    d, di, r, n = cfg.d_model, cfg.d_inner, cfg.dt_rank, cfg.d_state
    conv = di * cfg.d_conv * (di if cfg.conv_mode == "full" else 1)
    per_token = d * 2 * di + conv + di * (r + 2 * n) + r * di + di + di * d
    return length * per_token + scan_macs(di, n, length)


def vss_macs(cfg: SS2DConfig, length: int) -> int:
    d, di, r, n, k = cfg.d_model, cfg.d_inner, cfg.dt_rank, cfg.d_state, cfg.K
    conv = di * cfg.d_conv ** 2 * (di if cfg.conv_mode == "full" else 1)
    per_token = d * 2 * di + conv + k * (di * (r + 2 * n) + r * di) + di + di * d
    return length * per_token + k * scan_macs(di, n, length)


def pvm_macs(cfg: PVMConfig, length: int) -> int:
    bcfg = cfg.branch_config()
    branch = vss_macs(bcfg, length) if isinstance(bcfg, SS2DConfig) else mamba_macs(bcfg, length)
    return cfg.parallelism * branch + length * cfg.channels * cfg.out_channels


def model_flops(cfg: NetConfig, convention: str = "2macs") -> FlopReport:
    """Closed-form forward cost at ``cfg.input_size``."""
    if convention not in FLOP_CONVENTIONS:
        raise ConfigError(f"flop convention must be one of {FLOP_CONVENTIONS}, got {convention!r}")
    scale = 2 if convention == "2macs" else 1
    h, w = cfg.input_size
    conv_res = {"enc1": 1, "enc2": 2, "enc3": 4, "dec4": 8, "dec5": 4}
    pvm_res = {"enc4": 8, "enc5": 16, "enc6": 32, "dec1": 32, "dec2": 32, "dec3": 16}
    items = []
    for stage, (cin, cout) in cfg.conv_io().items():
        f = conv_res[stage]
        items.append((f"{stage}.conv", cout * cin * 9 * (h // f) * (w // f)))
    for stage, f in pvm_res.items():
        items.append((f"{stage}.pvm", pvm_macs(cfg.pvm_config(stage), (h // f) * (w // f))))
    if cfg.bridge_enabled:
        skip_res = [2, 4, 8, 16, 32]
        k2 = cfg.sab_kernel ** 2
        items.append(("bridge.sab", sum(2 * k2 * (h // f) * (w // f) for f in skip_res)))
        total = sum(cfg.skip_channels)
        items.append(("bridge.cab", sum(total * c for c in cfg.skip_channels)))
    items.append(("head", cfg.channels[0] * (h // 2) * (w // 2)))
    order = ["enc1", "enc2", "enc3", "enc4", "enc5", "enc6", "bridge", "dec1", "dec2", "dec3", "dec4", "dec5", "head"]
    items.sort(key=lambda it: order.index(it[0].split(".")[0]))
    return FlopReport(f"net(channels={list(cfg.channels)}, p={cfg.parallelism}, {h}x{w})", convention,
                      [(t, scale * m) for t, m in items])
