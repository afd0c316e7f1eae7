"""Numerical building blocks and parameter accounting for a lightweight
parallel Vision Mamba U-Net."""

from .accounting import ParamReport, FlopReport, mamba_params, model_flops, model_params, pvm_params, ss2d_params
from .blocks import (
    MambaConfig, MambaWeights, PVMConfig, PVMWeights, SS2DConfig, VSSWeights,
    mamba_forward, pvm_forward, scan_expand, scan_merge, vm_forward, vss_forward,
)
from .errors import ConfigError, DimensionError, DomainError, ParseError
from .initialize import init_weights
from .metrics import ConfusionCounts, acc, confusion, dsc, se, sp
from .scan import discretize, scan_parallel, scan_sequential, ssm_output
from .segnet import NetConfig, NetWeights, net_forward
from .weightfile import load_weights, save_weights

__version__ = "0.1.0"
