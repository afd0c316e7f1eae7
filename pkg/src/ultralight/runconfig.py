"""JSON run configuration.

Every key is optional; missing keys take the defaults below, which describe
the reference model (six stages of width 8..64, four-way PVM layers,
256 x 256 input). Unknown keys are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import jsonschema

from .errors import ConfigError
from .segnet import NetConfig

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "channels": {
            "type": "array", "items": {"type": "integer", "minimum": 1},
            "minItems": 6, "maxItems": 6,
        },
        "parallelism": {"type": "integer", "minimum": 1},
        "inner_kind": {"enum": ["mamba-1d", "ss2d"]},
        "input_size": {
            "oneOf": [
                {"type": "integer", "minimum": 32},
                {"type": "array", "items": {"type": "integer", "minimum": 32}, "minItems": 2, "maxItems": 2},
            ]
        },
        "in_channels": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "bridge_enabled": {"type": "boolean"},
        "flop_convention": {"enum": ["macs", "2macs"]},
        "theta_init": {"type": "number"},
        "shared_branches": {"type": "boolean"},
        "conv_mode": {"enum": ["full", "depthwise"]},
    },
}


@dataclass(frozen=True)
class RunConfig:
    channels: tuple = (8, 16, 24, 32, 48, 64)
    parallelism: int = 4
    inner_kind: str = "mamba-1d"
    input_size: tuple = (256, 256)
    in_channels: int = 3
    seed: int = 0
    bridge_enabled: bool = True
    flop_convention: str = "2macs"
    theta_init: float = 1.0
    shared_branches: bool = True
    conv_mode: str = "depthwise"

    def net_config(self) -> NetConfig:
        return NetConfig(
            channels=tuple(self.channels),
            input_size=self.input_size,
            in_channels=self.in_channels,
            parallelism=self.parallelism,
            bridge_enabled=self.bridge_enabled,
            inner_kind=self.inner_kind,
            shared_branches=self.shared_branches,
            conv_mode=self.conv_mode,
            theta_init=self.theta_init,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["input_size"] = list(self.input_size)
        return d


def parse_run_config(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid run config at {where}: {exc.message}") from None
    values = dict(doc)
    if "channels" in values:
        values["channels"] = tuple(values["channels"])
    size = values.get("input_size")
    if isinstance(size, int):
        values["input_size"] = (size, size)
    elif size is not None:
        values["input_size"] = tuple(size)
    cfg = RunConfig(**values)
    cfg.net_config()  # surface structural errors now
    return cfg


def load_run_config(path: str | os.PathLike) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_run_config(doc)
