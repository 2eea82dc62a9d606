"""Experiment configuration and its ``key = value`` text format.

Keys are dotted (``encoder.kind``, ``cvt.crossed_matrix``, ``loss.tau``); top
level keys are plain (``seed``, ``epochs``). ``#`` starts a comment.
"""

from __future__ import annotations

import ast
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .cvt import CvtConfig
from .encoders import EncoderConfig
from .views import ViewConfig

DATA_DIR_ENV = "CVTGAD_DATA_DIR"

# 8k-graph screening sets get fewer epochs by default.
LARGE_DATASETS = frozenset({"Tox21_HSE", "Tox21_MMP", "Tox21_p53", "Tox21_PPAR-gamma",
                            "HSE", "MMP", "p53", "PPAR-gamma"})

# Classes tie under the minority rule for these; anomalies are one explicit class.
DEFAULT_ANOMALY_CLASS = {"ENZYMES": 1}


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.2
    alpha: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "AIDS"
    data_dir: str | None = None
    seed: int = 0
    epochs: int | None = None  # None -> 100, or 20 for the large screening sets
    batch_size: int = 64
    lr: float = 1e-3
    test_fraction_normal: float = 0.2
    anomaly_class: str | int | None = None  # None -> per-dataset default, else "minority"
    eval_max_nodes: int = 4096
    out: str = "results"
    variant: str = "full"
    views: ViewConfig = field(default_factory=ViewConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    cvt: CvtConfig = field(default_factory=CvtConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    @property
    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return 20 if self.dataset in LARGE_DATASETS else 100

    @property
    def resolved_anomaly_rule(self) -> str | int:
        if self.anomaly_class is not None:
            return self.anomaly_class
        return DEFAULT_ANOMALY_CLASS.get(self.dataset, "minority")

    @property
    def resolved_data_dir(self) -> str:
        if self.data_dir:
            return self.data_dir
        env = os.environ.get(DATA_DIR_ENV)
        if not env:
            raise FileNotFoundError(f"no data directory: pass --data-dir or set {DATA_DIR_ENV}")
        return env

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        nested = {"views": ViewConfig, "encoder": EncoderConfig, "cvt": CvtConfig,
                  "loss": LossConfig}
        for key, typ in nested.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        return cls(**d)

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Apply ``{"cvt.d_k": 8, "seed": 3}``-style updates."""
        cfg = self
        grouped: dict[str, dict[str, Any]] = {}
        top: dict[str, Any] = {}
        for key, value in overrides.items():
            if "." in key:
                section, name = key.split(".", 1)
                grouped.setdefault(section, {})[name] = value
            else:
                top[key] = value
        valid_top = {f.name for f in dataclasses.fields(cfg)}
        for key in top:
            if key not in valid_top:
                raise KeyError(f"unknown config key {key!r}")
        for section, values in grouped.items():
            if section not in ("views", "encoder", "cvt", "loss"):
                raise KeyError(f"unknown config section {section!r}")
            sub = getattr(cfg, section)
            names = {f.name for f in dataclasses.fields(sub)}
            for name in values:
                if name not in names:
                    raise KeyError(f"unknown config key {section}.{name}")
            top[section] = dataclasses.replace(sub, **values)
        return dataclasses.replace(cfg, **top)


def parse_value(text: str) -> Any:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def load_config(path: str | os.PathLike | None, base: ExperimentConfig | None = None
                ) -> ExperimentConfig:
    base = base or ExperimentConfig()
    if path is None:
        return base
    return base.with_overrides(parse_config_text(Path(path).read_text()))


def dump_config_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, dict):
            lines.extend(f"{key}.{k} = {v!r}" for k, v in value.items())
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
