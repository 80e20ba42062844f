"""Run configuration: a YAML file mirrored onto nested dataclasses.

Unknown keys are rejected with their full dotted path; every default is
visible via dump_config().  Flags override file values in the CLI layer.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .backend import BackendConfig, BlockSpec
from .features import ToyEncoderConfig
from .rawboost import (
    AugmentationChain,
    IsdParams,
    LnLParams,
    ParameterError,
    SsiParams,
)
from .training import FocalParams, OptimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    train_manifest: str = ""
    dev_manifest: str = ""
    eval_manifest: str = ""
    feature_dir: str = "features"
    out_dir: str = "out"


@dataclass(frozen=True)
class AugmentationConfig:
    chain: str = "none"  # e.g. series:lnl+isd, parallel:lnl+ssi, lnl
    seed: int = 42


@dataclass(frozen=True)
class FeatureConfig:
    source: str = "toy"  # toy: encode waveforms on the fly; svdf: read files
    duration: float = 4.0
    sample_rate: int = 16000
    toy_layers: int = 6
    toy_feat_dim: int = 16
    toy_seed: int = 0

    def __post_init__(self):
        if self.source not in ("toy", "svdf"):
            raise ConfigError(f"feature source must be toy or svdf, "
                              f"got {self.source!r}")

    def toy_config(self) -> ToyEncoderConfig:
        return ToyEncoderConfig(n_layers=self.toy_layers,
                                feat_dim=self.toy_feat_dim,
                                seed=self.toy_seed)


@dataclass(frozen=True)
class AggregationConfig:
    kind: str = "sea"  # weighted_sum | attm | sea
    reduction_ratio: int = 2
    seed: int = 42


@dataclass(frozen=True)
class BackendSettings:
    block_channels: tuple = (8, 8, 8)
    block_kernels: tuple = (3, 3, 3)
    block_strides: tuple = ((1, 1), (2, 2), (2, 2))
    node_dim: int = 16
    pool_ratio_spectral: float = 0.5
    pool_ratio_temporal: float = 0.5
    dropout: float = 0.2
    seed: int = 42

    def __post_init__(self):
        lens = {len(self.block_channels), len(self.block_kernels),
                len(self.block_strides)}
        if len(lens) != 1:
            raise ConfigError("block_channels, block_kernels and "
                              "block_strides must have equal lengths")

    def to_backend_config(self) -> BackendConfig:
        blocks = tuple(
            BlockSpec(c, k, tuple(s)) for c, k, s in
            zip(self.block_channels, self.block_kernels, self.block_strides))
        return BackendConfig(encoder=blocks, node_dim=self.node_dim,
                             pool_ratio_spectral=self.pool_ratio_spectral,
                             pool_ratio_temporal=self.pool_ratio_temporal,
                             dropout=self.dropout, seed=self.seed)


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha: float = 0.25

    def to_params(self) -> FocalParams:
        return FocalParams(self.gamma, self.alpha)


@dataclass(frozen=True)
class OptimSettings:
    lr: float = 1e-6
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 48
    epochs: int = 30
    lr_min: float = 1e-9
    seed: int = 42

    def to_optim_config(self) -> OptimConfig:
        return OptimConfig(lr=self.lr, weight_decay=self.weight_decay,
                           betas=(self.beta1, self.beta2), eps=self.eps,
                           batch_size=self.batch_size, epochs=self.epochs,
                           lr_min=self.lr_min, seed=self.seed)


@dataclass(frozen=True)
class EvaluationConfig:
    pooled_subsets: tuple = ("A09-A13", "A09-A14")


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    augmentation: AugmentationConfig = field(
        default_factory=AugmentationConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    aggregation: AggregationConfig = field(
        default_factory=AggregationConfig)
    backend: BackendSettings = field(default_factory=BackendSettings)
    optim: OptimSettings = field(default_factory=OptimSettings)
    focal: FocalConfig = field(default_factory=FocalConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def _coerce(value, target_type, path):
    if dataclasses.is_dataclass(target_type):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _from_dict(target_type, value, path)
    if target_type is tuple or getattr(target_type, "__origin__",
                                       None) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _from_dict(cls, data: dict, path=""):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"unknown config key {where!r}; "
                          f"valid keys: {sorted(known)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f"{path}.{name}" if path else name
        # field annotations are strings; recover the type from the default
        kwargs[name] = _coerce(value, _field_default_type(cls, f), sub)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def _field_default_type(cls, f):
    default = f.default
    if default is dataclasses.MISSING and f.default_factory is not dataclasses.MISSING:
        default = f.default_factory()
    return type(default)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _from_dict(RunConfig, data)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name))
                for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(_to_plain(cfg), sort_keys=False,
                          default_flow_style=None)


STEP_PARAMS = {"lnl": LnLParams, "isd": IsdParams, "ssi": SsiParams}


def parse_chain(spec: str):
    """Chain spec: 'none', a single noise type, or 'series:'/'parallel:'
    followed by '+'-joined noise types.  Returns None for 'none'."""
    spec = spec.strip()
    if spec == "none":
        return None
    if ":" in spec:
        mode, _, rest = spec.partition(":")
    else:
        mode, rest = "series", spec
    names = [s.strip() for s in rest.split("+") if s.strip()]
    if not names:
        raise ParameterError(f"empty chain spec {spec!r}")
    for name in names:
        if name not in STEP_PARAMS:
            raise ParameterError(
                f"unknown noise type {name!r}; "
                f"choose from {sorted(STEP_PARAMS)}")
    steps = tuple((name, STEP_PARAMS[name]()) for name in names)
    return AugmentationChain(mode=mode, steps=steps)
