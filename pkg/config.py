"""Run configuration: dataclass defaults, key=value files, env and CLI overrides"""
import os
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError

ENV_PREFIX = "DSAAE_"

VARIANTS = ("mmd_ae", "ds_aae")
DATA_KINDS = ("mnist", "gaussian_mixture_8", "two_moons")

# Per-variant defaults from the experimental setup
DEFAULT_LATENT_DIM = {"ds_aae": 6, "mmd_ae": 4}
DEFAULT_BANDWIDTHS = {
    "ds_aae": (1.0,),
    "mmd_ae": (2.0, 5.0, 10.0, 20.0, 40.0, 80.0),
}


@dataclass
class TrainConfig:
    """Model and optimization hyperparameters"""

    variant: str = "ds_aae"
    latent_dim: Optional[int] = None  # resolved from variant
    hidden_dims: Tuple[int, ...] = (1024, 512, 216)
    batch_size: int = 1000
    recon_lr: float = 0.001
    adv_lr: float = 0.001
    epochs: int = 1000
    dropout_input: float = 0.20
    bandwidths: Optional[Tuple[float, ...]] = None  # resolved from variant
    feature_count: int = 500
    regularizer_weight: float = 1.0
    adversary_steps: int = 1
    l2_decay: float = 0.01
    alpha_cap: float = 10.0
    resample_features: bool = False
    max_steps: Optional[int] = None
    checkpoint_every: int = 10

    def resolved(self) -> "TrainConfig":
        """Fill variant-dependent defaults"""
        return replace(
            self,
            latent_dim=self.latent_dim if self.latent_dim is not None
            else DEFAULT_LATENT_DIM.get(self.variant, 6),
            bandwidths=self.bandwidths if self.bandwidths is not None
            else DEFAULT_BANDWIDTHS.get(self.variant, (1.0,)),
        )


@dataclass
class SeedConfig:
    weights: int = 0
    data: int = 1
    features: int = 2
    prior: int = 3


@dataclass
class DataConfig:
    kind: str = "gaussian_mixture_8"
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    n_samples: int = 8000
    subset: Optional[int] = None
    validation_fraction: float = 0.1


@dataclass
class OutputConfig:
    dir: str = "runs/latest"
    verbose: bool = True
    record_wall_time: bool = False


@dataclass
class SampleConfig:
    n: int = 100
    grid_width: int = 10
    seed: int = 0


@dataclass
class EvalConfig:
    n_samples: int = 10000
    batch_size: int = 500
    grid_min: float = 0.01
    grid_max: float = 1.0
    grid_size: int = 20


SECTIONS = {
    "train": TrainConfig,
    "seed": SeedConfig,
    "data": DataConfig,
    "output": OutputConfig,
    "sample": SampleConfig,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    """Everything a CLI invocation needs, grouped by dotted section"""

    train: TrainConfig = field(default_factory=TrainConfig)
    seed: SeedConfig = field(default_factory=SeedConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    # ── construction ─────────────────────────────────────────────

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """Load a flat `section.key=value` file on top of the defaults"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = dotenv_values(path)
        return cls().apply_overrides(values.items())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """Parse the same format from a string (used for checkpoint headers)"""
        from io import StringIO
        values = dotenv_values(stream=StringIO(text))
        return cls().apply_overrides(values.items())

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None,
             overrides: Iterable[str] = (),
             environ: Optional[Mapping[str, str]] = None) -> "RunConfig":
        """
        Build a config with the documented precedence

        Args:
            path: optional config file
            overrides: `key=value` strings from repeated --set flags
            environ: environment mapping (defaults to os.environ after .env is loaded)
        """
        if environ is None:
            load_dotenv()
            environ = os.environ
        config = cls.from_file(path) if path else cls()
        config = config.apply_env(environ)
        return config.apply_overrides(parse_assignments(overrides))

    def apply_env(self, environ: Mapping[str, str]) -> "RunConfig":
        """Apply `DSAAE_<SECTION>__<KEY>` variables"""
        pairs = []
        for name, value in sorted(environ.items()):
            if not name.startswith(ENV_PREFIX) or "__" not in name:
                continue
            section, _, key = name[len(ENV_PREFIX):].partition("__")
            pairs.append((f"{section.lower()}.{key.lower()}", value))
        return self.apply_overrides(pairs)

    def apply_overrides(self, pairs: Iterable[Tuple[str, Optional[str]]]) -> "RunConfig":
        """Return a copy with dotted keys set from raw strings; unknown keys are rejected"""
        sections = {name: replace(getattr(self, name)) for name in SECTIONS}
        for key, raw in pairs:
            section_name, _, attr = key.strip().partition(".")
            if section_name not in SECTIONS or not attr:
                raise ConfigError(f"unknown config key: {key!r}")
            section = sections[section_name]
            hints = typing.get_type_hints(type(section))
            if attr not in hints:
                raise ConfigError(f"unknown config key: {key!r}")
            setattr(section, attr, _coerce(key, "" if raw is None else raw, hints[attr]))
        return RunConfig(**sections)

    # ── views ────────────────────────────────────────────────────

    def resolved(self) -> "RunConfig":
        return replace(self, train=self.train.resolved())

    def validate(self) -> "RunConfig":
        """Check every invariant; returns the resolved config"""
        cfg = self.resolved()
        t = cfg.train
        problems: List[str] = []
        if t.variant not in VARIANTS:
            problems.append(f"train.variant must be one of {VARIANTS}, got {t.variant!r}")
        if t.latent_dim < 1:
            problems.append("train.latent_dim must be >= 1")
        if any(h < 1 for h in t.hidden_dims):
            problems.append("train.hidden_dims entries must be >= 1")
        if t.batch_size < 2:
            problems.append("train.batch_size must be >= 2")
        for name in ("recon_lr", "adv_lr", "alpha_cap"):
            if not getattr(t, name) > 0:
                problems.append(f"train.{name} must be > 0")
        if t.epochs < 1:
            problems.append("train.epochs must be >= 1")
        if not 0.0 <= t.dropout_input < 1.0:
            problems.append("train.dropout_input must be in [0, 1)")
        if not t.bandwidths or any(not s > 0 for s in t.bandwidths):
            problems.append("train.bandwidths must be a nonempty list of positive values")
        if t.feature_count < 1:
            problems.append("train.feature_count must be >= 1")
        if t.adversary_steps < 1:
            problems.append("train.adversary_steps must be >= 1")
        if t.l2_decay < 0:
            problems.append("train.l2_decay must be >= 0")
        if t.regularizer_weight < 0:
            problems.append("train.regularizer_weight must be >= 0")
        if t.max_steps is not None and t.max_steps < 1:
            problems.append("train.max_steps must be >= 1 when set")
        if t.checkpoint_every < 1:
            problems.append("train.checkpoint_every must be >= 1")
        for f in fields(cfg.seed):
            if getattr(cfg.seed, f.name) < 0:
                problems.append(f"seed.{f.name} must be >= 0")
        if cfg.data.kind not in DATA_KINDS:
            problems.append(f"data.kind must be one of {DATA_KINDS}, got {cfg.data.kind!r}")
        if cfg.data.kind == "mnist" and not cfg.data.images:
            problems.append("data.images is required for data.kind=mnist")
        if cfg.data.n_samples < 1:
            problems.append("data.n_samples must be >= 1")
        if not 0.0 < cfg.data.validation_fraction < 1.0:
            problems.append("data.validation_fraction must be in (0, 1)")
        if cfg.sample.n < 1 or cfg.sample.grid_width < 1:
            problems.append("sample.n and sample.grid_width must be >= 1")
        if cfg.sample.seed < 0:
            problems.append("sample.seed must be >= 0")
        e = cfg.eval
        if e.n_samples < 1:
            problems.append("eval.n_samples must be >= 1")
        if e.batch_size < 1 or e.grid_size < 1:
            problems.append("eval.batch_size and eval.grid_size must be >= 1")
        if not 0 < e.grid_min <= e.grid_max:
            problems.append("eval grid bounds must satisfy 0 < grid_min <= grid_max")
        if problems:
            raise ConfigError("; ".join(problems))
        return cfg

    def to_text(self) -> str:
        """Resolved echo: every key materialized, reloadable with from_text"""
        cfg = self.resolved()
        lines = ["# resolved run configuration"]
        for name in SECTIONS:
            section = getattr(cfg, name)
            for f in fields(section):
                lines.append(f"{name}.{f.name}={_format(getattr(section, f.name))}")
        return "\n".join(lines) + "\n"


def parse_assignments(items: Iterable[str]) -> List[Tuple[str, str]]:
    """Split `key=value` strings"""
    pairs = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    return pairs


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw: str, hint):
    raw = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is Union and type(None) in args:
        if raw.lower() in ("none", "null", ""):
            return None
        inner = next(a for a in args if a is not type(None))
        return _coerce(key, raw, inner)
    try:
        if origin is tuple:
            item_type = args[0]
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(item_type(p) for p in parts)
        if hint is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {getattr(hint, '__name__', hint)}") from None
