"""Strict JSON run configuration with full defaulting."""
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bridge import EpsilonConfig
from .io import FORMAT_VERSION
from .sim import DEFAULT_MIXTURE, DEFAULT_SOURCE_HI, DEFAULT_SOURCE_LO, ConditionalTaskSpec


class ConfigError(ValueError):
    pass


@dataclass
class EpsSection:
    eps_t: float = 1e-3
    eps_l: float = 1e-8
    eps_r: float = 1e-12
    eps_c: float = 1e-8


@dataclass
class DataSection:
    kind: str = "mixture"  # "mixture" | "conditional"
    n_source: int = 20000
    n_target: int = 20000
    n_heldout: int = 2000
    mixture: dict = field(default_factory=DEFAULT_MIXTURE.to_dict)
    source_lo: list = field(default_factory=lambda: list(DEFAULT_SOURCE_LO))
    source_hi: list = field(default_factory=lambda: list(DEFAULT_SOURCE_HI))
    n_per_class: int = 3000
    n_heldout_per_class: int = 500
    class_means: list = field(default_factory=lambda: [list(m) for m in ConditionalTaskSpec().means])
    dispersion: float = ConditionalTaskSpec().dispersion
    shared_var: float = ConditionalTaskSpec().shared_var
    shared_coords: list = field(default_factory=lambda: list(ConditionalTaskSpec().shared_coords))


@dataclass
class ModelSection:
    hidden_widths: list = field(default_factory=lambda: [32, 32])
    n_time_freqs: int = 8
    cond_width: int = 8
    input_scale: float = None  # None: 1 / max count in the training data
    rate_time_eps: float = None


@dataclass
class TrainSection:
    batch_size: int = 256
    n_steps: int = 30000
    lr: float = 3e-3
    lr_schedule: str = "cosine"
    coupling: str = "independent"
    cfg_dropout: float = 0.1


@dataclass
class SampleSection:
    n_samples: int = 2000
    n_steps: int = 200
    guidance: float = 1.0
    condition: str = None
    trajectories: bool = False
    record_stride: int = 1


@dataclass
class EvalSection:
    n_sub: int = 500
    n_repeats: int = 1
    bandwidth: float = None
    active_threshold: float = 0.01


@dataclass
class BridgeVizSection:
    coupling: str = "independent"
    coords: list = None  # None: every coordinate
    z_max: int = None  # None: max observed count
    progress: list = field(default_factory=lambda: [round(0.1 * k, 1) for k in range(11)])
    n_draws: int = 10000
    ot_batch_size: int = 256


@dataclass
class RunConfig:
    format_version: int = FORMAT_VERSION
    seed: int = 0
    out_dir: str = "."
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bridge_viz: BridgeVizSection = field(default_factory=BridgeVizSection)
    eps: EpsSection = field(default_factory=EpsSection)

    def to_dict(self):
        return dataclasses.asdict(self)


def _merge(obj, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in doc.items():
        if key not in names:
            raise ConfigError(f"unknown key {where + key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)
    return obj


def _check(cfg):
    if cfg.format_version != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {cfg.format_version}")
    if cfg.data.kind not in ("mixture", "conditional"):
        raise ConfigError("data.kind must be 'mixture' or 'conditional'")
    if cfg.train.coupling not in ("independent", "ot"):
        raise ConfigError("train.coupling must be 'independent' or 'ot'")
    if cfg.bridge_viz.coupling not in ("independent", "ot"):
        raise ConfigError("bridge_viz.coupling must be 'independent' or 'ot'")
    if cfg.train.lr_schedule not in ("constant", "cosine"):
        raise ConfigError("train.lr_schedule must be 'constant' or 'cosine'")
    if cfg.train.batch_size < 1 or cfg.train.n_steps < 0:
        raise ConfigError("train.batch_size must be >= 1 and train.n_steps >= 0")
    if cfg.sample.n_samples < 0 or cfg.sample.n_steps < 1:
        raise ConfigError("sample.n_samples must be >= 0 and sample.n_steps >= 1")
    if cfg.sample.guidance < 0:
        raise ConfigError("sample.guidance must be nonnegative")
    if not 0 <= cfg.train.cfg_dropout <= 1:
        raise ConfigError("train.cfg_dropout must lie in [0, 1]")
    try:
        EpsilonConfig(**dataclasses.asdict(cfg.eps))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"eps: {exc}") from None
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides`` (a nested dict)."""
    cfg = RunConfig()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        _merge(cfg, doc, "")
    if overrides:
        _merge(cfg, overrides, "")
    return _check(cfg)
