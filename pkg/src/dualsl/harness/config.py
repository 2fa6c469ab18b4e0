"""Experiment configuration: dataclass sections, INI files and CLI overrides.

The file format is plain ``key = value`` lines under ``[section]`` headers.
Every key is also reachable from the command line as ``--section.key``.
"""
import configparser
import math
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from dualsl.errors import ConfigurationError
from dualsl.lm import LMConfig
from dualsl.made import MadeConfig
from dualsl.models import ModelConfig


@dataclass
class DataConfig:
    data_dir: str = "data/e2e"
    train_file: str = "trainset.csv"
    test_file: str = "testset_w_refs.csv"
    subset_size: int = 5000
    min_count: int = 1
    lemmatize: bool = True
    unseen_policy: str = "drop"


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0


@dataclass
class ExperimentSection:
    schemes: tuple = ("baseline", "dsl", "dsl_without_made")
    lambdas: tuple = (0.1, 0.01, 0.001)
    lambda_without_made: float = 0.1
    runs: int = 3
    base_seed: int = 0
    out_dir: str = "runs/table1"
    show_paper_reference: bool = False
    rouge_l_beta: float = math.inf


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    made: MadeConfig = field(default_factory=MadeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def validate(self, check_paths=True):
        ex = self.experiment
        if ex.runs < 1:
            raise ConfigurationError("experiment.runs must be at least 1")
        if not ex.rouge_l_beta > 0:
            raise ConfigurationError("experiment.rouge_l_beta must be positive")
        if any(v < 0 for v in ex.lambdas) or ex.lambda_without_made < 0:
            raise ConfigurationError("Lagrange weights must be non-negative")
        unknown = set(ex.schemes) - {"baseline", "dsl", "dsl_without_made"}
        if unknown:
            raise ConfigurationError(f"unknown schemes {sorted(unknown)}")
        if check_paths:
            for name in (self.data.train_file, self.data.test_file):
                path = Path(self.data.data_dir) / name
                if not path.exists():
                    raise ConfigurationError(f"data file not found: {path}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def seeds(self):
        return [self.experiment.base_seed + k for k in range(self.experiment.runs)]


SECTIONS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def _coerce(raw, default):
    if isinstance(default, bool):
        lowered = str(raw).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, (tuple, list)):
        items = [s.strip() for s in str(raw).split(",") if s.strip()]
        kind = type(default[0]) if default else str
        return tuple(_coerce(s, kind()) for s in items)
    return str(raw)


def set_value(cfg, dotted, raw):
    section, _, key = dotted.partition(".")
    if section not in SECTIONS:
        raise ConfigurationError(f"unknown config section {section!r}")
    target = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(target)}
    if key not in names:
        raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
    try:
        setattr(target, key, _coerce(raw, getattr(target, key)))
    except ValueError as exc:
        raise ConfigurationError(f"{dotted}: {exc}") from exc


def load_config(path=None, overrides=None):
    """Defaults, then the INI file, then ``overrides`` ({"section.key": value})."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(path, encoding="utf-8"):
            raise ConfigurationError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, value in parser.items(section):
                set_value(cfg, f"{section}.{key}", value)
    for dotted, value in (overrides or {}).items():
        set_value(cfg, dotted, value)
    return cfg


def iter_keys():
    """All (section.key, default) pairs, in declaration order."""
    cfg = ExperimentConfig()
    for section in SECTIONS:
        for f in dataclasses.fields(getattr(cfg, section)):
            yield f"{section}.{f.name}", getattr(getattr(cfg, section), f.name)


def dump_config(cfg, path):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section in SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {
            f.name: (", ".join(map(str, v)) if isinstance(v := getattr(obj, f.name),
                                                           (tuple, list)) else str(v))
            for f in dataclasses.fields(obj)}
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
