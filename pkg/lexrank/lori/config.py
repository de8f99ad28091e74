""" Experiment configuration: dataclasses, YAML/JSON loading and hashing """


import copy
import dataclasses
import hashlib
import json
import logging
import os

from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Union

import yaml

from lexrank.lori.birl import BirlConfig
from lexrank.lori.control import CloningConfig
from lexrank.lori.control import QLearningConfig
from lexrank.lori.control import StateGrid
from lexrank.lori.envs import CANCER_ALPHA
from lexrank.lori.envs import CANCER_EPSILON
from lexrank.lori.envs import DIRICHLET
from lexrank.lori.envs import AllocationConfig
from lexrank.lori.envs import CancerDynamics
from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankIOError
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.exception import LexRankUsageError
from lexrank.lori.infer import FitConfig


logger = logging.getLogger(__name__)

STUDIES = ("cancer", "single-reward", "k-sweep", "age", "allocation")


@dataclass
class CancerStudyConfig:
    """ Treatment-preference pipeline shared by the cancer and single-reward studies. """

    n_trajectories: int = 1000
    horizon: int = 20
    behavior_epsilon: float = 0.5
    n_train: int = 1000
    n_test: int = 1000
    n_policy_samples: int = 1000
    alpha: float = CANCER_ALPHA
    epsilon: float = CANCER_EPSILON
    k: int = 2
    compare_policies: bool = True

    def __post_init__(self) -> None:
        if min(self.n_trajectories, self.n_train, self.n_test, self.n_policy_samples, self.horizon, self.k) < 1:
            raise LexRankParamError("Cancer study sizes must be positive")
        if self.n_trajectories < 2:
            raise LexRankParamError("Cancer study needs at least two trajectories")
        if not 0 <= self.behavior_epsilon <= 1:
            raise LexRankParamError(f"behavior_epsilon must lie in [0, 1], got {self.behavior_epsilon}")


@dataclass
class KSweepConfig:
    k_true: int = 10
    dim: int = 10
    k_values: List[int] = field(default_factory=lambda: list(range(1, 11)))
    n_train: int = 10000
    n_test: int = 10000
    weights: str = DIRICHLET
    alternative_std: float = 0.5

    def __post_init__(self) -> None:
        if not self.k_values or min(self.k_values) < 1:
            raise LexRankParamError("k_values must be a nonempty list of positive integers")
        if min(self.k_true, self.dim, self.n_train, self.n_test) < 1:
            raise LexRankParamError("k-sweep sizes must be positive")


@dataclass
class AgeStudyConfig:
    n_trajectories: int = 1000
    horizon: int = 20
    n_train: int = 1000
    n_test: int = 1000
    y_threshold: float = 40.0
    y_sensitivity: float = 1.0
    age_scale: float = 10.0
    learning_rate: float = 0.01
    curve_ages: List[float] = field(default_factory=lambda: [float(age) for age in range(0, 81)])

    def __post_init__(self) -> None:
        if min(self.n_trajectories, self.horizon, self.n_train, self.n_test) < 1 or self.n_trajectories < 2:
            raise LexRankParamError("Age study sizes must be positive (at least two trajectories)")
        if not (self.y_sensitivity > 0 and self.age_scale > 0 and self.learning_rate > 0):
            raise LexRankParamError("y_sensitivity, age_scale and learning_rate must be positive")


@dataclass
class AllocationStudyConfig:
    n_test_events: int = 500
    learning_rate: float = 0.01
    need_max: float = 100.0
    need_step: float = 5.0
    benefit_max: float = 1000.0
    benefit_step: float = 1.0

    def __post_init__(self) -> None:
        if self.n_test_events < 1 or not self.learning_rate > 0:
            raise LexRankParamError("n_test_events and learning_rate must be positive")
        if not (self.need_max >= 0 and self.need_step > 0 and self.benefit_max >= 0 and self.benefit_step > 0):
            raise LexRankParamError("Trade-off grid must have nonnegative bounds and positive steps")


@dataclass
class ExperimentConfig:
    """ Everything a study run depends on; every field has a packaged default.

    Attributes:
    ----------
    study: str
        One of STUDIES
    seeds: List[int]
        Distinct seeds, one pipeline run each
    output_dir: str
        Directory receiving the CSV outputs
    """

    study: str = "cancer"
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "results"
    fit: FitConfig = field(default_factory=FitConfig)
    birl: BirlConfig = field(default_factory=BirlConfig)
    dynamics: CancerDynamics = field(default_factory=CancerDynamics)
    grid: StateGrid = field(default_factory=StateGrid)
    qlearning: QLearningConfig = field(default_factory=QLearningConfig)
    cloning: CloningConfig = field(default_factory=CloningConfig)
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    cancer: CancerStudyConfig = field(default_factory=CancerStudyConfig)
    ksweep: KSweepConfig = field(default_factory=KSweepConfig)
    age: AgeStudyConfig = field(default_factory=AgeStudyConfig)
    allocation_study: AllocationStudyConfig = field(default_factory=AllocationStudyConfig)

    def __post_init__(self) -> None:
        if self.study not in STUDIES:
            raise LexRankUsageError(f"Unknown study '{self.study}' (choose from {', '.join(STUDIES)})")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise LexRankParamError(f"Seeds must be nonempty and distinct, got {self.seeds}")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls, data: Dict[str, Any], where: str):
    """ Instantiate a (possibly nested) config dataclass, rejecting unknown keys. """

    if not isinstance(data, dict):
        raise LexRankInvalidData(f"Configuration section '{where}' must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise LexRankUsageError(f"Unknown configuration keys in '{where}': {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING \
            else fields[name].default
        if dataclasses.is_dataclass(default) and not isinstance(default, type):
            kwargs[name] = _build(type(default), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise LexRankInvalidData(f"Invalid configuration section '{where or 'root'}'") from e


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """ Recursively overlay override on base without modifying either. """

    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def default_config_dict() -> Dict[str, Any]:
    return yaml.safe_load(resources.read_text("lexrank.lori.data", "default_config.yaml")) or {}


def read_config_file(path: Union[str, os.PathLike]) -> Dict[str, Any]:
    """ Parse a YAML or JSON configuration file into a mapping.

    Raises:
    ------
    LexRankIOError
        Unreadable file
    LexRankInvalidData
        Syntax errors or a top level that is not a mapping
    """

    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise LexRankIOError(f"Unable to read configuration '{path}'") from e
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as e:
        raise LexRankInvalidData(f"Unable to parse configuration '{path}'") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise LexRankInvalidData(f"Configuration '{path}' must contain a mapping")
    return data


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """ Overlay a mapping on the packaged defaults and build the configuration. """

    return _build(ExperimentConfig, deep_merge(default_config_dict(), data), "")


def load_config(path: Optional[Union[str, os.PathLike]] = None,
                overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """ Load an experiment configuration.
    Parameters:
    ----------
    path: str or PathLike, optional
        YAML or JSON file (default is the packaged configuration alone)
    overrides: Dict[str, Any], optional
        Values applied last, e.g. from command-line flags

    Returns:
    -------
    ExperimentConfig
        Validated configuration
    """

    data = read_config_file(path) if path is not None else {}
    if overrides:
        data = deep_merge(data, overrides)
    config = config_from_dict(data)
    logger.debug(f"Loaded configuration for study '{config.study}' (sha256 {config_hash(config)[:12]})")
    return config


def config_hash(config: ExperimentConfig) -> str:
    """ SHA-256 of the canonical JSON dump of the configuration. """

    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
