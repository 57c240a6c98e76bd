"""Experiment configuration: dataclasses, defaults and YAML loading.

A config file has three sections::

    federation: {K, seed, C, d, samples_per_client, partition: [...], ...}
    training:   {T, S, lr, weight_decay, batch_size, local_epochs, aggregator,
                 prox_mu, server_momentum, model, hidden, eval_every}
    fedgwc:     {alpha, epsilon, beta, n_max, k_min, rho, enabled}

Validation errors carry the line number of the offending key when the
config came from a file.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .datagen import FederationSpec, GroupSpec
from .errors import ConfigError, MissingInputError
from .training import AGGREGATORS, TrainerConfig


@dataclass(frozen=True)
class TrainingConfig:
    T: int = 500
    S: int = None
    lr: float = 0.01
    weight_decay: float = 4e-4
    batch_size: int = 64
    local_epochs: int = 1
    aggregator: str = "fedavg"
    prox_mu: float = 0.0
    server_momentum: float = 0.0
    model: str = "softmax"
    hidden: int = 32
    eval_every: int = 10

    def __post_init__(self):
        if self.T < 0:
            raise ConfigError(f"T must be non-negative, got {self.T}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}; expected one of {AGGREGATORS}")
        if self.model not in ("softmax", "mlp"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not 0.0 <= self.server_momentum < 1.0:
            raise ConfigError(f"server_momentum must lie in [0, 1), got {self.server_momentum}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be positive, got {self.eval_every}")
        self.trainer()

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(
            learning_rate=self.lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            local_epochs=self.local_epochs,
            prox_mu=self.prox_mu,
        )


@dataclass(frozen=True)
class FedGWCConfig:
    """Clustering hyperparameters.

    ``alpha`` defaults to the participation rate ``rho`` and ``k_min`` to
    ``ceil(3 / rho)``, the smallest cluster size that keeps the overall
    sampling rate unchanged after splits.
    """

    rho: float = 0.1
    alpha: float = None
    epsilon: float = 1e-5
    beta: float = 0.5
    n_max: int = 5
    k_min: int = None
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if self.alpha is None:
            alpha = self.rho if self.rho < 1.0 else 0.1
            object.__setattr__(self, "alpha", alpha)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k_min is None:
            object.__setattr__(self, "k_min", max(3, math.ceil(round(3.0 / self.rho, 9))))
        if self.k_min < 3:
            raise ConfigError(f"k_min must be at least 3, got {self.k_min}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.n_max < 2:
            raise ConfigError(f"n_max must be at least 2, got {self.n_max}")


@dataclass(frozen=True)
class ExperimentConfig:
    federation: FederationSpec
    training: TrainingConfig = field(default_factory=TrainingConfig)
    fedgwc: FedGWCConfig = field(default_factory=FedGWCConfig)

    @property
    def seed(self) -> int:
        return self.federation.seed

    def to_dict(self) -> dict:
        fed = dataclasses.asdict(self.federation)
        groups = fed.pop("groups")
        fed["partition"] = [{"size": g["size"], "alpha": g["dirichlet_alpha"], "domain": g["domain"]} for g in groups]
        return {
            "federation": fed,
            "training": dataclasses.asdict(self.training),
            "fedgwc": dataclasses.asdict(self.fedgwc),
        }


_FEDERATION_KEYS = {f.name for f in dataclasses.fields(FederationSpec)} - {"groups"} | {"partition"}
_SECTIONS = {
    "federation": _FEDERATION_KEYS,
    "training": {f.name for f in dataclasses.fields(TrainingConfig)},
    "fedgwc": {f.name for f in dataclasses.fields(FedGWCConfig)},
}


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that remembers the line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    lines = {}
    for key_node, _ in node.value:
        lines[loader.construct_object(key_node)] = key_node.start_mark.line + 1
    mapping_lines[id(mapping)] = lines
    return mapping


mapping_lines: dict = {}
_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(mapping, key):
    return mapping_lines.get(id(mapping), {}).get(key)


def _parse_groups(raw, lines_of, source):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("federation.partition must be a non-empty list of groups", lines_of, source)
    groups = []
    for item in raw:
        line = mapping_lines.get(id(item), {}).get("size", lines_of)
        if not isinstance(item, dict):
            raise ConfigError("each partition entry must be a mapping", line, source)
        unknown = set(item) - {"size", "alpha", "domain"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown partition key {key!r}", _line(item, key), source)
        try:
            groups.append(GroupSpec(size=int(item["size"]), dirichlet_alpha=float(item.get("alpha", 1.0)),
                                    domain=item.get("domain", "clean")))
        except KeyError:
            raise ConfigError("partition entry is missing 'size'", line, source) from None
        except ConfigError as exc:
            raise ConfigError(str(exc), line, source) from None
    return tuple(groups)


_CASTS = {"float": float, "int": int}


def _coerce(cls, key, value, line, source):
    """Numbers written as strings (YAML reads ``1e-4`` as text) become numbers."""
    kinds = {f.name: f.type for f in dataclasses.fields(cls)}
    cast = _CASTS.get(kinds.get(key))
    if cast is None or value is None or isinstance(value, bool):
        return value
    if isinstance(value, str) or (cast is float and isinstance(value, int)):
        try:
            return cast(float(value)) if cast is int and float(value).is_integer() else cast(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {value!r}", line, source) from None
    if cast is int and isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}", line, source)
        return int(value)
    return value


def _build(cls, section: dict, name: str, source, extra=None):
    kwargs = dict(extra or {})
    for key, value in section.items():
        if key in kwargs:
            continue
        kwargs[key] = _coerce(cls, key, value, _line(section, key), source)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        # point at the first key named in the message, else the section header
        line = None
        for key in section:
            if re.search(rf"\b{re.escape(str(key))}\b", str(exc)):
                line = _line(section, key)
                break
        raise ConfigError(str(exc), line or _line(_root_of.get(id(section), {}), name), source) from None
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}", _line(_root_of.get(id(section), {}), name), source) from None


_root_of: dict = {}


def config_from_dict(data: dict, source=None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with sections federation/training/fedgwc", 1, source)
    for name in data:
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name!r}", _line(data, name), source)
    if "federation" not in data:
        raise ConfigError("missing required section 'federation'", 1, source)
    sections = {}
    for name, allowed in _SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be a mapping", _line(data, name), source)
        for key in section:
            if key not in allowed:
                raise ConfigError(f"unknown key {name}.{key}", _line(section, key), source)
        _root_of[id(section)] = data
        sections[name] = section

    fed = dict(sections["federation"])
    if "partition" not in fed:
        raise ConfigError("federation.partition is required", _line(data, "federation"), source)
    groups = _parse_groups(fed.pop("partition"), _line(sections["federation"], "partition"), source)
    mapping_lines[id(fed)] = mapping_lines.get(id(sections["federation"]), {})
    _root_of[id(fed)] = data
    federation = _build(FederationSpec, fed, "federation", source, extra={"groups": groups})
    training = _build(TrainingConfig, sections["training"], "training", source)
    fedgwc = _build(FedGWCConfig, sections["fedgwc"], "fedgwc", source)
    if training.S is not None:
        n_train = federation.samples_per_client - int(round(federation.samples_per_client * federation.test_fraction))
        derived = training.trainer().local_iterations(n_train)
        if training.S != derived:
            raise ConfigError(
                f"training.S={training.S} disagrees with local_epochs * ceil(n_k / batch_size) = {derived}",
                _line(sections["training"], "S"),
                source,
            )
    return ExperimentConfig(federation=federation, training=training, fedgwc=fedgwc)


def parse_override(text: str):
    """``section.key=value`` with the value parsed as YAML."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    path, raw = text.split("=", 1)
    section, key = path.split(".", 1)
    return section.strip(), key.strip(), yaml.safe_load(raw)


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, str(path)) from None
    if data is None:
        raise ConfigError("config file is empty", 1, str(path))
    for item in overrides:
        section, key, value = parse_override(item) if isinstance(item, str) else item
        if not isinstance(data, dict):
            break
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigError(f"cannot override {section}.{key}: section is not a mapping", _line(data, section), str(path))
        data[section][key] = value
    return config_from_dict(data, source=str(path))
