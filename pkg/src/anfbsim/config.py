"""Run configuration: defaults, JSON config files and flag overrides.

Precedence is flags > config file > built-in defaults. The file format is a flat
JSON object described by ``data/run_config.schema.json``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import jsonschema

from .consensus import FaultMode, NetworkModel
from .datagen import ScenarioSpec, scenario_preset
from .errors import ConfigError
from .pipeline import PipelineConfig
from .risk.classifier import LogisticClassifier
from .risk.engine import FusionConfig, RiskEngine
from .risk.fuzzy import FuzzyRuleBase

CONFIG_SCHEMA_VERSION = 1
# file keys that differ from attribute names
_KEY_TO_ATTR = {"lambda": "lam"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}


def config_schema() -> dict:
    text = resources.files("anfbsim").joinpath("data/run_config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    # scenario
    scenario: str = "S2"
    n_tx: int = 10_000
    fraud_rate: Optional[float] = None  # None keeps the preset rate
    n_users: Optional[int] = None
    seed: int = 42
    # pipeline
    block_size: int = 100
    block_interval: int = 5_000
    allow_out_of_range: bool = False
    l_edge: int = 2
    l_ai: int = 5
    max_retries: int = 1
    online_learning: bool = True
    # engine
    lam: float = 0.6
    eta1: float = 0.3
    eta2: float = 0.7
    rules: Optional[str] = None  # rule base file; None = packaged default
    classifier_lr: float = 0.1
    classifier_l2: float = 0.0
    fuzzy_lr: Optional[float] = None  # None keeps the rule base file's rate
    warm_start: float = 0.2  # labeled prefix fraction, excluded from metrics
    warm_start_epochs: int = 5
    include_monitor: bool = False  # count Monitor as a positive prediction
    # network
    nodes: int = 5
    theta: int = 3
    link_latency: tuple = (10, 50)
    validation_latency: tuple = (10, 30)
    faults: dict = field(default_factory=dict)  # node index -> fault mode
    # output
    out: str = "runs/out"
    formats: tuple = ("json", "csv")

    def __post_init__(self):
        self.link_latency = tuple(int(v) for v in self.link_latency)
        self.validation_latency = tuple(int(v) for v in self.validation_latency)
        self.formats = tuple(self.formats)
        self.faults = {int(k): FaultMode(v).value for k, v in dict(self.faults).items()}

    # ---------------------------------------------------------- building

    def validate(self) -> "RunConfig":
        """Check the whole configuration before any work starts."""
        try:
            jsonschema.validate(self.to_dict(), config_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "config"
            raise ConfigError(f"{where}: {exc.message}") from None
        if self.theta > self.nodes:
            raise ConfigError(f"theta {self.theta} exceeds node count {self.nodes}")
        if any(not 0 <= k < self.nodes for k in self.faults):
            raise ConfigError("fault index outside the committee")
        self.scenario_spec()
        self.pipeline_config()
        self.fusion()
        NetworkModel.build(self.nodes, self.seed, self.link_latency, self.validation_latency)
        if self.rules is not None and not Path(self.rules).is_file():
            raise ConfigError(f"rule base file not found: {self.rules}")
        return self

    def scenario_spec(self) -> ScenarioSpec:
        overrides = {} if self.n_users is None else {"n_users": self.n_users}
        if self.scenario == "custom":
            spec = ScenarioSpec(name="custom", n_tx=self.n_tx, seed=self.seed, **overrides)
        else:
            spec = scenario_preset(self.scenario, n_tx=self.n_tx, seed=self.seed, **overrides)
        if self.fraud_rate is not None:
            spec = dataclasses.replace(spec, fraud_rate=self.fraud_rate)
        return spec

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(block_size=self.block_size, block_interval=self.block_interval,
                              theta=self.theta, online_learning=self.online_learning,
                              l_edge=self.l_edge, l_ai=self.l_ai, max_retries=self.max_retries,
                              allow_out_of_range=self.allow_out_of_range)

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.lam, self.eta1, self.eta2)

    def engine(self) -> RiskEngine:
        rb = FuzzyRuleBase.load(self.rules)
        if self.fuzzy_lr is not None:
            rb.learning_rate = self.fuzzy_lr
        clf = LogisticClassifier(lr=self.classifier_lr, l2=self.classifier_l2)
        return RiskEngine(clf, rb, self.fusion(), online_learning=self.online_learning,
                          warm_start_epochs=self.warm_start_epochs)

    def network(self) -> NetworkModel:
        return NetworkModel.build(self.nodes, self.seed, self.link_latency,
                                  self.validation_latency, self.faults)

    # -------------------------------------------------------------- I/O

    def to_dict(self) -> dict:
        d = {"schema_version": CONFIG_SCHEMA_VERSION}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            if f.name == "faults":
                v = {str(k): m for k, m in sorted(v.items())}
            d[_ATTR_TO_KEY.get(f.name, f.name)] = v
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        return cls().merged(d)

    def merged(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """New config with ``overrides`` (file keys) applied; ``None`` values are skipped."""
        names = {f.name for f in dataclasses.fields(self)}
        changes = {}
        for key, value in overrides.items():
            if key == "schema_version":
                if value != CONFIG_SCHEMA_VERSION:
                    raise ConfigError(f"unsupported config schema_version {value!r}")
                continue
            attr = _KEY_TO_ATTR.get(key, key)
            if attr not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if value is not None:
                changes[attr] = value
        return dataclasses.replace(self, **changes)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.load_dict(raw, source=str(path))

    @classmethod
    def load_dict(cls, raw, source: str = "config") -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be an object")
        try:
            jsonschema.validate(raw, config_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "config"
            raise ConfigError(f"{source}: {where}: {exc.message}") from None
        return cls.from_dict(raw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def resolve(file: Optional[str] = None, flags: Optional[Mapping[str, Any]] = None) -> RunConfig:
    cfg = RunConfig.load(file) if file else RunConfig()
    return cfg.merged(flags or {}).validate()
