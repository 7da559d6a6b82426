"""Score fusion, tri-level decision and the end-to-end assessment loop."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..errors import ConfigError
from ..features import FeatureConfig, featurize
from ..transactions import Transaction
from .classifier import LogisticClassifier
from .fuzzy import FuzzyRuleBase


class Decision(str, enum.Enum):
    ACCEPT = "Accept"
    MONITOR = "Monitor"
    REJECT = "Reject"


@dataclass(frozen=True)
class FusionConfig:
    lam: float = 0.6
    eta1: float = 0.3
    eta2: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")
        if not 0.0 <= self.eta1 < self.eta2 <= 1.0:
            raise ConfigError("thresholds must satisfy 0 <= eta1 < eta2 <= 1")


def fuse(cfg: FusionConfig, r_ml: float, r_f: float) -> float:
    return cfg.lam * r_ml + (1.0 - cfg.lam) * r_f


def decide(cfg: FusionConfig, r: float) -> Decision:
    # bands: [0, eta1) accept, [eta1, eta2) monitor, [eta2, 1] reject
    if r >= cfg.eta2:
        return Decision.REJECT
    if r >= cfg.eta1:
        return Decision.MONITOR
    return Decision.ACCEPT


def fuzzy_inputs(fv: Sequence[float]) -> list[float]:
    """(amount, behaviour composite, geo) fuzzy inputs from a feature vector.

    The behaviour composite averages the risk-oriented behaviour components:
    rate, |z| rescaled from [0.5, 1) to [0, 1), device inconsistency, dormancy.
    """
    behavior = (fv[2] + (2.0 * fv[3] - 1.0) + (1.0 - fv[4]) + fv[6]) / 4.0
    return [fv[0], min(max(behavior, 0.0), 1.0), fv[5]]


@dataclass(frozen=True)
class RiskAssessment:
    tx_id: int
    r_ml: float
    r_f: float
    r: float
    decision: Decision
    trace: tuple  # ((beta_k, w_k), ...) in rule order, weights as used for scoring

    def reconstruct_r_f(self) -> float:
        num = 0.0
        den = 0.0
        for beta, w in self.trace:
            num = num + w * beta
            den = den + beta
        return num / den

    def to_dict(self) -> dict:
        return {"tx_id": self.tx_id, "r_ml": self.r_ml, "r_f": self.r_f, "r": self.r,
                "decision": self.decision.value,
                "trace": [{"rule": k, "beta": b, "weight": w}
                          for k, (b, w) in enumerate(self.trace) if b > 0.0]}


@dataclass
class RiskEngine:
    classifier: LogisticClassifier = field(default_factory=LogisticClassifier)
    rule_base: FuzzyRuleBase = field(default_factory=FuzzyRuleBase.default)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    online_learning: bool = True
    warm_start_epochs: int = 5

    def assess(self, tx: Transaction, learn: Optional[bool] = None) -> RiskAssessment:
        """Score ``tx``; with online learning and a label, update the models afterwards."""
        fv = featurize(tx, self.features)
        r_ml = self.classifier.score(fv)
        z = fuzzy_inputs(fv)
        weights = list(self.rule_base.weights)
        r_f, betas = self.rule_base.score(z)
        r = fuse(self.fusion, r_ml, r_f)
        decision = decide(self.fusion, r)
        learn = self.online_learning if learn is None else learn
        if learn and tx.label is not None:
            self.classifier.update(fv, tx.label)
            self.rule_base.adapt(z, tx.label)
        return RiskAssessment(tx.tx_id, r_ml, r_f, r, decision, tuple(zip(betas, weights)))

    def score_only(self, tx: Transaction) -> RiskAssessment:
        return self.assess(tx, learn=False)

    def warm_start(self, prefix: Iterable[Transaction], epochs: Optional[int] = None) -> "RiskEngine":
        """Fit both models on a labeled prefix (several in-order passes)."""
        rows = [(featurize(t, self.features), t.label) for t in prefix]
        if not rows:
            return self
        if any(y not in (0, 1) for _, y in rows):
            raise ValueError("warm start needs a fully labeled prefix")
        epochs = self.warm_start_epochs if epochs is None else epochs
        for _ in range(epochs):
            self.classifier.train(rows)
            for fv, y in rows:
                self.rule_base.adapt(fuzzy_inputs(fv), y)
        return self

    def copy(self) -> "RiskEngine":
        return RiskEngine(self.classifier.copy(), self.rule_base.copy(), self.fusion,
                          self.features, self.online_learning, self.warm_start_epochs)

    def state_dict(self) -> dict:
        return {"schema_version": 1, "classifier": self.classifier.to_dict(),
                "rule_base": self.rule_base.to_dict(),
                "fusion": {"lambda": self.fusion.lam, "eta1": self.fusion.eta1,
                           "eta2": self.fusion.eta2},
                "features": self.features.to_dict(), "online_learning": self.online_learning}

    @classmethod
    def from_state(cls, d: dict) -> "RiskEngine":
        f = d["fusion"]
        return cls(LogisticClassifier.from_dict(d["classifier"]),
                   FuzzyRuleBase.from_dict(d["rule_base"]),
                   FusionConfig(f["lambda"], f["eta1"], f["eta2"]),
                   FeatureConfig(**d["features"]), d.get("online_learning", True))


def assess(engine: RiskEngine, tx: Transaction) -> RiskAssessment:
    return engine.assess(tx)
