"""Statistical risk score: an online logistic model over the feature vector."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .. import _kernels
from ..errors import DimensionError
from ..features import N_FEATURES


@dataclass
class LogisticClassifier:
    """``p = logistic(w . x + b)`` trained by plain SGD on log-loss.

    Any object with ``score(fv)``, ``train(batch)``, ``to_dict()`` and ``copy()``
    can stand in for it inside :class:`~anfbsim.risk.engine.RiskEngine`.
    """

    dim: int = N_FEATURES
    lr: float = 0.1
    l2: float = 0.0
    weights: list = field(default=None)
    bias: float = 0.0

    def __post_init__(self):
        if self.weights is None:
            self.weights = [0.0] * self.dim
        self.weights = [float(w) for w in self.weights]
        if len(self.weights) != self.dim:
            raise DimensionError(f"{len(self.weights)} weights for dimension {self.dim}")
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.bias):
            raise ValueError("classifier parameters must be finite")

    def score(self, fv: Sequence[float]) -> float:
        return _kernels.logit_score(self.weights, self.bias, fv)

    def update(self, fv: Sequence[float], label: int) -> None:
        self.weights, self.bias = _kernels.logit_sgd(self.weights, self.bias, fv, float(label),
                                                     self.lr, self.l2)

    def train(self, batch: Iterable[tuple[Sequence[float], int]]) -> "LogisticClassifier":
        """One SGD pass over ``batch``; an empty batch is a no-op."""
        batch = list(batch)
        if not batch:
            return self
        for _, y in batch:
            if y not in (0, 1):
                raise ValueError(f"labels must be 0 or 1, got {y!r}")
        xs = [x for x, _ in batch]
        ys = [float(y) for _, y in batch]
        self.weights, self.bias = _kernels.logit_sgd_pass(self.weights, self.bias, xs, ys,
                                                          self.lr, self.l2)
        return self

    def log_loss(self, fv: Sequence[float], label: int) -> float:
        z = sum(w * x for w, x in zip(self.weights, fv)) + self.bias
        # log(1 + e^z) - y z, computed without overflow
        return max(z, 0.0) + math.log1p(math.exp(-abs(z))) - label * z

    def gradient(self, fv: Sequence[float], label: int) -> tuple[list[float], float]:
        """Analytic log-loss gradient w.r.t. (weights, bias)."""
        err = self.score(fv) - label
        return [err * x for x in fv], err

    def copy(self) -> "LogisticClassifier":
        return LogisticClassifier(self.dim, self.lr, self.l2, list(self.weights), self.bias)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "dim": self.dim, "lr": self.lr, "l2": self.l2,
                "weights": list(self.weights), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticClassifier":
        return cls(dim=d["dim"], lr=d["lr"], l2=d.get("l2", 0.0), weights=d["weights"],
                   bias=d["bias"])


def score_ml(clf, fv: Sequence[float]) -> float:
    return clf.score(fv)


def train_ml(clf, batch) -> LogisticClassifier:
    return clf.train(batch)
