"""Zero-order Sugeno rule base with adaptive rule weights.

A rule's numeric consequent (its risk level) is the same number as its weight:
the fuzzy score is the firing-strength-weighted mean of the weights of the rules
that fire, and weight adaptation is gradient descent on ``0.5 * (score - c)**2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

from .. import _kernels
from ..errors import CoverageError, DimensionError

LABELS = ("Low", "Medium", "High")
RULEBASE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MembershipFunction:
    """Triangle on the normalized axis; ``a == b`` / ``b == c`` make saturating shoulders."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c):
            raise ValueError(f"triangle parameters must satisfy a <= b <= c, got {self}")

    def __call__(self, z: float) -> float:
        return _kernels.triangular(z, self.a, self.b, self.c)


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    terms: Mapping[str, MembershipFunction]

    def __post_init__(self):
        if tuple(self.terms) != LABELS:
            raise ValueError(f"variable {self.name} must define labels {LABELS} in order")

    def degree(self, label: str, z: float) -> float:
        return self.terms[label](z)

    @classmethod
    def standard(cls, name: str) -> "FuzzyVariable":
        """Low/Medium/High with 50% overlap and saturating shoulders on [0, 1]."""
        return cls(name, {"Low": MembershipFunction(0.0, 0.0, 0.5),
                          "Medium": MembershipFunction(0.0, 0.5, 1.0),
                          "High": MembershipFunction(0.5, 1.0, 1.0)})


@dataclass
class FuzzyRule:
    antecedents: dict  # variable name -> label, conjunctive
    weight: float

    def __post_init__(self):
        if not self.antecedents:
            raise ValueError("a rule needs at least one antecedent")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"rule weight {self.weight} outside [0, 1]")

    def describe(self) -> str:
        cond = " AND ".join(f"{v} is {lab}" for v, lab in self.antecedents.items())
        return f"IF {cond} THEN risk {self.weight:.3f}"


def firing_strength(rule: FuzzyRule, inputs: Mapping[str, float],
                    variables: Mapping[str, FuzzyVariable]) -> float:
    """Product of the membership degrees of the rule's antecedents."""
    beta = 1.0
    for var, label in rule.antecedents.items():
        if var not in inputs:
            raise KeyError(f"input for fuzzy variable {var!r} is missing")
        beta = beta * variables[var].degree(label, inputs[var])
    return beta


class FuzzyRuleBase:
    """K rules over a fixed set of variables; only the weights adapt."""

    def __init__(self, variables: Sequence[FuzzyVariable], rules: Sequence[FuzzyRule],
                 learning_rate: float = 0.05):
        if not rules:
            raise ValueError("rule base needs at least one rule")
        self.variables = {v.name: v for v in variables}
        self.var_order = [v.name for v in variables]
        for r in rules:
            unknown = set(r.antecedents) - set(self.variables)
            if unknown:
                raise ValueError(f"rule references unknown variables {sorted(unknown)}")
            bad = [lab for lab in r.antecedents.values() if lab not in LABELS]
            if bad:
                raise ValueError(f"rule uses unknown labels {bad}")
        self.rules = list(rules)
        self.learning_rate = learning_rate
        mf = []
        for name in self.var_order:
            for lab in LABELS:
                m = self.variables[name].terms[lab]
                mf.extend((m.a, m.b, m.c))
        ante = []
        for r in self.rules:
            for name in self.var_order:
                lab = r.antecedents.get(name)
                ante.append(-1 if lab is None else LABELS.index(lab))
        self._kernel = _kernels.RuleKernel(mf, len(self.var_order), len(LABELS), ante)
        self.weights = [float(r.weight) for r in self.rules]

    def __len__(self):
        return len(self.rules)

    def vector(self, inputs) -> list[float]:
        if isinstance(inputs, Mapping):
            missing = [v for v in self.var_order if v not in inputs]
            if missing:
                raise KeyError(f"fuzzy inputs missing for {missing}")
            return [float(inputs[v]) for v in self.var_order]
        z = [float(v) for v in inputs]
        if len(z) != len(self.var_order):
            raise DimensionError(f"expected {len(self.var_order)} fuzzy inputs, got {len(z)}")
        return z

    def firing_strengths(self, inputs) -> list[float]:
        return self._kernel.firing(self.vector(inputs))

    def score(self, inputs) -> tuple[float, list[float]]:
        """(fuzzy score, firing strengths) under the current weights."""
        return self._kernel.score(self.vector(inputs), self.weights)

    def adapt(self, inputs, target: float, lr: float | None = None) -> float:
        """In-place gradient step toward ``target``; returns the pre-step score."""
        lr = self.learning_rate if lr is None else lr
        self.weights, r_f = self._kernel.adapt(self.vector(inputs), self.weights, float(target), lr)
        for r, w in zip(self.rules, self.weights):
            r.weight = w
        return r_f

    def set_weights(self, weights: Sequence[float]) -> None:
        if len(weights) != len(self.rules):
            raise DimensionError("weight count does not match rule count")
        if not all(0.0 <= w <= 1.0 for w in weights):
            raise ValueError("rule weights must lie in [0, 1]")
        self.weights = [float(w) for w in weights]
        for r, w in zip(self.rules, self.weights):
            r.weight = w

    def coverage_gaps(self, resolution: int = 21) -> list[tuple[float, ...]]:
        """Grid points of [0, 1]^n where no rule fires (empty for a valid base)."""
        axis = [i / (resolution - 1) for i in range(resolution)]
        gaps = []
        for point in product(axis, repeat=len(self.var_order)):
            if sum(self._kernel.firing(list(point))) <= 0.0:
                gaps.append(point)
        return gaps

    def copy(self) -> "FuzzyRuleBase":
        return FuzzyRuleBase.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "schema_version": RULEBASE_SCHEMA_VERSION,
            "learning_rate": self.learning_rate,
            "variables": [{"name": n, "terms": {lab: [m.a, m.b, m.c]
                                                for lab, m in self.variables[n].terms.items()}}
                          for n in self.var_order],
            "rules": [{"if": dict(r.antecedents), "weight": w}
                      for r, w in zip(self.rules, self.weights)],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FuzzyRuleBase":
        if d.get("schema_version") != RULEBASE_SCHEMA_VERSION:
            raise ValueError(f"unsupported rule base schema {d.get('schema_version')!r}")
        variables = [FuzzyVariable(v["name"], {lab: MembershipFunction(*v["terms"][lab])
                                               for lab in LABELS})
                     for v in d["variables"]]
        rules = [FuzzyRule(dict(r["if"]), float(r["weight"])) for r in d["rules"]]
        return cls(variables, rules, d.get("learning_rate", 0.05))

    @classmethod
    def load(cls, path=None) -> "FuzzyRuleBase":
        """Load a rule base file; ``None`` loads the packaged default."""
        if path is None:
            text = resources.files("anfbsim").joinpath("data/default_rules.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def default(cls) -> "FuzzyRuleBase":
        return cls.load(None)


def fuzzy_score(rb: FuzzyRuleBase, inputs) -> float:
    r_f, _ = rb.score(inputs)
    return r_f


def adapt_weights(rb: FuzzyRuleBase, inputs, target: int) -> FuzzyRuleBase:
    rb.adapt(inputs, target)
    return rb


__all__ = ["LABELS", "MembershipFunction", "FuzzyVariable", "FuzzyRule", "FuzzyRuleBase",
           "firing_strength", "fuzzy_score", "adapt_weights", "CoverageError"]
