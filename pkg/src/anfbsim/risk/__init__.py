"""Risk engine: statistical score, fuzzy score, fusion and decision."""
from .classifier import LogisticClassifier, score_ml, train_ml
from .engine import (Decision, FusionConfig, RiskAssessment, RiskEngine, assess, decide,
                     fuse, fuzzy_inputs)
from .fuzzy import (LABELS, FuzzyRule, FuzzyRuleBase, FuzzyVariable, MembershipFunction,
                    adapt_weights, firing_strength, fuzzy_score)

__all__ = ["LogisticClassifier", "score_ml", "train_ml", "Decision", "FusionConfig",
           "RiskAssessment", "RiskEngine", "assess", "decide", "fuse", "fuzzy_inputs", "LABELS",
           "FuzzyRule", "FuzzyRuleBase", "FuzzyVariable", "MembershipFunction", "adapt_weights",
           "firing_strength", "fuzzy_score"]
