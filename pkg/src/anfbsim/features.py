"""Normalisation of a behaviour-annotated transaction into a fixed [0, 1]^d vector."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

from .errors import NonFiniteError
from .transactions import Transaction, local_hour

FEATURE_LAYOUT_VERSION = 1
FEATURE_NAMES = (
    "amount",
    "hour_of_day",
    "tx_rate",
    "amount_zscore",
    "device_consistency",
    "geo_jump",
    "dormancy",
)
N_FEATURES = len(FEATURE_NAMES)

FeatureVector = tuple  # tuple[float, ...] of length N_FEATURES

# Legitimate amounts: per-user log-median ~ N(log 60, 0.6^2), per-tx lognormal sigma 0.5.
LEGIT_LOG_MEDIAN = math.log(60.0)
LEGIT_USER_SPREAD = 0.6
LEGIT_TX_SIGMA = 0.5


def legit_amount_quantile(q: float, log_median: float = LEGIT_LOG_MEDIAN,
                          user_spread: float = LEGIT_USER_SPREAD,
                          tx_sigma: float = LEGIT_TX_SIGMA) -> float:
    """Quantile of the generator's marginal legitimate amount distribution."""
    sigma = math.hypot(user_spread, tx_sigma)
    return math.exp(log_median + sigma * NormalDist().inv_cdf(q))


DEFAULT_AMOUNT_CAP = legit_amount_quantile(0.999)


def squash(x: float, center: float, scale: float) -> float:
    """Logistic squash of an unbounded value; ``squash(center) == 0.5``."""
    t = (x - center) / scale
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class FeatureConfig:
    amount_cap: float = DEFAULT_AMOUNT_CAP
    rate_center: float = 150.0  # tx/hour
    rate_scale: float = 40.0
    zscore_scale: float = 1.0
    dormancy_center: float = 72.0  # hours
    dormancy_scale: float = 24.0

    def __post_init__(self):
        if not (self.amount_cap > 0 and math.isfinite(self.amount_cap)):
            raise ValueError("amount_cap must be positive and finite")
        for name in ("rate_scale", "zscore_scale", "dormancy_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def featurize(tx: Transaction, config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Map ``tx`` (with behaviour populated) to the 7-component feature vector.

    Amount is min-max scaled against ``amount_cap`` and saturates at 1 above it;
    rate, |z-score| and dormancy go through :func:`squash`.
    """
    b = tx.behavior
    if b is None:
        raise ValueError(f"tx {tx.tx_id} has no behavior vector; annotate the stream first")
    raw = (tx.amount, b.tx_rate, b.amount_zscore, b.device_consistency, b.dormancy_gap)
    if not all(math.isfinite(v) for v in raw):
        raise NonFiniteError(f"tx {tx.tx_id} has a non-finite feature input")
    amount = min(tx.amount / config.amount_cap, 1.0)
    hour = local_hour(tx.timestamp, tx.region) / 24.0
    rate = squash(b.tx_rate, config.rate_center, config.rate_scale)
    zs = squash(abs(b.amount_zscore), 0.0, config.zscore_scale)
    dormancy = squash(b.dormancy_gap, config.dormancy_center, config.dormancy_scale)
    return (amount, hour, rate, zs, float(b.device_consistency), float(b.geo_jump), dormancy)
