"""Per-account behavioural profiles and derivation of :class:`BehaviorVector`."""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import OrderingError
from .transactions import HOUR_MS, BehaviorVector, Transaction, haversine_km


@dataclass(frozen=True)
class ProfileConfig:
    rate_window_ms: int = 60_000
    history_horizon_ms: int = 24 * HOUR_MS
    device_window: int = 20
    plausible_speed_kmh: float = 900.0


@dataclass
class UserProfile:
    account: str
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0  # sum of squared deviations (Welford)
    last_timestamp: Optional[int] = None
    last_region: Optional[int] = None
    last_lat: Optional[float] = None
    last_lon: Optional[float] = None
    recent_times: deque = field(default_factory=deque)
    recent_devices: deque = field(default_factory=deque)

    @property
    def variance(self) -> float:
        """Population variance of observed amounts (0 before two observations)."""
        if self.count < 2:
            return 0.0
        return max(self.m2 / self.count, 0.0)

    @property
    def modal_device(self) -> Optional[str]:
        if not self.recent_devices:
            return None
        counts = Counter(self.recent_devices)
        best = max(counts.values())
        # ties resolve to the most recently used of the tied devices
        for dev in reversed(self.recent_devices):
            if counts[dev] == best:
                return dev
        return None


def update_profile(profile: UserProfile, tx: Transaction,
                   config: ProfileConfig = ProfileConfig()) -> UserProfile:
    """Fold ``tx`` into ``profile`` in place and return it."""
    if profile.last_timestamp is not None and tx.timestamp < profile.last_timestamp:
        raise OrderingError(
            f"tx {tx.tx_id} at {tx.timestamp} precedes account {profile.account}'s "
            f"last transaction at {profile.last_timestamp}")
    profile.count += 1
    delta = tx.amount - profile.mean
    profile.mean += delta / profile.count
    profile.m2 += delta * (tx.amount - profile.mean)
    profile.last_timestamp = tx.timestamp
    profile.last_region = tx.region
    if tx.has_coords:
        profile.last_lat, profile.last_lon = tx.lat, tx.lon
    profile.recent_times.append(tx.timestamp)
    horizon = tx.timestamp - config.history_horizon_ms
    while profile.recent_times and profile.recent_times[0] < horizon:
        profile.recent_times.popleft()
    profile.recent_devices.append(tx.device)
    while len(profile.recent_devices) > config.device_window:
        profile.recent_devices.popleft()
    return profile


def derive_behavior(profile: UserProfile, tx: Transaction,
                    config: ProfileConfig = ProfileConfig()) -> BehaviorVector:
    """Behaviour of ``tx`` relative to its sender's history (``profile`` excludes ``tx``).

    Degenerate histories give fixed defaults: z-score 0 while the variance is 0,
    dormancy 0 and full device consistency for an account's first transaction.
    """
    window_start = tx.timestamp - config.rate_window_ms
    in_window = 1 + sum(1 for t in profile.recent_times if t > window_start)
    tx_rate = in_window * HOUR_MS / config.rate_window_ms

    var = profile.variance
    zscore = (tx.amount - profile.mean) / math.sqrt(var) if var > 0.0 else 0.0

    if profile.recent_devices:
        same = sum(1 for d in profile.recent_devices if d == tx.device)
        device_consistency = same / len(profile.recent_devices)
    else:
        device_consistency = 1.0

    geo_jump = 0
    dormancy = 0.0
    if profile.last_timestamp is not None:
        elapsed_h = (tx.timestamp - profile.last_timestamp) / HOUR_MS
        dormancy = elapsed_h
        if tx.has_coords and profile.last_lat is not None:
            dist = haversine_km(profile.last_lat, profile.last_lon, tx.lat, tx.lon)
            if dist > 0.0 and (elapsed_h <= 0.0 or dist / elapsed_h > config.plausible_speed_kmh):
                geo_jump = 1

    return BehaviorVector(tx_rate=tx_rate, amount_zscore=zscore,
                          device_consistency=device_consistency, geo_jump=geo_jump,
                          dormancy_gap=dormancy)


class BehaviorTracker:
    """Keeps one profile per sender and annotates a time-ordered stream."""

    def __init__(self, config: ProfileConfig = ProfileConfig()):
        self.config = config
        self.profiles: dict[str, UserProfile] = {}

    def profile(self, account: str) -> UserProfile:
        p = self.profiles.get(account)
        if p is None:
            p = self.profiles[account] = UserProfile(account)
        return p

    def observe(self, tx: Transaction) -> Transaction:
        p = self.profile(tx.sender)
        behavior = derive_behavior(p, tx, self.config)
        update_profile(p, tx, self.config)
        return tx.with_behavior(behavior)

    def annotate(self, txs: Iterable[Transaction]) -> Iterator[Transaction]:
        for tx in txs:
            yield self.observe(tx)
