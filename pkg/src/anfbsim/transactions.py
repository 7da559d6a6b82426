"""Transaction records and the geographic regions they reference."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional


class Region(NamedTuple):
    name: str
    lat: float
    lon: float
    utc_offset_h: float


# Region ids index into this table. Offsets drive the local hour-of-day feature.
REGIONS: tuple[Region, ...] = (
    Region("london", 51.5074, -0.1278, 0.0),
    Region("new_york", 40.7128, -74.0060, -5.0),
    Region("los_angeles", 34.0522, -118.2437, -8.0),
    Region("sao_paulo", -23.5505, -46.6333, -3.0),
    Region("lagos", 6.5244, 3.3792, 1.0),
    Region("frankfurt", 50.1109, 8.6821, 1.0),
    Region("dubai", 25.2048, 55.2708, 4.0),
    Region("mumbai", 19.0760, 72.8777, 5.5),
    Region("singapore", 1.3521, 103.8198, 8.0),
    Region("tokyo", 35.6762, 139.6503, 9.0),
    Region("sydney", -33.8688, 151.2093, 10.0),
    Region("mexico_city", 19.4326, -99.1332, -6.0),
)

HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS


def region_offset_h(region: int) -> float:
    if 0 <= region < len(REGIONS):
        return REGIONS[region].utc_offset_h
    return 0.0


def local_hour(timestamp_ms: int, region: int) -> float:
    """Fractional local hour in [0, 24) at ``region`` for a virtual UTC timestamp."""
    h = (timestamp_ms / HOUR_MS + region_offset_h(region)) % 24.0
    return h if h < 24.0 else 0.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    r = 6371.0088
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True, slots=True)
class BehaviorVector:
    """Per-transaction behavioural context derived from the sender's history."""

    tx_rate: float  # sender transactions per hour over the rate window, incl. this one
    amount_zscore: float
    device_consistency: float
    geo_jump: int
    dormancy_gap: float  # hours

    def __post_init__(self):
        for name in ("tx_rate", "amount_zscore", "device_consistency", "dormancy_gap"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"behavior.{name} is not finite")
        if not 0.0 <= self.device_consistency <= 1.0:
            raise ValueError("device_consistency must lie in [0, 1]")
        if self.geo_jump not in (0, 1):
            raise ValueError("geo_jump must be 0 or 1")


@dataclass(frozen=True, slots=True)
class Transaction:
    tx_id: int
    sender: str
    receiver: str
    amount: float
    timestamp: int  # virtual ms since simulation epoch (UTC midnight)
    region: int = 0
    lat: Optional[float] = None
    lon: Optional[float] = None
    device: str = ""
    behavior: Optional[BehaviorVector] = None
    label: Optional[int] = None

    def __post_init__(self):
        if not (0 <= self.tx_id < 2**64):
            raise ValueError(f"tx_id {self.tx_id} is not a 64-bit unsigned id")
        if not math.isfinite(self.amount) or self.amount < 0:
            raise ValueError(f"tx {self.tx_id}: amount must be finite and non-negative")
        if self.sender == self.receiver:
            raise ValueError(f"tx {self.tx_id}: sender equals receiver")
        if self.label not in (None, 0, 1):
            raise ValueError(f"tx {self.tx_id}: label must be 0, 1 or absent")
        if (self.lat is None) != (self.lon is None):
            raise ValueError(f"tx {self.tx_id}: lat and lon must be given together")

    @property
    def has_coords(self) -> bool:
        return self.lat is not None

    def with_behavior(self, behavior: BehaviorVector) -> "Transaction":
        return replace(self, behavior=behavior)
