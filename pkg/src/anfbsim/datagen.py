"""Seeded synthetic transaction streams with planted fraud, plus CSV ingestion.

All randomness flows through one ``numpy.random.Generator(PCG64(seed))`` so a
stream is fully determined by its :class:`ScenarioSpec`.
"""
from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError
from .features import (DEFAULT_AMOUNT_CAP, LEGIT_LOG_MEDIAN, LEGIT_TX_SIGMA,
                       LEGIT_USER_SPREAD, FeatureConfig, featurize)
from .profiles import BehaviorTracker, ProfileConfig
from .transactions import REGIONS, Transaction, haversine_km, local_hour

GENERATOR_VERSION = "1.0"

PATTERNS = ("value_outlier", "micro_burst", "off_hours", "geo_jump", "multi_step_chain")

_DEFAULT_MIX = {"value_outlier": 0.3, "micro_burst": 0.2, "off_hours": 0.2,
                "geo_jump": 0.3, "multi_step_chain": 0.0}

PRESETS: dict[str, dict] = {
    "S1": {"fraud_rate": 0.001, "pattern_mix": dict(_DEFAULT_MIX)},
    "S2": {"fraud_rate": 0.01, "pattern_mix": {"value_outlier": 0.25, "micro_burst": 0.25,
                                               "off_hours": 0.2, "geo_jump": 0.2,
                                               "multi_step_chain": 0.1}},
    "S3": {"fraud_rate": 0.05, "pattern_mix": {"value_outlier": 0.15, "micro_burst": 0.2,
                                               "off_hours": 0.15, "geo_jump": 0.2,
                                               "multi_step_chain": 0.3}},
}
PRESET_N_TX = 50_000


@dataclass(frozen=True)
class GeneratorParams:
    """Concrete generative parameters behind the qualitative fraud patterns."""

    log_median: float = LEGIT_LOG_MEDIAN
    user_spread: float = LEGIT_USER_SPREAD
    tx_sigma: float = LEGIT_TX_SIGMA
    activity_sigma: float = 0.8
    home_jitter_deg: float = 0.2
    secondary_device_share: float = 0.1
    secondary_device_use: float = 0.3
    night_floor: float = 0.08  # relative legit activity outside 06:00-22:00 local
    amount_cap: float = DEFAULT_AMOUNT_CAP
    outlier_cap_multiple: tuple = (1.0, 2.5)
    burst_len: tuple = (3, 8)
    burst_gap_ms: tuple = (1_000, 3_000)
    burst_amount: tuple = (1.0, 9.99)
    off_hours_window: tuple = (1.0, 5.0)  # local hours
    off_hours_multiple: tuple = (3.0, 8.0)
    geo_min_km: float = 3_000.0
    geo_multiple: tuple = (2.0, 6.0)
    chain_hops: tuple = (3, 5)
    chain_gap_ms: tuple = (20_000, 120_000)
    chain_first_cap_fraction: tuple = (0.5, 1.0)
    chain_forward_fraction: tuple = (0.9, 0.98)
    min_victim_history: int = 3
    fraud_start_fraction: float = 0.1


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "custom"
    n_tx: int = 10_000
    fraud_rate: float = 0.01
    n_users: int = 2_000
    arrival: float = 100.0  # mean inter-arrival, virtual ms
    pattern_mix: Mapping[str, float] = field(default_factory=lambda: dict(_DEFAULT_MIX))
    seed: int = 42
    params: GeneratorParams = field(default_factory=GeneratorParams)

    def __post_init__(self):
        if self.n_tx < 1:
            raise ConfigError("n_tx must be at least 1")
        if self.n_users < 2:
            raise ConfigError("n_users must be at least 2 (sender and receiver differ)")
        if not 0.0 <= self.fraud_rate <= 1.0:
            raise ConfigError("fraud_rate must lie in [0, 1]")
        if not self.arrival > 0:
            raise ConfigError("arrival must be positive")
        unknown = set(self.pattern_mix) - set(PATTERNS)
        if unknown:
            raise ConfigError(f"unknown fraud patterns: {sorted(unknown)}")
        weights = [self.pattern_mix.get(p, 0.0) for p in PATTERNS]
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ConfigError("pattern_mix weights must be non-negative with a positive sum")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pattern_mix"] = {p: float(self.pattern_mix.get(p, 0.0)) for p in PATTERNS}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        d = dict(d)
        params = d.pop("params", None) or {}
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
        return cls(params=GeneratorParams(**params), **d)


def scenario_preset(name: str, n_tx: Optional[int] = None, seed: int = 42, **overrides) -> ScenarioSpec:
    """S1/S2/S3 presets; fraud rates are fixed, ``n_tx`` may be scaled down."""
    key = name.upper()
    if key not in PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {sorted(PRESETS)}")
    base = PRESETS[key]
    return ScenarioSpec(name=key, n_tx=PRESET_N_TX if n_tx is None else n_tx,
                        fraud_rate=base["fraud_rate"], pattern_mix=dict(base["pattern_mix"]),
                        seed=seed, **overrides)


@dataclass
class LabeledStream:
    transactions: list
    manifest: dict
    patterns: dict = field(default_factory=dict)  # tx_id -> planted pattern name

    def __len__(self):
        return len(self.transactions)

    @property
    def fraud_count(self) -> int:
        return sum(1 for t in self.transactions if t.label == 1)


def _diurnal(hour: float, floor: float) -> float:
    if 6.0 <= hour < 22.0:
        return floor + (1.0 - floor) * math.sin(math.pi * (hour - 6.0) / 16.0)
    return floor


@dataclass
class _Users:
    ids: list
    home: np.ndarray  # region id per user
    lat: np.ndarray
    lon: np.ndarray
    log_median: np.ndarray
    activity: np.ndarray
    secondary: np.ndarray


def _make_users(spec: ScenarioSpec, rng: np.random.Generator) -> _Users:
    p, n = spec.params, spec.n_users
    home = rng.integers(0, len(REGIONS), n)
    centers = np.array([(r.lat, r.lon) for r in REGIONS])
    lat = centers[home, 0] + rng.normal(0.0, p.home_jitter_deg, n)
    lon = centers[home, 1] + rng.normal(0.0, p.home_jitter_deg, n)
    log_median = rng.normal(p.log_median, p.user_spread, n)
    activity = rng.lognormal(0.0, p.activity_sigma, n)
    secondary = rng.random(n) < p.secondary_device_share
    width = len(str(n - 1))
    ids = [f"u{i:0{width}d}" for i in range(n)]
    return _Users(ids, home, np.round(lat, 4), np.round(lon, 4), log_median, activity, secondary)


def _plan_fraud(spec: ScenarioSpec, rng: np.random.Generator) -> list[tuple[str, int]]:
    """Split the exact fraud budget into pattern events of (pattern, size)."""
    p = spec.params
    remaining = int(round(spec.n_tx * spec.fraud_rate))
    weights = np.array([spec.pattern_mix.get(k, 0.0) for k in PATTERNS], dtype=float)
    weights /= weights.sum()
    events = []
    while remaining > 0:
        pattern = PATTERNS[int(rng.choice(len(PATTERNS), p=weights))]
        if pattern == "micro_burst":
            size = int(rng.integers(p.burst_len[0], p.burst_len[1] + 1))
        elif pattern == "multi_step_chain":
            size = int(rng.integers(p.chain_hops[0], p.chain_hops[1] + 1))
        else:
            size = 1
        size = min(size, remaining)
        events.append((pattern, size))
        remaining -= size
    return events


def generate(spec: ScenarioSpec, profile_config: ProfileConfig = ProfileConfig()) -> LabeledStream:
    """Generate a labeled stream; identical specs give identical streams."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    p = spec.params
    users = _make_users(spec, rng)
    events = _plan_fraud(spec, rng)
    n_fraud = sum(s for _, s in events)
    n_legit = spec.n_tx - n_fraud

    legit_times = np.floor(np.cumsum(rng.exponential(spec.arrival, n_legit))).astype(np.int64)
    span = int(legit_times[-1]) if n_legit else int(spec.n_tx * spec.arrival)

    # (time, creation order, kind, event id, member index)
    slots = [(int(t), i, "legit", -1, 0) for i, t in enumerate(legit_times)]
    order = n_legit
    for ev_id, (pattern, size) in enumerate(events):
        t = int(rng.uniform(p.fraud_start_fraction * span, span))
        for m in range(size):
            if m:
                if pattern == "micro_burst":
                    t += int(rng.integers(p.burst_gap_ms[0], p.burst_gap_ms[1] + 1))
                else:
                    t += int(rng.integers(p.chain_gap_ms[0], p.chain_gap_ms[1] + 1))
            slots.append((t, order, pattern, ev_id, m))
            order += 1
    slots.sort(key=lambda s: (s[0], s[1]))

    region_members = [np.flatnonzero(users.home == r) for r in range(len(REGIONS))]
    region_cum = [np.cumsum(users.activity[m]) for m in region_members]
    region_activity = np.array([c[-1] if len(c) else 0.0 for c in region_cum])

    hist = [0] * spec.n_users
    seen: list[int] = []
    eligible: list[int] = []
    event_state: dict[int, dict] = {}
    rows = []
    patterns: dict[int, str] = {}
    prev_t = -1

    def other_user(exclude: set) -> int:
        while True:
            r = int(rng.integers(0, spec.n_users))
            if r not in exclude:
                return r

    def pick_victim(t: int, night_only: bool = False) -> int:
        pool = eligible if eligible else (seen if seen else list(range(spec.n_users)))
        if night_only:
            lo, hi = p.off_hours_window
            night = [u for u in pool if lo <= local_hour(t, int(users.home[u])) < hi]
            if night:
                pool = night
        return pool[int(rng.integers(0, len(pool)))]

    for t, _, kind, ev_id, member in slots:
        t = max(t, prev_t + 1)  # strictly increasing timestamps
        prev_t = t
        label = 0
        if kind == "legit":
            w = np.array([_diurnal(local_hour(t, r), p.night_floor) for r in range(len(REGIONS))])
            w *= region_activity
            r = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
            r = min(r, len(REGIONS) - 1)
            cum = region_cum[r]
            j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            s = int(region_members[r][min(j, len(cum) - 1)])
            amount = round(float(np.exp(rng.normal(users.log_median[s], p.tx_sigma))), 2)
            use_secondary = bool(users.secondary[s]) and rng.random() < p.secondary_device_use
            device = f"d{s}-{1 if use_secondary else 0}"
            recv = other_user({s})
            region, lat, lon = int(users.home[s]), float(users.lat[s]), float(users.lon[s])
        else:
            label = 1
            st = event_state.get(ev_id)
            if st is None:
                victim = pick_victim(t, night_only=(kind == "off_hours"))
                st = event_state[ev_id] = {"victim": victim, "device": f"x{ev_id}"}
                if kind == "multi_step_chain":
                    size = events[ev_id][1]
                    pool = [u for u in (seen or range(spec.n_users)) if u != victim]
                    mules = []
                    for _ in range(size):
                        cand = [u for u in pool if u not in mules]
                        mules.append(cand[int(rng.integers(0, len(cand)))] if cand
                                     else other_user({victim, *mules}))
                    st["mules"] = mules
                    st["amount"] = p.amount_cap * float(rng.uniform(*p.chain_first_cap_fraction))
            victim = st["victim"]
            s, device = victim, st["device"]
            region, lat, lon = int(users.home[s]), float(users.lat[s]), float(users.lon[s])
            mu = float(np.exp(users.log_median[s]))
            if kind == "value_outlier":
                amount = p.amount_cap * float(rng.uniform(*p.outlier_cap_multiple))
                recv = other_user({s})
            elif kind == "micro_burst":
                amount = float(rng.uniform(*p.burst_amount))
                recv = other_user({s})
            elif kind == "off_hours":
                amount = mu * float(rng.uniform(*p.off_hours_multiple))
                recv = other_user({s})
            elif kind == "geo_jump":
                home = REGIONS[region]
                far = [k for k, reg in enumerate(REGIONS)
                       if haversine_km(home.lat, home.lon, reg.lat, reg.lon) >= p.geo_min_km]
                region = far[int(rng.integers(0, len(far)))]
                lat, lon = REGIONS[region].lat, REGIONS[region].lon
                amount = mu * float(rng.uniform(*p.geo_multiple))
                recv = other_user({s})
            else:  # multi_step_chain
                mules = st["mules"]
                if member:
                    s = mules[member - 1]
                    device = f"x{ev_id}-{member}"
                    home_r = int(users.home[s])
                    abroad = [k for k in range(len(REGIONS)) if k != home_r]
                    region = abroad[int(rng.integers(0, len(abroad)))]
                    lat, lon = REGIONS[region].lat, REGIONS[region].lon
                    st["amount"] *= float(rng.uniform(*p.chain_forward_fraction))
                amount = st["amount"]
                recv = mules[member]
            amount = round(amount, 2)
        rows.append((s, recv, amount, t, region, lat, lon, device, label, kind))
        hist[s] += 1
        if hist[s] == 1:
            seen.append(s)
        if hist[s] == p.min_victim_history:
            eligible.append(s)

    txs = []
    for i, (s, recv, amount, t, region, lat, lon, device, label, kind) in enumerate(rows):
        txs.append(Transaction(tx_id=i, sender=users.ids[s], receiver=users.ids[recv],
                               amount=amount, timestamp=t, region=region, lat=lat, lon=lon,
                               device=device, label=label))
        if kind != "legit":
            patterns[i] = kind
    tracker = BehaviorTracker(profile_config)
    txs = list(tracker.annotate(txs))
    manifest = {
        "generator": "anfbsim.datagen",
        "generator_version": GENERATOR_VERSION,
        "spec": spec.to_dict(),
        "profile_config": asdict(profile_config),
        "n_fraud": n_fraud,
        "fraud_by_pattern": {k: sum(1 for v in patterns.values() if v == k) for k in PATTERNS},
        "fingerprint": fingerprint(txs),
    }
    return LabeledStream(txs, manifest, patterns)


# ---------------------------------------------------------------- self-test

DEVIATION_THRESHOLDS = {
    "amount": 0.9,  # normalized amount >=
    "amount_zscore": 3.0,  # |z| >=
    "tx_rate": 240.0,  # tx/hour >= (4 within the default 60 s window)
    "device_consistency": 0.5,  # <=
    "geo_jump": 1,  # ==
    "dormancy_gap": 72.0,  # hours >=
}


def deviations(tx: Transaction, config: FeatureConfig = FeatureConfig(),
               thresholds: Mapping = DEVIATION_THRESHOLDS) -> list[str]:
    """Names of the dimensions in which ``tx`` exceeds its deviation threshold."""
    b = tx.behavior
    fv = featurize(tx, config)
    out = []
    if fv[0] >= thresholds["amount"]:
        out.append("amount")
    if abs(b.amount_zscore) >= thresholds["amount_zscore"]:
        out.append("amount_zscore")
    if b.tx_rate >= thresholds["tx_rate"]:
        out.append("tx_rate")
    if b.device_consistency <= thresholds["device_consistency"]:
        out.append("device_consistency")
    if b.geo_jump == thresholds["geo_jump"]:
        out.append("geo_jump")
    if b.dormancy_gap >= thresholds["dormancy_gap"]:
        out.append("dormancy_gap")
    return out


def self_test(stream: LabeledStream, config: FeatureConfig = FeatureConfig()) -> list[int]:
    """tx_ids of planted fraud that deviates in no dimension (empty list = pass)."""
    return [t.tx_id for t in stream.transactions if t.label == 1 and not deviations(t, config)]


# ---------------------------------------------------------------- CSV

CSV_COLUMNS = ("tx_id", "sender", "receiver", "amount", "timestamp", "region", "lat", "lon",
               "device", "label", "pattern")
MANDATORY = ("sender", "receiver", "amount", "timestamp")
_INT_RE = re.compile(r"^[+-]?\d+$")


def fingerprint(txs: Sequence[Transaction]) -> str:
    h = hashlib.sha256()
    for t in txs:
        h.update(repr((t.tx_id, t.sender, t.receiver, t.amount, t.timestamp, t.region,
                       t.lat, t.lon, t.device, t.label)).encode())
    return h.hexdigest()


def write_csv(stream: LabeledStream, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for t in stream.transactions:
            w.writerow([t.tx_id, t.sender, t.receiver, repr(t.amount), t.timestamp, t.region,
                        "" if t.lat is None else repr(t.lat), "" if t.lon is None else repr(t.lon),
                        t.device, "" if t.label is None else t.label,
                        stream.patterns.get(t.tx_id, "")])
    return path


def parse_timestamp(value: str) -> int:
    """Integer milliseconds, or ISO-8601 converted to ms since the Unix epoch (UTC if naive)."""
    value = value.strip()
    if _INT_RE.match(value):
        return int(value)
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def load_csv(path, schema_map: Optional[Mapping[str, str]] = None,
             profile_config: ProfileConfig = ProfileConfig()) -> LabeledStream:
    """Parse a CSV with a header row into a behaviour-annotated stream.

    ``schema_map`` maps canonical field names (``CSV_COLUMNS``) to the file's
    column names; unmapped fields are looked up under their canonical name.
    Rows are sorted by (timestamp, tx_id). Missing tx_ids are assigned in file
    order; missing region/device default to 0 / "" and missing coordinates
    disable geo-jump detection for that row.
    """
    path = Path(path)
    cols = {k: (schema_map or {}).get(k, k) for k in CSV_COLUMNS}
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty; a header row is required", line=1) from None
        index = {name.strip(): i for i, name in enumerate(header)}
        missing = [cols[k] for k in MANDATORY if cols[k] not in index]
        if missing:
            raise SchemaError(f"missing mandatory column(s): {', '.join(missing)}", line=1)

        def get(row, key):
            i = index.get(cols[key])
            if i is None or i >= len(row):
                return ""
            return row[i].strip()

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                amount = float(get(row, "amount"))
                if not math.isfinite(amount):
                    raise ValueError("amount is not finite")
                ts = parse_timestamp(get(row, "timestamp"))
                raw_id = get(row, "tx_id")
                tx_id = int(raw_id) if raw_id else len(rows)
                raw_label = get(row, "label")
                label = None
                if raw_label:
                    label = int(float(raw_label))
                raw_region = get(row, "region")
                lat, lon = get(row, "lat"), get(row, "lon")
                tx = Transaction(
                    tx_id=tx_id, sender=get(row, "sender"), receiver=get(row, "receiver"),
                    amount=amount, timestamp=ts, region=int(raw_region) if raw_region else 0,
                    lat=float(lat) if lat else None, lon=float(lon) if lon else None,
                    device=get(row, "device"), label=label)
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"malformed row: {exc}", line=lineno) from None
            rows.append((tx, get(row, "pattern")))
    rows.sort(key=lambda r: (r[0].timestamp, r[0].tx_id))
    tracker = BehaviorTracker(profile_config)
    txs = [tracker.observe(tx) for tx, _ in rows]
    patterns = {tx.tx_id: pat for tx, pat in rows if pat}
    manifest = {"source": str(path), "schema_map": dict(cols),
                "profile_config": asdict(profile_config), "fingerprint": fingerprint(txs)}
    return LabeledStream(txs, manifest, patterns)
