"""Detection-quality and timing metrics over run artifacts.

Estimators: means are exact rational means rendered as floats, the median is the
midpoint of the two central values for even counts, and p95 is nearest-rank
(the ``ceil(0.95 * n)``-th smallest value).
"""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import UndefinedMetricError
from .risk.engine import Decision

DEFAULT_POSITIVE = frozenset({Decision.REJECT})


def positive_rule(include_monitor: bool = False) -> frozenset:
    return frozenset({Decision.REJECT, Decision.MONITOR}) if include_monitor else DEFAULT_POSITIVE


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_from_pairs(labels: Iterable[int], decisions: Iterable[Decision],
                         positive: frozenset = DEFAULT_POSITIVE) -> ConfusionMatrix:
    tp = tn = fp = fn = 0
    for y, d in zip(labels, decisions, strict=True):
        pred = Decision(d) in positive
        if y == 1:
            tp += pred
            fn += not pred
        elif y == 0:
            fp += pred
            tn += not pred
        else:
            raise ValueError(f"label must be 0 or 1, got {y!r}")
    return ConfusionMatrix(tp, tn, fp, fn)


def confusion(lifecycles: Iterable, positive: frozenset = DEFAULT_POSITIVE) -> ConfusionMatrix:
    """Tally lifecycles (anything with ``tx_id``, ``label`` and ``decision``)."""
    labels, decisions = [], []
    for lc in lifecycles:
        if lc.label is None:
            raise ValueError(f"tx {lc.tx_id} has no ground-truth label")
        labels.append(lc.label)
        decisions.append(lc.decision)
    return confusion_from_pairs(labels, decisions, positive)


def _ratio(num: int, den: int, name: str) -> float:
    if den == 0:
        raise UndefinedMetricError(f"{name} is undefined (zero denominator)")
    return num / den


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp + cm.tn, cm.total, "accuracy")


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fp, "precision")


def recall(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn, "recall")


def f1(cm: ConfusionMatrix) -> float:
    return _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1")


# --------------------------------------------------------------------- timing

def nearest_rank(values: Sequence, q: float):
    if not values:
        raise UndefinedMetricError("percentile of an empty sample")
    s = sorted(values)
    k = max(1, math.ceil(q * len(s)))
    return s[k - 1]


def exact_mean(values: Sequence[int]) -> Fraction:
    if not values:
        raise UndefinedMetricError("mean of an empty sample")
    return Fraction(sum(values), len(values))


@dataclass(frozen=True)
class TimingStats:
    tc: tuple  # per confirmed tx, submission order
    db: tuple  # per committed block, commit order
    unconfirmed: int
    l_edge: int
    l_ai: int

    @property
    def l_blockchain(self) -> tuple:
        return tuple(t - self.l_edge - self.l_ai for t in self.tc)

    @property
    def l_total(self) -> tuple:
        return tuple(self.l_edge + self.l_ai + b for b in self.l_blockchain)

    def decomposition(self) -> dict:
        """Exact means; ``l_total == l_edge + l_ai + l_blockchain`` holds as rationals."""
        n = len(self.tc)
        return {"l_edge": Fraction(self.l_edge), "l_ai": Fraction(self.l_ai),
                "l_blockchain": exact_mean(self.l_blockchain) if n else None,
                "l_total": exact_mean(self.l_total) if n else None}


def block_delays(events: Iterable[Mapping]) -> list[int]:
    """D_b per block recomputed from broadcast events: max receive minus broadcast."""
    out = []
    for e in events:
        if e["event"] == "broadcast":
            out.append(max(e["receive"].values()) - e["t_broadcast"] if e["receive"] else 0)
    return out


def timing_metrics(lifecycles: Iterable, events: Iterable[Mapping], l_edge: int,
                   l_ai: int) -> TimingStats:
    tc, unconfirmed = [], 0
    for lc in lifecycles:
        if lc.t_confirmed is None:
            unconfirmed += 1
        else:
            tc.append(lc.t_confirmed - lc.t_submitted)
    return TimingStats(tuple(tc), tuple(block_delays(events)), unconfirmed, l_edge, l_ai)


# --------------------------------------------------------------------- report

@dataclass
class MetricsReport:
    scenario: str
    seed: int
    n_tx: int
    n_evaluated: int
    decisions: dict
    positive_rule: list
    confusion: dict
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]  # extra, not a headline metric
    f1: Optional[float]  # extra
    undefined: list
    tc_mean: Optional[float]
    tc_median: Optional[float]
    tc_p95: Optional[int]
    tc_count: int
    unconfirmed: int
    db_mean: Optional[float]
    db_max: Optional[int]
    db_min: Optional[int]
    n_blocks: int
    l_edge_mean: float
    l_ai_mean: float
    l_blockchain_mean: Optional[float]
    l_total_mean: Optional[float]
    extra: dict = field(default_factory=dict)

    CSV_FIELDS = ("scenario", "seed", "n_tx", "n_evaluated", "accuracy", "precision", "recall",
                  "f1", "tc_mean", "tc_median", "tc_p95", "db_mean", "db_max", "db_min", "n_blocks",
                  "l_edge_mean", "l_ai_mean", "l_blockchain_mean", "l_total_mean")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> list:
        d = self.to_dict()
        return ["" if d[k] is None else d[k] for k in self.CSV_FIELDS]

    def write(self, outdir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
        out = Path(outdir)
        written = []
        if "json" in formats:
            (out / "metrics.json").write_text(self.to_json())
            written.append(out / "metrics.json")
        if "csv" in formats:
            with (out / "metrics.csv").open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(self.CSV_FIELDS)
                w.writerow(self.csv_row())
            written.append(out / "metrics.csv")
        return written

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(**d)


def _safe(fn, cm, name, undefined):
    try:
        return fn(cm)
    except UndefinedMetricError:
        undefined.append(name)
        return None


def build_report(lifecycles: Sequence, events: Iterable[Mapping], *, scenario: str, seed: int,
                 l_edge: int, l_ai: int, n_tx: Optional[int] = None,
                 positive: frozenset = DEFAULT_POSITIVE, extra: Optional[dict] = None) -> MetricsReport:
    lifecycles = list(lifecycles)
    events = list(events)
    cm = confusion(lifecycles, positive)
    undefined: list = []
    acc = _safe(accuracy, cm, "accuracy", undefined)
    prec = _safe(precision, cm, "precision", undefined)
    rec = _safe(recall, cm, "recall", undefined)
    f = _safe(f1, cm, "f1", undefined)
    ts = timing_metrics(lifecycles, events, l_edge, l_ai)
    dec = ts.decomposition()
    counts = {d.value: 0 for d in Decision}
    for lc in lifecycles:
        counts[Decision(lc.decision).value] += 1
    has_tc = bool(ts.tc)
    return MetricsReport(
        scenario=scenario, seed=seed, n_tx=len(lifecycles) if n_tx is None else n_tx,
        n_evaluated=cm.total, decisions=counts, positive_rule=sorted(d.value for d in positive),
        confusion=asdict(cm), accuracy=acc, precision=prec, recall=rec, f1=f,
        undefined=undefined,
        tc_mean=float(exact_mean(ts.tc)) if has_tc else None,
        tc_median=float(statistics.median(ts.tc)) if has_tc else None,
        tc_p95=nearest_rank(ts.tc, 0.95) if has_tc else None,
        tc_count=len(ts.tc), unconfirmed=ts.unconfirmed,
        db_mean=float(exact_mean(ts.db)) if ts.db else None,
        db_max=max(ts.db) if ts.db else None, db_min=min(ts.db) if ts.db else None,
        n_blocks=len(ts.db),
        l_edge_mean=float(dec["l_edge"]), l_ai_mean=float(dec["l_ai"]),
        l_blockchain_mean=float(dec["l_blockchain"]) if has_tc else None,
        l_total_mean=float(dec["l_total"]) if has_tc else None,
        extra=dict(extra or {}))


def write_series(outdir, stats: TimingStats, lifecycles: Sequence) -> list[Path]:
    """Plot-ready series: per-tx T_c and per-block D_b."""
    out = Path(outdir)
    confirmed = [lc for lc in lifecycles if lc.t_confirmed is not None]
    with (out / "series_tc.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("tx_id", "t_submitted", "t_c"))
        for lc, t in zip(confirmed, stats.tc):
            w.writerow((lc.tx_id, lc.t_submitted, t))
    with (out / "series_db.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("block_seq", "d_b"))
        for i, d in enumerate(stats.db):
            w.writerow((i, d))
    return [out / "series_tc.csv", out / "series_db.csv"]
