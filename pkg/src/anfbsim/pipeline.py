"""Stream processing: assess, gate, batch, reach consensus, commit.

One deterministic event loop on a :class:`~anfbsim.consensus.SimClock` owns the
engine, mempool, ledger and incident log. Event kinds:

``arrival``   transaction submitted; assessed on a single edge/AI server
``enqueue``   assessment finished, Accept/Monitor transaction enters the mempool
``tick``      block interval elapsed
``commit``    consensus reached quorum; block appended and broadcast
``final``     broadcast reached every node; transactions confirmed
``discard``   consensus failed; transactions return to the mempool front
"""
from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .consensus import EventLog, NetworkModel, SimClock, broadcast, run_consensus, select_leader
from .errors import ConfigError, NonFiniteError
from .ledger import (ZERO_HASH, Block, BlockEntry, Ledger, VerifyResult, chain_hash, encode_tx,
                     tx_to_dict, _F64, _I64, _U64, _str)
from .risk.engine import Decision, RiskAssessment, RiskEngine
from .transactions import Transaction

BLOCK_SIZE_RANGE = (50, 100)
BLOCK_INTERVAL_RANGE = (5_000, 10_000)


@dataclass(frozen=True)
class PipelineConfig:
    block_size: int = 100
    block_interval: int = 5_000  # virtual ms
    theta: int = 3
    online_learning: bool = True
    l_edge: int = 2  # virtual ms per tx
    l_ai: int = 5
    max_retries: int = 1
    allow_out_of_range: bool = False  # permit block size/interval outside the reference ranges

    def __post_init__(self):
        if self.block_size < 1 or self.block_interval <= 0:
            raise ConfigError("block_size and block_interval must be positive")
        if self.l_edge < 0 or self.l_ai < 0 or self.max_retries < 0:
            raise ConfigError("costs and retry count must be non-negative")
        if self.theta < 1:
            raise ConfigError("theta must be at least 1")
        if not self.allow_out_of_range:
            lo, hi = BLOCK_SIZE_RANGE
            if not lo <= self.block_size <= hi:
                raise ConfigError(f"block_size {self.block_size} outside {lo}..{hi} "
                                  "(set allow_out_of_range to override)")
            lo, hi = BLOCK_INTERVAL_RANGE
            if not lo <= self.block_interval <= hi:
                raise ConfigError(f"block_interval {self.block_interval} outside {lo}..{hi} ms "
                                  "(set allow_out_of_range to override)")


@dataclass
class TxLifecycle:
    tx_id: int
    label: Optional[int]
    t_submitted: int
    t_assessed: int
    decision: Decision
    r: float
    status: str = "pending"  # confirmed | rejected | failed
    t_confirmed: Optional[int] = None
    block_index: Optional[int] = None
    retries: int = 0

    CSV_FIELDS = ("tx_id", "label", "decision", "status", "r", "t_submitted", "t_assessed",
                  "t_confirmed", "block_index", "retries")

    def row(self) -> list:
        return [self.tx_id, "" if self.label is None else self.label, self.decision.value,
                self.status, repr(self.r), self.t_submitted, self.t_assessed,
                "" if self.t_confirmed is None else self.t_confirmed,
                "" if self.block_index is None else self.block_index, self.retries]


def read_lifecycles(path) -> list[TxLifecycle]:
    out = []
    with Path(path).open(newline="") as fh:
        for d in csv.DictReader(fh):
            out.append(TxLifecycle(
                tx_id=int(d["tx_id"]), label=int(d["label"]) if d["label"] else None,
                t_submitted=int(d["t_submitted"]), t_assessed=int(d["t_assessed"]),
                decision=Decision(d["decision"]), r=float(d["r"]), status=d["status"],
                t_confirmed=int(d["t_confirmed"]) if d["t_confirmed"] else None,
                block_index=int(d["block_index"]) if d["block_index"] else None,
                retries=int(d["retries"])))
    return out


# ----------------------------------------------------------------- incidents

@dataclass(frozen=True)
class IncidentRecord:
    index: int
    tx: Transaction
    assessment: RiskAssessment
    t_assessed: int
    prev_hash: bytes
    hash: bytes = b""

    def payload(self) -> bytes:
        a = self.assessment
        parts = [_U64.pack(self.index), encode_tx(self.tx)]
        for name in ("r_ml", "r_f", "r"):
            v = getattr(a, name)
            if v != v or v in (float("inf"), float("-inf")):
                raise NonFiniteError(f"incident {self.index} {name} is not finite")
            parts.append(_F64.pack(v))
        parts += [_str(a.decision.value), _I64.pack(self.t_assessed)]
        return b"".join(parts)

    def compute_hash(self) -> bytes:
        return chain_hash(self.payload(), self.prev_hash)


class IncidentLog:
    """Hash-chained, append-only record of rejected transactions."""

    def __init__(self):
        self.records: list[IncidentRecord] = []

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def tip_hash(self) -> bytes:
        return self.records[-1].hash if self.records else ZERO_HASH

    def append(self, tx: Transaction, assessment: RiskAssessment, t_assessed: int) -> IncidentRecord:
        rec = IncidentRecord(len(self.records), tx, assessment, t_assessed, self.tip_hash)
        rec = IncidentRecord(rec.index, tx, assessment, t_assessed, rec.prev_hash, rec.compute_hash())
        self.records.append(rec)
        return rec

    def verify(self) -> VerifyResult:
        prev = ZERO_HASH
        for i, rec in enumerate(self.records):
            if rec.index != i or rec.prev_hash != prev:
                return VerifyResult(False, i, "broken link")
            try:
                if rec.compute_hash() != rec.hash:
                    return VerifyResult(False, i, "hash mismatch")
            except NonFiniteError as exc:
                return VerifyResult(False, i, str(exc))
            prev = rec.hash
        return VerifyResult(True)

    def dump_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for r in self.records:
                d = {"schema_version": 1, "index": r.index, "prev_hash": r.prev_hash.hex(),
                     "hash": r.hash.hex(), "t_assessed": r.t_assessed, "tx": tx_to_dict(r.tx),
                     "label": r.tx.label, "assessment": r.assessment.to_dict()}
                fh.write(json.dumps(d, separators=(",", ":")) + "\n")
        return path


# ------------------------------------------------------------------ artifacts

@dataclass
class _Pending:
    tx: Transaction
    assessment: RiskAssessment
    t_assessed: int
    retries: int = 0


@dataclass
class RunArtifacts:
    ledger: Ledger
    incidents: IncidentLog
    lifecycles: list  # TxLifecycle in submission order
    events: EventLog
    engine: RiskEngine
    assessments: list
    failed: list  # tx_ids dropped after exhausting retries
    review: list  # Monitor-band (tx, assessment) pairs committed with a flag
    config: PipelineConfig
    wall_seconds: float = 0.0  # informational only, never part of deterministic outputs

    def counts(self) -> dict:
        c = {d.value: 0 for d in Decision}
        for lc in self.lifecycles:
            c[lc.decision.value] += 1
        return c

    def write(self, outdir) -> dict:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "ledger": self.ledger.dump_jsonl(out / "ledger.jsonl"),
            "incidents": self.incidents.dump_jsonl(out / "incidents.jsonl"),
            "events": self.events.dump_jsonl(out / "events.jsonl"),
        }
        self.ledger.registry.save(out / "validators.json")
        paths["validators"] = out / "validators.json"
        with (out / "lifecycles.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TxLifecycle.CSV_FIELDS)
            for lc in self.lifecycles:
                w.writerow(lc.row())
        paths["lifecycles"] = out / "lifecycles.csv"
        (out / "engine_state.json").write_text(json.dumps(self.engine.state_dict(), indent=2) + "\n")
        paths["engine_state"] = out / "engine_state.json"
        with (out / "review.jsonl").open("w") as fh:
            for tx, a in self.review:
                fh.write(json.dumps({"tx": tx_to_dict(tx), "assessment": a.to_dict()},
                                    separators=(",", ":")) + "\n")
        paths["review"] = out / "review.jsonl"
        with (out / "assessments.jsonl").open("w") as fh:
            for a in self.assessments:
                fh.write(json.dumps(a.to_dict(), separators=(",", ":")) + "\n")
        paths["assessments"] = out / "assessments.jsonl"
        return {k: str(v) for k, v in paths.items()}


def warm_start(engine: RiskEngine, prefix: Sequence[Transaction],
               epochs: Optional[int] = None) -> RiskEngine:
    """Train on a labeled prefix before live processing; empty prefix is a no-op."""
    return engine.warm_start(prefix, epochs)


def process_stream(stream: Iterable[Transaction], config: PipelineConfig, engine: RiskEngine,
                   network: NetworkModel) -> RunArtifacts:
    if config.theta > len(network):
        raise ConfigError(f"theta {config.theta} exceeds committee size {len(network)}")
    engine.online_learning = config.online_learning
    eta2 = engine.fusion.eta2
    txs = list(stream)
    ledger = Ledger(network.registry(config.theta), max_block_size=config.block_size)
    incidents = IncidentLog()
    events = EventLog()
    clock = _arrival_clock(txs)
    lifecycles: dict[int, TxLifecycle] = {}
    order: list[int] = []
    assessments: list[RiskAssessment] = []
    review: list = []
    failed: list[int] = []
    mempool: deque[_Pending] = deque()
    busy_until = 0
    work_left = len(txs)  # arrivals not yet in the mempool or incident log
    in_flight = False
    tick_alive = False
    tick_due = False
    tick_token = 0
    round_no = 0
    wall = 0.0

    def schedule_tick(now: int) -> None:
        nonlocal tick_token, tick_alive
        tick_token += 1
        tick_alive = True
        clock.schedule(now + config.block_interval, "tick", tick_token)

    def propose(now: int) -> None:
        nonlocal in_flight, tick_due, round_no
        tick_due = False
        batch = [mempool.popleft() for _ in range(min(config.block_size, len(mempool)))]
        tip = ledger.tip
        block = Block(index=tip.index + 1,
                      entries=tuple(BlockEntry(p.tx, p.assessment.r, p.t_assessed,
                                               p.assessment.decision is Decision.MONITOR)
                                    for p in batch),
                      prev_hash=tip.hash, created_at=now).sealed()
        leader = select_leader(network.nodes, round_no)
        round_no += 1
        events.record("propose", now, block=block.index, leader=leader.id, round=round_no - 1,
                      tx_ids=block.tx_ids, hash=block.hash.hex())
        vote = run_consensus(block, network, config.theta, eta2=eta2,
                             max_block_size=config.block_size, expected_prev_hash=tip.hash,
                             leader=leader, t_start=now)
        for vid, approve, t_vote in vote.votes:
            events.record("vote", t_vote, block=block.index, node=vid, approve=approve)
        in_flight = True
        kind = "commit" if vote.verdict else "discard"
        clock.schedule(vote.t_decided, kind, (block, vote, leader, batch))
        schedule_tick(now)

    def maybe_propose(now: int) -> None:
        if in_flight or not mempool:
            return
        if len(mempool) >= config.block_size or tick_due:
            propose(now)

    def round_finished(now: int) -> None:
        nonlocal in_flight, tick_due
        in_flight = False
        maybe_propose(now)
        if not in_flight and not tick_alive and (mempool or work_left):
            tick_due = False
            schedule_tick(now)

    schedule_tick(0)
    while clock:
        now, kind, payload = clock.pop()
        if kind == "arrival":
            tx = payload
            start = max(now, busy_until)
            t_assessed = start + config.l_edge + config.l_ai
            busy_until = t_assessed
            t0 = time.perf_counter()
            a = engine.assess(tx)
            wall += time.perf_counter() - t0
            assessments.append(a)
            lc = TxLifecycle(tx.tx_id, tx.label, now, t_assessed, a.decision, a.r)
            lifecycles[tx.tx_id] = lc
            order.append(tx.tx_id)
            if a.decision is Decision.REJECT:
                incidents.append(tx, a, t_assessed)
                lc.status = "rejected"
                work_left -= 1
            else:
                clock.schedule(t_assessed, "enqueue", _Pending(tx, a, t_assessed))
        elif kind == "enqueue":
            work_left -= 1
            mempool.append(payload)
            maybe_propose(now)
        elif kind == "tick":
            if payload != tick_token:
                continue  # superseded by a later proposal
            tick_alive = False
            if in_flight:
                tick_due = True  # handled when the round finishes
            elif mempool:
                tick_due = True
                maybe_propose(now)
            elif work_left:
                schedule_tick(now)
        elif kind == "commit":
            block, vote, leader, batch = payload
            block = block.with_signatures(vote.signatures)
            ledger.append(block)
            events.record("commit", now, block=block.index, approvals=vote.approvals,
                          theta=vote.theta, tx_ids=block.tx_ids)
            b = broadcast(block, network, now, leader)
            for node_id, t_recv in b.receive_times:
                events.record("receive", t_recv, block=block.index, node=node_id)
            events.record("broadcast", now, block=block.index, d_b=b.d_b,
                          t_broadcast=b.t_broadcast, t_final=now + b.d_b,
                          receive={n: t for n, t in b.receive_times})
            clock.schedule(now + b.d_b, "final", (block, batch))
        elif kind == "final":
            block, batch = payload
            for p in batch:
                lc = lifecycles[p.tx.tx_id]
                lc.status = "confirmed"
                lc.t_confirmed = now
                lc.block_index = block.index
                if p.assessment.decision is Decision.MONITOR:
                    review.append((p.tx, p.assessment))
            round_finished(now)
        elif kind == "discard":
            block, vote, leader, batch = payload
            events.record("discard", now, block=block.index, approvals=vote.approvals,
                          theta=vote.theta, tx_ids=block.tx_ids)
            returned = []
            for p in batch:
                p.retries += 1
                lifecycles[p.tx.tx_id].retries = p.retries
                if p.retries > config.max_retries:
                    lifecycles[p.tx.tx_id].status = "failed"
                    failed.append(p.tx.tx_id)
                else:
                    returned.append(p)
            mempool.extendleft(reversed(returned))
            round_finished(now)

    return RunArtifacts(ledger, incidents, [lifecycles[i] for i in order], events, engine,
                        assessments, failed, review, config, wall)


def _arrival_clock(txs: Sequence[Transaction]) -> SimClock:
    clock = SimClock()
    prev = None
    for tx in txs:
        if prev is not None and tx.timestamp < prev:
            raise ConfigError(f"stream is not time-ordered at tx {tx.tx_id}")
        prev = tx.timestamp
        clock.schedule(tx.timestamp, "arrival", tx)
    return clock
