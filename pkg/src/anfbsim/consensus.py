"""Proof-of-authority validator committee over a simulated latency network.

Time is virtual (integer milliseconds). A consensus round is computed in one
step from sampled latencies: the leader validates locally, every other node
receives the proposal after a link delay, validates, and returns its vote after
another link delay. The round is decided at the arrival of the vote that makes
the outcome certain.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .ledger import Block, ValidatorRegistry, compute_hash, sign_block


class FaultMode(str, enum.Enum):
    HONEST = "honest"
    ALWAYS_REJECT = "always_reject"
    RANDOM_VOTE = "random_vote"


def _check_bounds(bounds, what):
    lo, hi = bounds
    if not (0 < lo <= hi):
        raise ConfigError(f"{what} bounds must satisfy 0 < min <= max, got {bounds}")
    return (int(lo), int(hi))


@dataclass
class ValidatorNode:
    id: str
    secret: bytes
    validation_latency: tuple = (10, 30)
    fault: FaultMode = FaultMode.HONEST

    def __post_init__(self):
        self.validation_latency = _check_bounds(self.validation_latency, "validation latency")
        self.fault = FaultMode(self.fault)


def validator_secret(seed: int, index: int) -> bytes:
    return hashlib.sha256(f"anfbsim-validator:{seed}:{index}".encode()).digest()


class NetworkModel:
    """Fully connected committee; link latencies uniform over integer ms bounds."""

    def __init__(self, nodes: Sequence[ValidatorNode], link_latency=(10, 50),
                 rng: Optional[np.random.Generator] = None, seed: int = 0):
        if not nodes:
            raise ConfigError("network needs at least one node")
        self.nodes = list(nodes)
        self.link_latency = _check_bounds(link_latency, "link latency")
        self.rng = rng if rng is not None else network_rng(seed)

    @classmethod
    def build(cls, n_nodes: int = 5, seed: int = 0, link_latency=(10, 50),
              validation_latency=(10, 30), faults: Optional[dict] = None) -> "NetworkModel":
        faults = faults or {}
        nodes = [ValidatorNode(f"v{j}", validator_secret(seed, j), validation_latency,
                               faults.get(j, FaultMode.HONEST)) for j in range(n_nodes)]
        return cls(nodes, link_latency, network_rng(seed))

    def __len__(self):
        return len(self.nodes)

    def sample_link(self) -> int:
        lo, hi = self.link_latency
        return int(self.rng.integers(lo, hi + 1))

    def sample_validation(self, node: ValidatorNode) -> int:
        lo, hi = node.validation_latency
        return int(self.rng.integers(lo, hi + 1))

    def registry(self, quorum: int) -> ValidatorRegistry:
        return ValidatorRegistry({n.id: n.secret for n in self.nodes}, quorum)


def network_rng(seed: int) -> np.random.Generator:
    # separate stream from the data generator, derived from the same run seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x6E6574])))


class SimClock:
    """Virtual clock with a deterministic (time, sequence) ordered event queue."""

    def __init__(self, start: int = 0):
        self.now = start
        self._queue: list = []
        self._seq = 0

    def schedule(self, time: int, kind: str, payload: Any = None) -> int:
        if time < self.now:
            raise ValueError(f"cannot schedule {kind} at {time} before now={self.now}")
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, payload))
        return self._seq

    def pop(self) -> tuple[int, str, Any]:
        time, _, kind, payload = heapq.heappop(self._queue)
        self.now = time
        return time, kind, payload

    def peek_time(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def __len__(self):
        return len(self._queue)

    def __bool__(self):
        return bool(self._queue)


def select_leader(nodes: Sequence[ValidatorNode], round_no: int) -> ValidatorNode:
    if not nodes:
        raise ConfigError("no validators")
    return nodes[round_no % len(nodes)]


def validate(node: ValidatorNode, block: Block, expected_prev_hash: bytes, *, eta2: float,
             max_block_size: int, rng: Optional[np.random.Generator] = None) -> bool:
    """A node's vote on ``block``; honest nodes re-check hash, link, size and risk gate."""
    if node.fault is FaultMode.ALWAYS_REJECT:
        return False
    if node.fault is FaultMode.RANDOM_VOTE:
        if rng is None:
            raise ValueError("random_vote nodes need an rng")
        return bool(rng.random() < 0.5)
    if block.prev_hash != expected_prev_hash:
        return False
    if not 1 <= len(block.entries) <= max_block_size:
        return False
    if any(not (e.risk < eta2) for e in block.entries):
        return False
    try:
        return compute_hash(block) == block.hash
    except (ValueError, struct.error):
        return False


def quorum_reached(votes: Iterable[bool], theta: int) -> bool:
    return sum(1 for v in votes if v) >= theta


@dataclass(frozen=True)
class VoteRecord:
    block_index: int
    leader: str
    votes: tuple  # ((node_id, approve, vote_arrival_time), ...) in node order
    approvals: int
    theta: int
    verdict: bool
    t_start: int
    t_decided: int
    signatures: tuple  # ((node_id, signature), ...) from approving nodes


def run_consensus(block: Block, network: NetworkModel, theta: int, *, eta2: float,
                  max_block_size: int, expected_prev_hash: Optional[bytes] = None,
                  leader: Optional[ValidatorNode] = None, t_start: int = 0) -> VoteRecord:
    n = len(network)
    if theta < 1 or theta > n:
        raise ConfigError(f"theta must lie in 1..{n}, got {theta}")
    leader = leader or network.nodes[0]
    expected = block.prev_hash if expected_prev_hash is None else expected_prev_hash
    votes = []
    for node in network.nodes:
        if node is leader:
            delivered = t_start
            back = 0
        else:
            delivered = t_start + network.sample_link()
        voted = delivered + network.sample_validation(node)
        approve = validate(node, block, expected, eta2=eta2, max_block_size=max_block_size,
                           rng=network.rng)
        if node is not leader:
            back = network.sample_link()
        votes.append((node.id, approve, voted + back))
    approvals = sum(1 for _, a, _ in votes if a)
    verdict = approvals >= theta
    # decided when the theta-th approval (or the fatal rejection) arrives
    arrivals = sorted((t, i) for i, (_, _, t) in enumerate(votes))
    yes = no = 0
    t_decided = arrivals[-1][0]
    for t, i in arrivals:
        if votes[i][1]:
            yes += 1
        else:
            no += 1
        if (verdict and yes >= theta) or (not verdict and no > n - theta):
            t_decided = t
            break
    secrets = {nd.id: nd.secret for nd in network.nodes}
    sigs = tuple((vid, sign_block(secrets[vid], block.hash)) for vid, a, _ in votes if a)
    return VoteRecord(block.index, leader.id, tuple(votes), approvals, theta, verdict,
                      t_start, t_decided, sigs)


@dataclass(frozen=True)
class BroadcastRecord:
    block_index: int
    t_broadcast: int
    receive_times: tuple  # ((node_id, t_receive), ...) for every non-leader node
    d_b: int


def broadcast(block: Block, network: NetworkModel, t_broadcast: int,
              leader: Optional[ValidatorNode] = None,
              latencies: Optional[Sequence[int]] = None) -> BroadcastRecord:
    """Send a committed block from ``leader`` to every other node.

    ``latencies`` overrides sampling (one value per receiving node).
    """
    leader = leader or network.nodes[0]
    others = [nd for nd in network.nodes if nd is not leader]
    if latencies is None:
        latencies = [network.sample_link() for _ in others]
    if len(latencies) != len(others):
        raise ValueError("one latency per receiving node is required")
    receive = tuple((nd.id, t_broadcast + int(lat)) for nd, lat in zip(others, latencies))
    d_b = max((t for _, t in receive), default=t_broadcast) - t_broadcast
    return BroadcastRecord(block.index, t_broadcast, receive, d_b)


class EventLog:
    """Ordered record of propose / vote / commit / discard / broadcast events."""

    def __init__(self):
        self.events: list[dict] = []

    def record(self, kind: str, t: int, **fields) -> None:
        self.events.append({"seq": len(self.events), "t": t, "event": kind, **fields})

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["event"] == kind]

    def dump_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for e in self.events:
                fh.write(json.dumps(e, separators=(",", ":")) + "\n")
        return path

    @classmethod
    def load_jsonl(cls, path) -> "EventLog":
        log = cls()
        with Path(path).open() as fh:
            log.events = [json.loads(line) for line in fh if line.strip()]
        return log


def consensus_floor_ms(n_nodes: int, theta: int, link_latency=(10, 50),
                       validation_latency=(10, 30)) -> int:
    """Smallest possible propose-to-finalized time for one block."""
    link_min, val_min = link_latency[0], validation_latency[0]
    decide = val_min if theta <= 1 else 2 * link_min + val_min
    propagate = link_min if n_nodes > 1 else 0
    return decide + propagate
