"""Hash-chained block ledger with simulated validator signatures.

Canonical block encoding (all integers big-endian)::

    u64 index | i64 created_at | 32B prev_hash | u32 n_entries | entry*

    entry := u64 tx_id | str sender | str receiver | f64 amount | i64 timestamp
             | i32 region | u8 has_coords [f64 lat, f64 lon] | str device
             | f64 risk | i64 assessed_at | u8 flagged
    str   := u32 byte_length | UTF-8 bytes
    f64   := IEEE-754 binary64 bit pattern

A block hash is ``SHA-256(encode(block) || prev_hash)``; a validator signature is
``SHA-256(secret || hash)``. Ground-truth labels and derived behaviour are not
part of the on-chain record.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import AuthorizationError, ChainError, NonFiniteError, SchemaError
from .transactions import Transaction

HASH_LEN = 32
ZERO_HASH = bytes(HASH_LEN)
LEDGER_SCHEMA_VERSION = 1

_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_I32 = struct.Struct(">i")
_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def chain_hash(payload: bytes, prev_hash: bytes) -> bytes:
    return sha256(payload + prev_hash)


def _f64(value: float, what: str) -> bytes:
    if not math.isfinite(value):
        raise NonFiniteError(f"{what} is not finite")
    return _F64.pack(value)


def _str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def encode_tx(tx: Transaction) -> bytes:
    parts = [_U64.pack(tx.tx_id), _str(tx.sender), _str(tx.receiver),
             _f64(tx.amount, f"tx {tx.tx_id} amount"), _I64.pack(tx.timestamp),
             _I32.pack(tx.region)]
    if tx.has_coords:
        parts += [b"\x01", _f64(tx.lat, f"tx {tx.tx_id} lat"), _f64(tx.lon, f"tx {tx.tx_id} lon")]
    else:
        parts.append(b"\x00")
    parts.append(_str(tx.device))
    return b"".join(parts)


@dataclass(frozen=True)
class BlockEntry:
    tx: Transaction
    risk: float
    assessed_at: int
    flagged: bool = False  # Monitor-band transaction

    def encode(self) -> bytes:
        return b"".join((encode_tx(self.tx), _f64(self.risk, f"tx {self.tx.tx_id} risk"),
                         _I64.pack(self.assessed_at), b"\x01" if self.flagged else b"\x00"))


@dataclass(frozen=True)
class Block:
    index: int
    entries: tuple
    prev_hash: bytes
    created_at: int
    hash: bytes = b""
    signatures: tuple = ()  # ((validator_id, signature), ...)

    def sealed(self) -> "Block":
        return replace(self, hash=compute_hash(self))

    def with_signatures(self, signatures: Iterable[tuple[str, bytes]]) -> "Block":
        return replace(self, signatures=tuple(signatures))

    @property
    def tx_ids(self) -> list[int]:
        return [e.tx.tx_id for e in self.entries]


def serialize_block(block: Block) -> bytes:
    """Canonical bytes of everything except ``hash`` and ``signatures``."""
    if len(block.prev_hash) != HASH_LEN:
        raise ValueError("prev_hash must be 32 bytes")
    head = b"".join((_U64.pack(block.index), _I64.pack(block.created_at), block.prev_hash,
                     _U32.pack(len(block.entries))))
    return head + b"".join(e.encode() for e in block.entries)


def compute_hash(block: Block) -> bytes:
    return chain_hash(serialize_block(block), block.prev_hash)


def sign_block(secret: bytes, block_hash: bytes) -> bytes:
    return sha256(secret + block_hash)


def verify_signature(secret: bytes, block_hash: bytes, signature: bytes) -> bool:
    return hmac.compare_digest(sign_block(secret, block_hash), signature)


def genesis_block() -> Block:
    return Block(index=0, entries=(), prev_hash=ZERO_HASH, created_at=0).sealed()


@dataclass
class ValidatorRegistry:
    """Registered validator secrets and the signature quorum a block needs."""

    secrets: dict  # validator id -> secret bytes
    quorum: int

    def valid_signers(self, block: Block) -> set:
        signers = set()
        for vid, sig in block.signatures:
            secret = self.secrets.get(vid)
            if secret is not None and verify_signature(secret, block.hash, sig):
                signers.add(vid)
        return signers

    def authorized(self, block: Block) -> bool:
        # every attached signature must verify; a corrupted one is evidence of tampering
        signers = self.valid_signers(block)
        return len(signers) >= self.quorum and len(signers) == len(block.signatures)

    def to_dict(self) -> dict:
        return {"schema_version": LEDGER_SCHEMA_VERSION, "quorum": self.quorum,
                "validators": [{"id": k, "secret": v.hex()} for k, v in self.secrets.items()]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ValidatorRegistry":
        return cls({v["id"]: bytes.fromhex(v["secret"]) for v in d["validators"]}, int(d["quorum"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ValidatorRegistry":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_invalid: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.ok


class Ledger:
    """Append-only chain starting at a fixed genesis block."""

    def __init__(self, registry: ValidatorRegistry, max_block_size: int = 100,
                 blocks: Optional[Sequence[Block]] = None):
        self.registry = registry
        self.max_block_size = max_block_size
        self.blocks: list[Block] = list(blocks) if blocks is not None else [genesis_block()]

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append(self, block: Block) -> "Ledger":
        tip = self.tip
        if block.index != tip.index + 1:
            raise ChainError(f"block index {block.index} does not follow tip {tip.index}")
        if block.prev_hash != tip.hash:
            raise ChainError(f"block {block.index} prev_hash does not match tip hash")
        if not 1 <= len(block.entries) <= self.max_block_size:
            raise ChainError(f"block {block.index} has {len(block.entries)} entries, "
                             f"allowed 1..{self.max_block_size}")
        if block.hash != compute_hash(block):
            raise ChainError(f"block {block.index} hash does not match its contents")
        if not self.registry.authorized(block):
            raise AuthorizationError(f"block {block.index} needs {self.registry.quorum} signatures "
                                     "and every attached signature must verify")
        self.blocks.append(block)
        return self

    def verify(self) -> VerifyResult:
        return verify_chain(self)

    def snapshot(self) -> "Ledger":
        return Ledger(self.registry, self.max_block_size, list(self.blocks))

    # --------------------------------------------------------- JSON Lines

    def dump_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for b in self.blocks:
                fh.write(json.dumps(block_to_dict(b), separators=(",", ":")) + "\n")
        return path

    @classmethod
    def load_jsonl(cls, path, registry: ValidatorRegistry, max_block_size: int = 100) -> "Ledger":
        """Parse an export. Structural problems raise :class:`SchemaError`;
        integrity is left to :func:`verify_chain` so tampered files still load."""
        blocks = []
        with Path(path).open() as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    blocks.append(block_from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise SchemaError(f"bad block record: {exc}", line=lineno) from None
        if not blocks:
            raise SchemaError("ledger export contains no blocks")
        return cls(registry, max_block_size, blocks)


def append_block(ledger: Ledger, block: Block) -> Ledger:
    return ledger.append(block)


def verify_chain(ledger: Ledger) -> VerifyResult:
    """Recompute every hash, link and signature set; report the first bad block."""
    prev: Optional[Block] = None
    for i, b in enumerate(ledger.blocks):
        if b.index != i:
            return VerifyResult(False, i, f"index {b.index} at position {i}")
        try:
            recomputed = compute_hash(b)
        except (NonFiniteError, ValueError, struct.error) as exc:
            return VerifyResult(False, i, f"unserializable block: {exc}")
        if recomputed != b.hash:
            return VerifyResult(False, i, "hash mismatch")
        if prev is None:
            if b.prev_hash != ZERO_HASH or b.entries:
                return VerifyResult(False, i, "malformed genesis block")
        else:
            if b.prev_hash != prev.hash:
                return VerifyResult(False, i, "prev_hash does not link to previous block")
            if not ledger.registry.authorized(b):
                return VerifyResult(False, i, "invalid or insufficient signatures")
        prev = b
    return VerifyResult(True)


# ------------------------------------------------------------- dict codec

def tx_to_dict(tx: Transaction) -> dict:
    return {"tx_id": tx.tx_id, "sender": tx.sender, "receiver": tx.receiver,
            "amount": tx.amount, "timestamp": tx.timestamp, "region": tx.region,
            "lat": tx.lat, "lon": tx.lon, "device": tx.device}


def tx_from_dict(d: Mapping) -> Transaction:
    return Transaction(tx_id=int(d["tx_id"]), sender=str(d["sender"]), receiver=str(d["receiver"]),
                       amount=float(d["amount"]), timestamp=int(d["timestamp"]),
                       region=int(d["region"]),
                       lat=None if d["lat"] is None else float(d["lat"]),
                       lon=None if d["lon"] is None else float(d["lon"]),
                       device=str(d["device"]))


def block_to_dict(b: Block) -> dict:
    return {
        "schema_version": LEDGER_SCHEMA_VERSION,
        "index": b.index,
        "created_at": b.created_at,
        "prev_hash": b.prev_hash.hex(),
        "hash": b.hash.hex(),
        "entries": [dict(tx_to_dict(e.tx), risk=e.risk, assessed_at=e.assessed_at,
                         flagged=e.flagged) for e in b.entries],
        "signatures": [{"validator": v, "signature": s.hex()} for v, s in b.signatures],
    }


def _hex32(value: str, what: str) -> bytes:
    raw = bytes.fromhex(value)
    if len(raw) != HASH_LEN:
        raise ValueError(f"{what} must be 32 bytes")
    return raw


def block_from_dict(d: Mapping) -> Block:
    if d.get("schema_version") != LEDGER_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
    entries = tuple(BlockEntry(tx_from_dict(e), float(e["risk"]), int(e["assessed_at"]),
                               bool(e["flagged"])) for e in d["entries"])
    return Block(index=int(d["index"]), entries=entries,
                 prev_hash=_hex32(d["prev_hash"], "prev_hash"), created_at=int(d["created_at"]),
                 hash=_hex32(d["hash"], "hash"),
                 signatures=tuple((str(s["validator"]), bytes.fromhex(s["signature"]))
                                  for s in d["signatures"]))
