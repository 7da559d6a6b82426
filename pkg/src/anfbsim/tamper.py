"""Single-bit tampering of exported blocks, for demonstrating tamper evidence.

Every mutation is an involution: applying the same (field, entry, bit) twice
restores the original value. Mutations act on the JSON form of a block.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from .errors import ConfigError

BLOCK_FIELDS = {"index": "int", "created_at": "int", "prev_hash": "hex", "hash": "hex",
                "signature": "sig"}
ENTRY_FIELDS = {"tx_id": "int", "sender": "str", "receiver": "str", "amount": "float",
                "timestamp": "int", "region": "int", "lat": "float", "lon": "float",
                "device": "str", "risk": "float", "assessed_at": "int", "flagged": "bool"}
FIELDS = tuple(BLOCK_FIELDS) + tuple(ENTRY_FIELDS)


def flip_float(value: float, bit: int) -> float:
    (raw,) = struct.unpack(">Q", struct.pack(">d", value))
    (out,) = struct.unpack(">d", struct.pack(">Q", raw ^ (1 << (bit % 64))))
    return out


def flip_int(value: int, bit: int) -> int:
    return value ^ (1 << (bit % 62))


def flip_str(value: str, bit: int) -> str:
    if not value:
        raise ConfigError("cannot flip a bit of an empty string")
    chars = list(value)
    i = (bit // 7) % len(chars)
    chars[i] = chr(ord(chars[i]) ^ (1 << (bit % 7)))  # stays within the same 7-bit range
    return "".join(chars)


def flip_hex(value: str, bit: int) -> str:
    raw = bytearray(bytes.fromhex(value))
    b = bit % (8 * len(raw))
    raw[b // 8] ^= 1 << (b % 8)
    return raw.hex()


def tamper_block_dict(d: dict, field: str, entry: int = 0, bit: int = 0) -> dict:
    """Return a copy of block dict ``d`` with one bit of ``field`` flipped."""
    d = json.loads(json.dumps(d))
    if field in BLOCK_FIELDS:
        kind = BLOCK_FIELDS[field]
        if kind == "int":
            d[field] = flip_int(d[field], bit)
        elif kind == "hex":
            d[field] = flip_hex(d[field], bit)
        else:
            if not d["signatures"]:
                raise ConfigError("block has no signatures to tamper with")
            s = d["signatures"][entry % len(d["signatures"])]
            s["signature"] = flip_hex(s["signature"], bit)
        return d
    if field not in ENTRY_FIELDS:
        raise ConfigError(f"unknown field {field!r}; choose from {', '.join(FIELDS)}")
    if not d["entries"]:
        raise ConfigError(f"block {d['index']} has no entries; use a block-level field "
                          f"({', '.join(BLOCK_FIELDS)})")
    if not 0 <= entry < len(d["entries"]):
        raise ConfigError(f"entry {entry} out of range 0..{len(d['entries']) - 1}")
    e = d["entries"][entry]
    kind = ENTRY_FIELDS[field]
    if e.get(field) is None:
        raise ConfigError(f"field {field!r} is absent in entry {entry}")
    if kind == "float":
        e[field] = flip_float(e[field], bit)
    elif kind == "int":
        e[field] = flip_int(e[field], bit)
    elif kind == "str":
        e[field] = flip_str(e[field], bit)
    else:
        e[field] = not e[field]
    return d


def tamper_file(src, dst, block: int, field: str, entry: int = 0, bit: int = 0) -> Path:
    """Write a copy of ledger export ``src`` to ``dst`` with one block mutated.

    ``block`` is the position of the block in the export (genesis = 0). Other
    lines are copied byte for byte; ``src`` is never modified.
    """
    src, dst = Path(src), Path(dst)
    if src.resolve() == dst.resolve():
        raise ConfigError("refusing to overwrite the input ledger; choose another --out")
    lines = src.read_text().splitlines(keepends=True)
    records = [i for i, ln in enumerate(lines) if ln.strip()]
    if not 0 <= block < len(records):
        raise ConfigError(f"block {block} out of range 0..{len(records) - 1}")
    pos = records[block]
    d = tamper_block_dict(json.loads(lines[pos]), field, entry, bit)
    lines[pos] = json.dumps(d, separators=(",", ":")) + "\n"
    dst.write_text("".join(lines))
    return dst
