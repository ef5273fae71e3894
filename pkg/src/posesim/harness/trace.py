"""Trace records: JSON lines with a running hash chain.

Each record carries ``h = sha256(prev_h || canonical json without h)``.  The
last record is ``{"ev": "end"}``; a file without it is truncated.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from ..errors import MalformedTrace

GENESIS = "00" * 32


def _canonical(rec: dict) -> bytes:
    return json.dumps(rec, sort_keys=True, separators=(",", ":")).encode()


def _link(prev: str, rec: dict) -> str:
    return hashlib.sha256(bytes.fromhex(prev) + _canonical(rec)).hexdigest()


class TraceWriter:
    def __init__(self):
        self.records: list[dict] = []
        self._head = GENESIS
        self.closed = False

    def emit(self, t: int, ev: str, **fields) -> dict:
        if self.closed:
            raise RuntimeError("trace already closed")
        rec = {"i": len(self.records), "t": t, "ev": ev, **fields}
        rec["h"] = _link(self._head, rec)
        self._head = rec["h"]
        self.records.append(rec)
        return rec

    def close(self, t: int) -> None:
        self.emit(t, "end", events=len(self.records))
        self.closed = True

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


def parse_trace(text: str) -> list[dict]:
    """Parse JSON lines; raises MalformedTrace on syntax errors or truncation."""
    records = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"line {n}: {exc}") from None
        if not isinstance(rec, dict) or "ev" not in rec or "h" not in rec:
            raise MalformedTrace(f"line {n}: not a trace record")
        records.append(rec)
    if not records or records[-1]["ev"] != "end":
        raise MalformedTrace("trace has no end record (truncated?)")
    return records


def read_trace(path) -> list[dict]:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedTrace(str(exc)) from None
    return parse_trace(text)


def chain_errors(records: list[dict]) -> list[str]:
    """Hash-chain and index breaks; empty when the trace is intact."""
    errors = []
    prev = GENESIS
    for k, rec in enumerate(records):
        body = {key: v for key, v in rec.items() if key != "h"}
        if rec.get("i") != k:
            errors.append(f"record {k}: index {rec.get('i')}")
        if _link(prev, body) != rec["h"]:
            errors.append(f"record {k}: hash chain broken")
            break
        prev = rec["h"]
    return errors
