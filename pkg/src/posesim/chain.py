"""Simulated blockchain with bounded inclusion delay and finality depth.

Blocks carry a state root committing to the manager's incremental
relevant-transaction hash (one Merkle leaf) and a digest of the rest of the
manager state (the other leaf).  Light clients check completeness of the
transactions an operator hands them by re-folding the incremental hash and
proving it against the header.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .crypto import ZERO_DIGEST, PartyId, hash_bytes, hash_value
from .encoding import encode
from .errors import NotFinal, OutOfRange, TimestampRegression

VALUE_BYTES = 32


@dataclass(frozen=True)
class BlockHeader:
    number: int
    parent: bytes
    timestamp: int
    state_root: bytes
    tx_root: bytes

    def __encode__(self):
        return b"H", (self.number, self.parent, self.timestamp, self.state_root, self.tx_root)

    def digest(self) -> bytes:
        return hash_value(self)

    def to_json(self) -> dict:
        return {
            "number": self.number,
            "parent": self.parent.hex(),
            "timestamp": self.timestamp,
            "state_root": self.state_root.hex(),
            "tx_root": self.tx_root.hex(),
        }


@dataclass(frozen=True)
class RelevantTx:
    """A manager call as it appears on chain.

    ``data`` is the raw call bytes (canonical encoding of ``call``), so a
    light client holding the object can recompute it.
    """

    call: object
    sender: PartyId
    value: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("transaction value must be non-negative")

    @property
    def data(self) -> bytes:
        return encode(self.call)

    @property
    def method(self) -> str:
        return getattr(self.call, "method", "?")


def incr_hash_update(prev: bytes, tx: RelevantTx) -> bytes:
    """``H(prev || tx.data || tx.sender || tx.value)`` with a 32-byte value field."""
    return hash_bytes(prev + tx.data + tx.sender.ident + tx.value.to_bytes(VALUE_BYTES, "big"))


def fold_incr_hash(prev: bytes, txs: Iterable[RelevantTx]) -> bytes:
    for tx in txs:
        prev = incr_hash_update(prev, tx)
    return prev


def _leaf(x: bytes) -> bytes:
    return hash_bytes(b"\x00" + x)


def _node(left: bytes, right: bytes) -> bytes:
    return hash_bytes(b"\x01" + left + right)


def state_root(incr_tx_hash: bytes, rest_digest: bytes) -> bytes:
    return _node(_leaf(incr_tx_hash), _leaf(rest_digest))


@dataclass(frozen=True)
class StateProof:
    leaf: bytes
    path: tuple  # ((sibling, "L" | "R"), ...)
    root: bytes

    def fold(self) -> bytes:
        acc = _leaf(self.leaf)
        for sibling, side in self.path:
            acc = _node(acc, sibling) if side == "R" else _node(sibling, acc)
        return acc


def verify_state_proof(proof: StateProof, header: BlockHeader) -> bool:
    return proof.root == header.state_root and proof.fold() == header.state_root


@dataclass
class Receipt:
    tx: RelevantTx
    accepted: bool
    result: object = None
    reason: str = ""
    seq: int = 0


@dataclass
class Block:
    header: BlockHeader
    receipts: list = field(default_factory=list)
    incr_tx_hash: bytes = ZERO_DIGEST
    rest_digest: bytes = ZERO_DIGEST

    @property
    def relevant(self) -> list:
        return [r.tx for r in self.receipts if r.accepted]


@dataclass(frozen=True)
class Ticket:
    seq: int
    submitted_at: int
    target: int


# processor(tx, height) -> (accepted, result, reason)
Processor = Callable[[RelevantTx, int], tuple]


class Chain:
    """Append-only honest chain driven by a single writer (the scheduler)."""

    def __init__(self, gamma: int = 15, alpha: int = 20, tau: int = 15,
                 processor: Processor | None = None,
                 rest_digest: Callable[[], bytes] | None = None,
                 genesis_time: int = 0):
        if gamma < 0 or alpha < 1 or tau <= 0:
            raise ValueError("need gamma >= 0, alpha >= 1, tau > 0")
        self.gamma = gamma
        self.alpha = alpha
        self.tau = tau
        self._processor = processor
        self._rest = rest_digest or (lambda: ZERO_DIGEST)
        self._pending: list = []  # (target, seq, tx)
        self._seq = 0
        self.incr_tx_hash = ZERO_DIGEST
        rest = self._rest()
        header = BlockHeader(0, ZERO_DIGEST, genesis_time, state_root(ZERO_DIGEST, rest),
                             hash_value(()))
        self.blocks: list[Block] = [Block(header, [], ZERO_DIGEST, rest)]

    # -- queries -----------------------------------------------------------
    @property
    def tip(self) -> int:
        return len(self.blocks) - 1

    @property
    def latest(self) -> BlockHeader:
        return self.blocks[-1].header

    def header(self, number: int) -> BlockHeader:
        if not 0 <= number <= self.tip:
            raise OutOfRange(f"no block {number} (tip {self.tip})")
        return self.blocks[number].header

    def block(self, number: int) -> Block:
        if not 0 <= number <= self.tip:
            raise OutOfRange(f"no block {number} (tip {self.tip})")
        return self.blocks[number]

    def finalized_height(self) -> int:
        return max(self.tip - self.gamma, 0)

    def is_final(self, number: int) -> bool:
        return number <= self.tip - self.gamma

    def header_range(self, start: int, stop: int) -> list[BlockHeader]:
        """Headers ``start..stop`` inclusive; ``start = stop + 1`` gives an empty range."""
        if start < 0 or stop > self.tip or start > stop + 1:
            raise OutOfRange(f"bad range {start}..{stop} (tip {self.tip})")
        return [b.header for b in self.blocks[start:stop + 1]]

    def relevant_txs(self, start: int, stop: int) -> list[tuple[int, RelevantTx]]:
        """Accepted transactions of blocks ``start..stop`` with their heights."""
        out = []
        for n in range(max(start, 0), min(stop, self.tip) + 1):
            out.extend((n, tx) for tx in self.blocks[n].relevant)
        return out

    def incr_hash_at(self, number: int) -> bytes:
        return self.block(number).incr_tx_hash

    @property
    def pending(self) -> list:
        return [tx for _, _, tx in sorted(self._pending, key=lambda p: (p[0], p[1]))]

    # -- mutation ----------------------------------------------------------
    def submit_tx(self, tx: RelevantTx, delay: int = 1) -> Ticket:
        """Queue ``tx`` for inclusion ``delay`` blocks from now (1 <= delay <= alpha)."""
        if not 1 <= delay <= self.alpha:
            raise ValueError(f"inclusion delay {delay} outside [1, {self.alpha}]")
        self._seq += 1
        target = self.tip + delay
        self._pending.append((target, self._seq, tx))
        return Ticket(self._seq, self.tip, target)

    def mine_block(self, timestamp_delta: int | None = None) -> BlockHeader:
        if timestamp_delta is None:
            timestamp_delta = self.tau
        if timestamp_delta <= 0:
            raise TimestampRegression(f"timestamp delta {timestamp_delta} <= 0")
        number = self.tip + 1
        due = sorted((p for p in self._pending if p[0] <= number), key=lambda p: (p[0], p[1]))
        self._pending = [p for p in self._pending if p[0] > number]
        receipts = []
        incr = self.incr_tx_hash
        for _, seq, tx in due:
            if self._processor is None:
                accepted, result, reason = True, None, ""
            else:
                accepted, result, reason = self._processor(tx, number)
            if accepted:
                incr = incr_hash_update(incr, tx)
            receipts.append(Receipt(tx, accepted, result, reason, seq))
        self.incr_tx_hash = incr
        rest = self._rest()
        header = BlockHeader(
            number,
            self.latest.digest(),
            self.latest.timestamp + timestamp_delta,
            state_root(incr, rest),
            hash_value([r.tx.data for r in receipts]),
        )
        self.blocks.append(Block(header, receipts, incr, rest))
        return header

    # -- light-client support ----------------------------------------------
    def prove_incr_hash(self, at_height: int) -> StateProof:
        if not self.is_final(at_height):
            raise NotFinal(f"block {at_height} is not final (tip {self.tip}, gamma {self.gamma})")
        blk = self.block(at_height)
        return StateProof(blk.incr_tx_hash, ((_leaf(blk.rest_digest), "R"),), blk.header.state_root)

    def fork(self, at_height: int) -> "SideChain":
        """An attacker-controlled copy of the prefix ending at ``at_height``."""
        return SideChain(self, at_height)

    def export_jsonl(self) -> str:
        lines = []
        for blk in self.blocks:
            rec = blk.header.to_json()
            rec["parent"] = blk.header.parent.hex()
            rec["txs"] = [
                {"method": r.tx.method, "sender": r.tx.sender.ident.hex(), "value": r.tx.value,
                 "accepted": r.accepted, "data": hash_bytes(r.tx.data).hex()}
                for r in blk.receipts
            ]
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + "\n"


class SideChain:
    """Headers extending an honest prefix, produced at an attacker-chosen pace.

    Side blocks carry no transactions, so their state roots repeat the fork
    point's root.
    """

    def __init__(self, base: Chain, at_height: int):
        self.base_height = at_height
        self.gamma = base.gamma
        self.headers = [b.header for b in base.blocks[: at_height + 1]]
        self.blocks = [Block(b.header, [], b.incr_tx_hash, b.rest_digest)
                       for b in base.blocks[: at_height + 1]]

    @property
    def tip(self) -> int:
        return len(self.headers) - 1

    def mine_block(self, timestamp: int) -> BlockHeader:
        prev = self.headers[-1]
        if timestamp <= prev.timestamp:
            raise TimestampRegression("side block timestamp must increase")
        header = BlockHeader(prev.number + 1, prev.digest(), timestamp, prev.state_root,
                             hash_value(()))
        self.headers.append(header)
        base = self.blocks[-1]
        self.blocks.append(Block(header, [], base.incr_tx_hash, base.rest_digest))
        return header

    def header_range(self, start: int, stop: int) -> list[BlockHeader]:
        if start < 0 or stop > self.tip or start > stop + 1:
            raise OutOfRange(f"bad range {start}..{stop} (tip {self.tip})")
        return self.headers[start:stop + 1]

    def relevant_txs(self, start: int, stop: int) -> list:
        return []

    def prove_incr_hash(self, at_height: int) -> StateProof:
        blk = self.blocks[at_height]
        return StateProof(blk.incr_tx_hash, ((_leaf(blk.rest_digest), "R"),), blk.header.state_root)
