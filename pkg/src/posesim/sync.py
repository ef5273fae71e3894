"""Enclave-side light client.

The view keeps the last few headers, the final height, the folded
incremental transaction hash at that height and a manager mirror rebuilt
from the final relevant transactions.  Feeds are checked for linkage,
finality, staleness, delivery rate and transaction completeness before any
state changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chain import BlockHeader, StateProof, incr_hash_update, verify_state_proof
from .crypto import ZERO_DIGEST
from .errors import BrokenChain, ForkTooDeep, IncompleteTxData, RateViolation, StaleHeaders
from .manager import Manager
from .timeouts import ChainParams, Timeouts


@dataclass
class SyncFeed:
    headers: list                                   # linked headers, may start below our tip
    txs: list = field(default_factory=list)         # [(height, RelevantTx)] for newly final heights
    proofs: dict = field(default_factory=dict)      # height -> StateProof, each newly final height


def _linked(headers) -> bool:
    for a, b in zip(headers, headers[1:]):
        if b.number != a.number + 1 or b.parent != a.digest() or b.timestamp <= a.timestamp:
            return False
    return True


class SyncedView:
    def __init__(self, params: ChainParams, timeouts: Timeouts | None = None):
        self.params = params
        self.headers: dict[int, BlockHeader] = {}
        self.arrival: dict[int, int] = {}
        self.tip = -1
        self.final_height = -1
        self.final_incr = ZERO_DIGEST
        self.mirror = Manager(None, params, timeouts)
        self.cid_txs: dict[int, list] = {}      # cid -> [(height, tx)] deposits and payouts
        self.checkpoint: BlockHeader | None = None
        self._offset = 0
        self._anchor = (0, 0)
        self.halted = False
        self.violations = 0

    # -- clock -----------------------------------------------------------------
    def clock(self, now: int) -> int:
        return now + self._offset

    @property
    def latest(self) -> BlockHeader | None:
        return self.headers.get(self.tip)

    def stale(self, now: int) -> bool:
        return self.latest is None or self.clock(now) - self.latest.timestamp > self.params.tau_variance

    # -- initialization -----------------------------------------------------------
    def init_sync(self, headers: list, txs: list, proof: StateProof, now: int) -> BlockHeader:
        """Start from ``gamma + 1`` headers; ``txs`` are all relevant txs up to the first."""
        gamma = self.params.gamma
        if len(headers) != gamma + 1 or not _linked(headers):
            raise BrokenChain("need gamma+1 linked headers")
        cp = headers[0]
        incr = ZERO_DIGEST
        for height, tx in txs:
            if height > cp.number:
                raise IncompleteTxData("transaction above checkpoint")
            incr = incr_hash_update(incr, tx)
        if proof is None or proof.leaf != incr or not verify_state_proof(proof, cp):
            raise IncompleteTxData("incremental hash mismatch at checkpoint")
        for height, tx in txs:
            self._apply_final(height, tx)
        self.checkpoint = cp
        self.final_height = cp.number
        self.final_incr = incr
        for h in headers:
            self.headers[h.number] = h
            self.arrival[h.number] = now
        self.tip = headers[-1].number
        self._offset = headers[-1].timestamp - now
        self._anchor = (now, self.tip)
        return cp

    # -- ongoing sync -----------------------------------------------------------
    def ingest(self, feed: SyncFeed, now: int) -> bool:
        """Apply a feed or raise; on any error the view is unchanged.

        Returns True when the feed advanced the view.
        """
        if self.checkpoint is None:
            raise BrokenChain("view not initialized")
        try:
            return self._ingest(feed, now)
        except RateViolation:
            self.halted = True
            self.violations += 1
            # fall back to the final prefix and restart the delivery window
            for n in [n for n in self.headers if n > self.final_height]:
                del self.headers[n]
                self.arrival.pop(n, None)
            self.tip = self.final_height
            self._anchor = (now, self.tip)
            raise

    def _ingest(self, feed: SyncFeed, now: int) -> bool:
        headers = list(feed.headers)
        # drop the prefix we already hold
        while headers and self.headers.get(headers[0].number) == headers[0]:
            headers.pop(0)
        if not headers:
            if feed.txs:
                raise IncompleteTxData("transactions without new final blocks")
            self._anchor = self._check_rate(self.tip, now, self.tip)
            return False
        first = headers[0]
        if not _linked(headers):
            raise BrokenChain("feed headers not linked")
        if first.number <= self.final_height:
            raise ForkTooDeep(f"feed replaces final block {first.number}")
        parent = self.headers.get(first.number - 1)
        if parent is None or first.parent != parent.digest() or first.timestamp <= parent.timestamp:
            raise BrokenChain(f"feed does not extend known block {first.number - 1}")
        new_tip = headers[-1].number
        clock = self.clock(now)
        if clock - headers[-1].timestamp > self.params.tau_variance:
            raise StaleHeaders(f"latest header {clock - headers[-1].timestamp}s behind clock")
        fork_point = first.number - 1
        anchor = self._check_rate(new_tip, now, fork_point)

        gamma = self.params.gamma
        new_final = max(new_tip - gamma, self.final_height)
        view = {**{n: h for n, h in self.headers.items() if n <= fork_point},
                **{h.number: h for h in headers}}
        if new_final > self.final_height:
            # the oldest block to become final must have been delivered fast enough
            b = self.final_height + 1
            waited = now - self.arrival.get(b - 1, now)
            if (new_tip - (b - 1)) * self.params.tau_p < self.params.L * waited:
                raise RateViolation(
                    f"{new_tip - b + 1} blocks in {waited}s before finalizing block {b}")
        incr = self.final_incr
        by_height: dict[int, list] = {}
        for height, tx in feed.txs:
            if not self.final_height < height <= new_final:
                raise IncompleteTxData(f"transaction at height {height} outside the new final range")
            by_height.setdefault(height, []).append(tx)
        if any(h2 < h1 for (h1, _), (h2, _) in zip(feed.txs, feed.txs[1:])):
            raise IncompleteTxData("transactions out of block order")
        for n in range(self.final_height + 1, new_final + 1):
            for tx in by_height.get(n, ()):
                incr = incr_hash_update(incr, tx)
            proof = feed.proofs.get(n)
            if proof is None or proof.leaf != incr or not verify_state_proof(proof, view[n]):
                raise IncompleteTxData(f"incremental hash mismatch at block {n}")

        # all checks passed: commit
        for n in [n for n in self.headers if n > fork_point]:
            del self.headers[n]
            self.arrival.pop(n, None)
        for h in headers:
            self.headers[h.number] = h
            self.arrival[h.number] = now
        self.tip = new_tip
        self._anchor = anchor
        for height, tx in feed.txs:
            self._apply_final(height, tx)
        self.final_height = new_final
        self.final_incr = incr
        if headers[-1].timestamp > clock:
            self._offset += headers[-1].timestamp - clock
        keep = new_final - 2
        for n in [n for n in self.headers if n < keep]:
            del self.headers[n]
            self.arrival.pop(n, None)
        self.halted = False
        return True

    def _check_rate(self, new_tip: int, now: int, fork_point: int) -> tuple:
        """Growth since the window anchor must keep pace with L blocks per tau_p.

        Returns the anchor to keep if the feed is committed.
        """
        t0, base = self._anchor
        base = min(base, fork_point)
        elapsed = now - t0
        need = self.params.L * elapsed // self.params.tau_p
        if new_tip - base < need:
            raise RateViolation(f"{new_tip - base} blocks in {elapsed}s, need {need}")
        if elapsed >= self.params.tau_p:
            return (now, new_tip)
        return (t0, base)

    def _apply_final(self, height: int, tx) -> None:
        self.mirror.replay(tx, height)
        method = tx.call.method
        if method in ("deposit", "submitPayout"):
            cid = tx.call.args[0][1]
            self.cid_txs.setdefault(cid, []).append((height, tx))
