"""Invariant monitors over trace records.

Every monitor reads only the trace, so a saved trace can be re-checked
offline with exactly the code that checked it live.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from ..errors import MalformedTrace
from .trace import chain_errors

SETUP = {"initCreation", "finalizeCreation", "reportCreationFailure"}
COIN = {"deposit", "submitPayout"}
OPENERS = {"challengeExecutor": "exec", "challengeWatchdogs": "watch",
           "challengeCreator": "creator", "challengeWatchdogsCreation": "cwatch"}
CLOSERS = {"executorResponse": "exec", "executorTimeout": "exec", "watchdogTimeout": "watch",
           "creatorTimeout": "creator", "creationWatchdogTimeout": "cwatch"}
RESPONSES = {"watchdogResponse", "creationWatchdogResponse"}


@dataclass
class Violation:
    monitor: str
    index: int
    detail: str

    def __str__(self):
        return f"[{self.monitor}] record {self.index}: {self.detail}"


def _header(records):
    if not records or records[0].get("ev") != "scenario":
        raise MalformedTrace("trace does not start with a scenario record")
    return records[0]


def integrity(records) -> list[Violation]:
    return [Violation("integrity", 0, e) for e in chain_errors(records)]


def ok_after_confirms(records) -> list[Violation]:
    """An OK for h needs a prior CONFIRM(h) from every other member of the pool it was emitted under."""
    confirmed = defaultdict(set)          # (cid, h) -> enclaves
    out = []
    for rec in records:
        if rec["ev"] != "enclave":
            continue
        if rec.get("op") == "update" and rec.get("out") == "CONFIRM":
            confirmed[(rec["cid"], rec["req"])].add(rec["enc"])
        elif rec.get("out") == "OK":
            missing = [p for p in rec.get("pool", []) if p != rec["enc"]
                       and p not in confirmed[(rec["cid"], rec["req"])]]
            if missing:
                out.append(Violation("ok_after_confirms", rec["i"],
                                     f"OK for {rec['req'][:16]} before confirms from {missing}"))
    return out


def privacy(records) -> list[Violation]:
    """No private byte of an honest user's move in anything an adversary sees."""
    secrets = set()
    out = []
    for rec in records:
        if rec["ev"] == "request":
            secrets.update(bytes.fromhex(s) for s in rec.get("secrets", ()))
            continue
        data = rec.get("data") if rec["ev"] in ("send", "tx") else None
        if not data or not secrets:
            continue
        blob = bytes.fromhex(data)
        for s in secrets:
            if s in blob:
                out.append(Violation("privacy", rec["i"], f"plaintext secret in {rec['ev']} {rec.get('kind', '')}"))
                break
    return out


def liveness(records) -> list[Violation]:
    """Every request ends (done, or failed because the contract crashed) within the bound."""
    bound = _header(records).get("bound")
    open_ = {}
    out = []
    for rec in records:
        ev = rec["ev"]
        if ev == "request":
            open_[(rec["cid"], rec["req"])] = rec
        elif ev in ("request_done", "request_failed"):
            start = open_.pop((rec["cid"], rec["req"]), None)
            if start is None:
                out.append(Violation("liveness", rec["i"], "completion without request"))
                continue
            if ev == "request_failed" and rec.get("reason") != "ContractCrashed":
                out.append(Violation("liveness", rec["i"], f"request failed: {rec.get('reason')}"))
            elif bound is not None and rec["t"] - start["t"] > bound:
                out.append(Violation("liveness", rec["i"], f"took {rec['t'] - start['t']}s > bound {bound}s"))
    for (cid, h), start in open_.items():
        out.append(Violation("liveness", start["i"], f"request {h[:16]} on contract {cid} never finished"))
    return out


def challenge_cost(records) -> list[Violation]:
    """Each accepted challenge is closed by exactly one accepted response or timeout."""
    open_ = defaultdict(int)
    out = []
    for rec in records:
        if rec["ev"] != "tx" or not rec.get("accepted"):
            continue
        m, cid = rec["method"], rec.get("cid")
        if m in OPENERS:
            key = (cid, OPENERS[m])
            if open_[key]:
                out.append(Violation("challenge_cost", rec["i"], f"{m} while a round is open"))
            open_[key] += 1
        elif m in CLOSERS or m in ("finalizeCreation", "reportCreationFailure"):
            kinds = [CLOSERS[m]] if m in CLOSERS else ["creator", "cwatch"]
            closed = False
            for kind in kinds:
                if open_[(cid, kind)]:
                    open_[(cid, kind)] -= 1
                    closed = True
            if m in CLOSERS and not closed:
                out.append(Violation("challenge_cost", rec["i"], f"{m} closes no open round"))
    for (cid, kind), n in open_.items():
        if n:
            out.append(Violation("challenge_cost", len(records) - 1, f"{kind} round on contract {cid} never closed"))
    return out


def coin_flow(records) -> list[Violation]:
    dep = defaultdict(int)
    paid = defaultdict(int)
    levels = defaultdict(set)
    out = []
    for rec in records:
        if rec["ev"] == "tx" and rec.get("accepted"):
            cid = rec.get("cid")
            if rec["method"] == "deposit":
                dep[cid] += rec["value"]
            elif rec["method"] == "submitPayout":
                if rec["level"] in levels[cid]:
                    out.append(Violation("coin_flow", rec["i"], f"payout level {rec['level']} used twice"))
                levels[cid].add(rec["level"])
                paid[cid] += rec["total"]
                if paid[cid] > dep[cid]:
                    out.append(Violation("coin_flow", rec["i"], f"paid {paid[cid]} > deposited {dep[cid]}"))
        elif rec["ev"] == "final":
            if rec["balance"] < 0 or rec["balance"] != rec["deposited"] - rec["withdrawn"]:
                out.append(Violation("coin_flow", rec["i"], f"balance {rec['balance']} inconsistent"))
    return out


def benign_count(records) -> list[Violation]:
    """All-honest runs use exactly 2 setup txs plus one per deposit or payout."""
    ready = next((r for r in records if r["ev"] == "ready"), None)
    if ready is None or ready.get("byzantine"):
        return []
    counts = defaultdict(lambda: [0, 0])
    for rec in records:
        if rec["ev"] == "tx" and rec.get("cid") is not None:
            counts[rec["cid"]][0] += 1
            if rec["method"] in COIN:
                counts[rec["cid"]][1] += 1
    out = []
    for cid, (total, coin) in counts.items():
        if total != 2 + coin:
            out.append(Violation("benign_count", 0, f"contract {cid}: {total} txs, expected {2 + coin}"))
    return out


def termination(records) -> list[Violation]:
    """The workload ran to the end before the time limit."""
    steps = len(_header(records)["scenario"].get("workload", []))
    done = {r["index"] for r in records if r["ev"] == "step_done"}
    out = [Violation("termination", r["i"], "hit max_time") for r in records if r["ev"] == "max_time"]
    if len(done) < steps:
        out.append(Violation("termination", len(records) - 1, f"{len(done)}/{steps} workload steps finished"))
    return out


MONITORS = {
    "integrity": integrity,
    "ok_after_confirms": ok_after_confirms,
    "privacy": privacy,
    "liveness": liveness,
    "challenge_cost": challenge_cost,
    "coin_flow": coin_flow,
    "benign_count": benign_count,
    "termination": termination,
}


def check_trace(records) -> list[Violation]:
    _header(records)
    out = []
    for fn in MONITORS.values():
        out.extend(fn(records))
    return out
