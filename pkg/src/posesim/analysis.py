"""Liveness arithmetic, Monte Carlo validation and trace metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from statistics import NormalDist

from .errors import DomainError, MalformedTrace
from .kernels import crash_trials


def _check(n, m, s) -> None:
    for name, v in (("n", n), ("m", m), ("s", s)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise DomainError(f"{name} must be an int, got {v!r}")
    if not 0 <= m <= n:
        raise DomainError(f"need 0 <= m <= n, got m={m}, n={n}")
    if not 1 <= s <= n:
        raise DomainError(f"need 1 <= s <= n, got s={s}, n={n}")


def crash_probability(n: int, m: int, s: int) -> Fraction:
    """Chance that a uniformly drawn pool of s out of n enclaves is entirely byzantine."""
    _check(n, m, s)
    p = Fraction(1)
    for i in range(s):
        if m - i <= 0:
            return Fraction(0)
        p *= Fraction(m - i, n - i)
    return p


def liveness_epsilon(n: int, m: int, s: int) -> Fraction:
    """Probability that a contract keeps at least one honest pool member (exact)."""
    return 1 - crash_probability(n, m, s)


def system_no_crash_prob(n: int, m: int, s: int, contracts: int) -> float:
    """Probability that none of ``contracts`` independently drawn pools crashes.

    Computed as exp(K * log1p(-p)).  p itself is exact; the only rounding is
    in log1p and exp, so the relative error stays within a few ulps times K*p.
    """
    if not isinstance(contracts, int) or contracts < 0:
        raise DomainError(f"contracts must be a non-negative int, got {contracts!r}")
    p = crash_probability(n, m, s)
    if contracts == 0 or p == 0:
        return 1.0
    if p == 1:
        return 0.0
    return math.exp(contracts * math.log1p(-float(p)))


@dataclass
class MonteCarlo:
    trials: int
    crashes: int
    estimate: float
    low: float
    high: float

    def covers(self, value: float) -> bool:
        return self.low <= value <= self.high


def wilson(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise DomainError("trials must be positive")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the bounds are exactly 0 and 1 at the extremes; avoid rounding dust there
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == trials else min(1.0, centre + half)
    return low, high


def monte_carlo_crash(n: int, m: int, s: int, trials: int, seed: int = 0,
                      confidence: float = 0.95) -> MonteCarlo:
    _check(n, m, s)
    if not isinstance(trials, int) or trials < 1:
        raise DomainError("trials must be >= 1")
    crashes = crash_trials(n, m, s, trials, seed)
    low, high = wilson(crashes, trials, confidence)
    return MonteCarlo(trials, crashes, crashes / trials, low, high)


def sweep(rows) -> list[dict]:
    """Evaluate (n, m, s, K) tuples; K may be None."""
    out = []
    for n, m, s, k in rows:
        eps = liveness_epsilon(n, m, s)
        out.append({"n": n, "m": m, "s": s, "contracts": k, "epsilon": float(eps),
                    "crash": float(1 - eps),
                    "no_crash": None if k is None else system_no_crash_prob(n, m, s, k)})
    return out


def default_grid(n: int = 1000, contracts: int = 40_000_000) -> list[tuple]:
    return [(n, n * pct // 100, s, contracts) for pct in (10, 20, 30, 50, 70) for s in range(1, 16)]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2)


# -- trace metrics --------------------------------------------------------------------

PHASES = {
    "initCreation": "setup", "finalizeCreation": "setup", "reportCreationFailure": "setup",
    "deposit": "coin", "submitPayout": "coin",
    "challengeExecutor": "challenge", "executorResponse": "challenge", "executorTimeout": "challenge",
    "challengeWatchdogs": "challenge", "watchdogTimeout": "challenge",
    "challengeCreator": "challenge", "creatorTimeout": "challenge",
    "challengeWatchdogsCreation": "challenge", "creationWatchdogTimeout": "challenge",
    "watchdogResponse": "response", "creationWatchdogResponse": "response",
}


@dataclass
class Metrics:
    onchain: int = 0                 # accepted contract txs, all contracts
    onchain_by_contract: dict = field(default_factory=dict)
    by_phase: dict = field(default_factory=dict)
    by_method: dict = field(default_factory=dict)
    challenge_rounds: int = 0
    executor_challenges: int = 0
    watchdog_responses: int = 0
    rejected: int = 0
    requests_done: int = 0
    requests_failed: int = 0
    latencies: list = field(default_factory=list)
    crashed: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def measure(records) -> Metrics:
    if not isinstance(records, list) or any(not isinstance(r, dict) or "ev" not in r for r in records):
        raise MalformedTrace("expected a list of trace records")
    mt = Metrics()
    per_contract = Counter()
    phases = defaultdict(int)
    methods = Counter()
    for rec in records:
        ev = rec["ev"]
        if ev == "tx":
            if rec.get("cid") is None:
                continue
            if not rec.get("accepted"):
                mt.rejected += 1
                continue
            method = rec["method"]
            per_contract[str(rec["cid"])] += 1
            methods[method] += 1
            phases[PHASES.get(method, "other")] += 1
            if method.startswith("challenge"):
                mt.challenge_rounds += 1
            if method == "challengeExecutor":
                mt.executor_challenges += 1
            if PHASES.get(method) == "response":
                mt.watchdog_responses += 1
        elif ev == "request_done":
            mt.requests_done += 1
            mt.latencies.append(rec["latency"])
        elif ev == "request_failed":
            mt.requests_failed += 1
        elif ev == "final":
            mt.crashed[str(rec["cid"])] = bool(rec["crashed"])
    mt.onchain = sum(per_contract.values())
    mt.onchain_by_contract = dict(per_contract)
    mt.by_phase = dict(phases)
    mt.by_method = dict(methods)
    return mt
