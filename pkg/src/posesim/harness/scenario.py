"""Scenario files: JSON documents describing one simulation run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..contracts import code_by_name
from ..errors import ConfigInvalid, UnknownCode
from ..timeouts import ChainParams, Timeouts
from .adversary import AdversaryPolicy

SCHEMA_VERSION = 1

# short chain used by scenario loops: finality after 4 blocks, inclusion within 4
FAST_CHAIN = {"alpha": 4, "alpha_avg": 2, "tau": 22, "tau_avg": 15, "band": 7, "gamma": 4,
              "L": 10, "tau_p": 330, "tau_variance": 180}

STEP_OPS = {"create", "deposit", "execute", "payout", "wait"}


@dataclass
class AdversaryEntry:
    who: str                    # "op:<i>", "pool:<k>" (k-th pool member of contract 0) or "creator"
    policy: AdversaryPolicy


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    n: int = 4
    s: int = 3
    contract: str = "counter"
    users: int = 1
    creator: int | None = None          # operator index of the creator enclave
    chain: dict = field(default_factory=lambda: dict(FAST_CHAIN))
    timeouts: dict = field(default_factory=dict)
    workload: list = field(default_factory=list)
    adversary: list = field(default_factory=list)
    network_delay: int = 0
    inclusion_delay: int = 1            # blocks until a submitted tx is mined
    budget: int = 10**6
    max_time: int = 10**6
    schema_version: int = SCHEMA_VERSION

    @property
    def m(self) -> int:
        return len(self.adversary)

    def chain_params(self) -> ChainParams:
        try:
            return ChainParams(**self.chain)
        except TypeError as exc:
            raise ConfigInvalid(f"chain: {exc}") from None

    def timeout_config(self) -> Timeouts:
        try:
            return Timeouts(**self.timeouts).resolved(self.chain_params())
        except TypeError as exc:
            raise ConfigInvalid(f"timeouts: {exc}") from None

    def adversaries(self) -> list[AdversaryEntry]:
        out = []
        for entry in self.adversary:
            if not isinstance(entry, dict) or "who" not in entry:
                raise ConfigInvalid("adversary entries need a 'who' field")
            out.append(AdversaryEntry(entry["who"], AdversaryPolicy.from_dict(entry.get("policy", {}))))
        return out

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {self.schema_version}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigInvalid("seed must be a non-negative integer")
        if self.n < 1 or not 1 <= self.s <= self.n:
            raise ConfigInvalid(f"need 1 <= s <= n, got s={self.s}, n={self.n}")
        if not 0 <= self.m <= self.n:
            raise ConfigInvalid("more byzantine operators than operators")
        if self.users < 1:
            raise ConfigInvalid("need at least one user")
        if self.creator is not None and not 0 <= self.creator < self.n:
            raise ConfigInvalid("creator index out of range")
        if self.network_delay < 0:
            raise ConfigInvalid("network_delay must be >= 0")
        try:
            code_by_name(self.contract)
        except UnknownCode:
            raise ConfigInvalid(f"unknown contract {self.contract!r}") from None
        params = self.chain_params()
        timeouts = self.timeout_config()
        if not 1 <= self.inclusion_delay <= params.alpha:
            raise ConfigInvalid("inclusion_delay must be within [1, alpha]")
        if timeouts.max_delay < self.network_delay:
            raise ConfigInvalid("timeouts.max_delay below network_delay")
        seen_who = set()
        for entry in self.adversaries():
            who = entry.who
            if who in seen_who:
                raise ConfigInvalid(f"duplicate adversary {who!r}")
            seen_who.add(who)
            kind, _, idx = who.partition(":")
            if who == "creator":
                continue
            if kind not in ("op", "pool") or not idx.isdigit():
                raise ConfigInvalid(f"bad adversary target {who!r}")
            if kind == "op" and int(idx) >= self.n or kind == "pool" and int(idx) >= self.s:
                raise ConfigInvalid(f"adversary target {who!r} out of range")
        for i, step in enumerate(self.workload):
            if not isinstance(step, dict) or step.get("op") not in STEP_OPS:
                raise ConfigInvalid(f"workload step {i}: unknown op")
            if not 0 <= step.get("user", 0) < self.users:
                raise ConfigInvalid(f"workload step {i}: user out of range")
            if step["op"] == "deposit" and not (isinstance(step.get("coins"), int) and step["coins"] > 0):
                raise ConfigInvalid(f"workload step {i}: deposit needs positive coins")
            if step["op"] == "execute" and not isinstance(step.get("move"), list):
                raise ConfigInvalid(f"workload step {i}: execute needs a move list")
            for key in ("retries", "contract_index"):
                if key in step and not isinstance(step[key], int):
                    raise ConfigInvalid(f"workload step {i}: {key} must be an integer")
            if step["op"] == "wait" and not (isinstance(step.get("seconds"), int) and step["seconds"] >= 0):
                raise ConfigInvalid(f"workload step {i}: wait needs seconds >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigInvalid("scenario must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown scenario fields: {sorted(unknown)}")
        try:
            sc = cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None
        try:
            sc.validate()
        except (TypeError, ValueError, AttributeError, KeyError) as exc:
            # wrongly typed fields surface as comparison errors inside the checks
            raise ConfigInvalid(f"malformed scenario: {exc}") from None
        return sc


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: scenario must be a JSON object")
    return Scenario.from_dict(data)


def bundled_scenarios() -> dict[str, Path]:
    root = Path(__file__).resolve().parent.parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}
