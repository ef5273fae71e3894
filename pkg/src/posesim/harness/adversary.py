"""Byzantine operator behaviour.

A policy only wraps the operator's I/O: which off-chain messages get through,
how its enclave is fed and whether it answers on chain.  The enclave itself
always runs the honest program.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigInvalid


@dataclass
class AdversaryPolicy:
    drop_in: list = field(default_factory=list)    # message kinds dropped before the enclave, "*" = all
    drop_out: list = field(default_factory=list)   # message kinds dropped on the way out
    delay: int = 0                                 # extra seconds on every outgoing message
    update_fanout: int | None = None               # deliver UPDATE to this many watchdogs only
    fanout_to: str = "first"                       # which watchdogs get it: "first" or "last"
    silent_after_update: bool = False              # go fully silent after the first UPDATE
    onchain: str = "respond"                       # "respond" or "silent"
    feed_every: int = 1                            # feed the enclave every k-th block only
    omit_txs: bool = False                         # feed headers but withhold relevant txs
    sidechain: dict | None = None                  # {"start": t, "interval": seconds}
    replay: dict | None = None                     # {"after": seconds}: resend captured EXECUTEs
    active_from: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "AdversaryPolicy":
        if not isinstance(data, dict):
            raise ConfigInvalid("policy must be an object")
        known = {f.name for f in fields(cls)}
        if set(data) - known:
            raise ConfigInvalid(f"unknown policy fields {sorted(set(data) - known)}")
        p = cls(**data)
        if p.onchain not in ("respond", "silent"):
            raise ConfigInvalid("onchain must be 'respond' or 'silent'")
        if p.fanout_to not in ("first", "last"):
            raise ConfigInvalid("fanout_to must be 'first' or 'last'")
        if p.feed_every < 1 or p.delay < 0:
            raise ConfigInvalid("feed_every >= 1 and delay >= 0 required")
        if p.sidechain is not None and not {"start", "interval"} <= set(p.sidechain):
            raise ConfigInvalid("sidechain needs start and interval")
        return p

    def to_dict(self) -> dict:
        return asdict(self)


class Interposer:
    """Applies a policy to one operator's traffic."""

    def __init__(self, policy: AdversaryPolicy | None):
        self.policy = policy
        self.silent = False
        self.captured: list = []

    @property
    def byzantine(self) -> bool:
        return self.policy is not None

    def active(self, now: int) -> bool:
        return self.policy is not None and now >= self.policy.active_from

    def _drops(self, kinds, kind: str) -> bool:
        return "*" in kinds or kind in kinds

    def drop_incoming(self, kind: str, now: int) -> bool:
        if not self.active(now):
            return False
        return self.silent or self._drops(self.policy.drop_in, kind)

    def drop_outgoing(self, kind: str, now: int) -> bool:
        if not self.active(now):
            return False
        return self.silent or self._drops(self.policy.drop_out, kind)

    def out_delay(self, now: int) -> int:
        return self.policy.delay if self.active(now) else 0

    def answers_onchain(self, now: int) -> bool:
        return not (self.active(now) and (self.silent or self.policy.onchain == "silent"))

    def update_targets(self, watchdogs: list, now: int) -> list:
        if not self.active(now) or self.policy.update_fanout is None:
            return watchdogs
        k = max(0, min(self.policy.update_fanout, len(watchdogs)))
        return watchdogs[:k] if self.policy.fanout_to == "first" else watchdogs[len(watchdogs) - k:]

    def after_update(self, now: int) -> None:
        if self.active(now) and self.policy.silent_after_update:
            self.silent = True

    def feeds_at(self, block: int, now: int) -> bool:
        return not self.active(now) or block % self.policy.feed_every == 0
