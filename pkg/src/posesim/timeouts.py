"""Chain parameters and protocol timeouts.

Off-chain timeouts are in seconds of logical time, on-chain timeouts in
blocks.  Seconds are turned into a block count with the fastest possible
block interval ``tau_min``, because a deadline measured in blocks runs out
soonest when blocks come quickly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigInvalid


@dataclass
class ChainParams:
    alpha: int = 20          # worst-case inclusion delay in blocks
    alpha_avg: int = 10
    tau: int = 44            # worst-case seconds per block (timeout arithmetic)
    tau_avg: int = 15        # mean block interval of the simulated chain
    band: int | None = None  # simulated intervals are uniform in tau_avg +- band
    gamma: int = 15          # finality depth
    L: int = 50              # blocks an operator must deliver per tau_p
    tau_p: int | None = None  # defaults to 33 s per block of L
    tau_variance: int = 180  # max lag of a fed header behind the enclave clock
    slack_on: int | None = None  # registration evidence age limit (blocks)

    def __post_init__(self):
        if self.band is None:
            self.band = self.tau_avg // 2
        if self.tau_p is None:
            self.tau_p = 33 * self.L
        if self.slack_on is None:
            self.slack_on = self.gamma + self.alpha

    @property
    def tau_min(self) -> int:
        return self.tau_avg - self.band

    @property
    def tau_max(self) -> int:
        return self.tau_avg + self.band

    @property
    def delta_L(self) -> int:
        """Maximum blockchain delay in seconds."""
        return self.alpha * self.tau

    @property
    def t_conf(self) -> int:
        return self.tau * self.gamma

    @property
    def kick_extension_seconds(self) -> int:
        return (self.alpha + self.gamma) * self.tau

    @property
    def challenge_creation_avg_seconds(self) -> int:
        return self.alpha_avg * self.tau_avg

    def blocks_for(self, seconds: int) -> int:
        """Most blocks that can be mined in ``seconds``."""
        return -(-seconds // self.tau_min)

    def validate(self) -> None:
        if self.alpha < 1 or self.gamma < 0 or self.alpha_avg < 1:
            raise ConfigInvalid("need alpha >= 1, alpha_avg >= 1, gamma >= 0")
        if self.band < 0 or self.tau_min < 1:
            raise ConfigInvalid("block interval band must keep intervals >= 1 s")
        if self.tau < self.tau_max:
            raise ConfigInvalid(f"worst-case tau {self.tau} below largest interval {self.tau_max}")
        if self.L < 1 or self.tau_p < 1:
            raise ConfigInvalid("L and tau_p must be positive")
        if self.L * self.tau_max > self.tau_p:
            raise ConfigInvalid("honest chain cannot deliver L blocks within tau_p")
        if self.tau_variance < self.tau_max:
            raise ConfigInvalid("tau_variance must cover one block interval")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Timeouts:
    """All protocol timeouts.  ``None`` fields take the minimal valid value."""

    t_exec: int = 5                 # enclave execute/update time bound (s)
    max_delay: int = 0              # bound on honest message delay (s)
    prop_off: int | None = None     # executor waits this long for confirms (s)
    prop_on: int | None = None      # watchdog challenge deadline (blocks)
    exec_off: int | None = None     # user waits this long for OK (s)
    exec_on: int | None = None      # executor challenge deadline (blocks)
    creation_prop_off: int | None = None
    creation_prop_on: int | None = None
    creation_off: int | None = None
    creation_on: int | None = None
    dynamic: bool = False
    max_watchdog_extensions: int = 2

    def resolved(self, chain: ChainParams) -> "Timeouts":
        t = Timeouts(**{f.name: getattr(self, f.name) for f in fields(self)})
        if t.prop_off is None:
            t.prop_off = 2 * t.t_exec + 2 * t.max_delay
        if t.prop_on is None:
            t.prop_on = min_prop_on(chain, t.prop_off)
        if t.exec_off is None:
            t.exec_off = min_exec_off(chain, t.t_exec, t.prop_on)
        if t.exec_on is None:
            t.exec_on = min_exec_on(chain, t.exec_off)
        if t.creation_prop_off is None:
            t.creation_prop_off = t.prop_off
        if t.creation_prop_on is None:
            t.creation_prop_on = min_prop_on(chain, t.creation_prop_off)
        if t.creation_off is None:
            t.creation_off = min_exec_off(chain, t.t_exec, t.creation_prop_on)
        if t.creation_on is None:
            t.creation_on = min_exec_on(chain, t.creation_off)
        t.validate(chain)
        return t

    def validate(self, chain: ChainParams) -> None:
        chain.validate()
        if self.t_exec < 1 or self.max_delay < 0:
            raise ConfigInvalid("t_exec must be >= 1 and max_delay >= 0")
        if self.prop_off < 2 * self.t_exec + 2 * self.max_delay:
            raise ConfigInvalid("prop_off shorter than one update round trip")
        checks = [
            ("prop_on", self.prop_on, min_prop_on(chain, self.prop_off)),
            ("exec_off", self.exec_off, min_exec_off(chain, self.t_exec, self.prop_on)),
            ("exec_on", self.exec_on, min_exec_on(chain, self.exec_off)),
            ("creation_prop_on", self.creation_prop_on, min_prop_on(chain, self.creation_prop_off)),
            ("creation_off", self.creation_off,
             min_exec_off(chain, self.t_exec, self.creation_prop_on)),
            ("creation_on", self.creation_on, min_exec_on(chain, self.creation_off)),
        ]
        for name, value, low in checks:
            if value < low:
                raise ConfigInvalid(f"{name}={value} violates the timeout relation (needs >= {low})")
        if not 0 <= self.max_watchdog_extensions <= 2:
            raise ConfigInvalid("max_watchdog_extensions must be in 0..2")

    # dynamic mode, all in blocks
    def dynamic_exec_on(self, chain: ChainParams) -> int:
        """Initial executor-challenge deadline: one execution, one propagation, one tx."""
        return chain.alpha + chain.blocks_for(2 * self.t_exec + self.prop_off + 2 * self.max_delay) + 1

    def dynamic_creation_on(self, chain: ChainParams) -> int:
        return chain.alpha + chain.blocks_for(
            2 * self.t_exec + self.creation_prop_off + 2 * self.max_delay) + 1

    def watchdog_extension(self, chain: ChainParams) -> int:
        return self.prop_on + chain.alpha

    def kick_extension(self, chain: ChainParams) -> int:
        return chain.alpha + chain.gamma

    def client_exec_off(self, chain: ChainParams, challenge_running: bool) -> int:
        """User-side wait.  Without a running on-chain challenge it shrinks to
        delta_L plus two enclave executions."""
        if self.dynamic and not challenge_running:
            return chain.delta_L + 2 * self.t_exec + 2 * self.max_delay
        return self.exec_off

    def to_dict(self) -> dict:
        return asdict(self)


def min_prop_on(chain: ChainParams, prop_off: int) -> int:
    return chain.blocks_for(prop_off) + chain.alpha + 1


def min_exec_off(chain: ChainParams, t_exec: int, prop_on: int) -> int:
    # two executions plus two watchdog challenges, each up to
    # (prop_on blocks) + delta_L + t_conf, at worst-case block time
    per_challenge = prop_on * chain.tau + chain.delta_L + chain.t_conf
    return 2 * t_exec + 2 * per_challenge


def min_exec_on(chain: ChainParams, exec_off: int) -> int:
    return chain.blocks_for(exec_off) + chain.alpha + 1


ETHEREUM = ChainParams()
