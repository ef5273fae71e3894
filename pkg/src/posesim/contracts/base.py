"""Contract host interface.

A contract is a plug-in (:class:`Contract`) that only sees its application
record and a :class:`MoveContext`.  :class:`ContractInstance` wraps it with
the bookkeeping every contract shares: replay set, processed chain height,
unspent withdrawals, payout level and balance.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field, replace

from .. import encoding
from ..crypto import PartyId, Signed, hash_bytes
from ..encoding import decode, encode
from ..errors import BudgetExceeded, ContractError, InvalidMove, UnknownCode

DEFAULT_BUDGET = 10**6


@dataclass(frozen=True)
class ContractState:
    app: dict                       # {"public": {...}, "private": {...}}
    received: tuple = ()            # sorted request hashes
    processed_height: int = 0
    unspent: tuple = ()             # ((coins, PartyId), ...)
    payout_level: int = 0
    balance: int = 0
    seq: int = 0                    # count of next_state calls on this lineage

    def __encode__(self):
        return b"c", (self.app, self.received, self.processed_height, self.unspent,
                      self.payout_level, self.balance, self.seq)

    def to_bytes(self) -> bytes:
        return encode(self)

    @staticmethod
    def from_bytes(data: bytes) -> "ContractState":
        st = decode(data)
        if not isinstance(st, ContractState):
            raise ContractError("not a contract state")
        return st


def _state_from_fields(app, received, processed_height, unspent, payout_level, balance, seq):
    return ContractState(app, tuple(received), processed_height,
                         tuple(tuple(u) for u in unspent), payout_level, balance, seq)


encoding.register(b"c", _state_from_fields)


@dataclass
class ChainData:
    """Final relevant transactions for one contract, as handed over by the enclave."""

    height: int
    txs: list = field(default_factory=list)   # [(height, RelevantTx)]


class MoveContext:
    """What a contract may touch while running one move."""

    def __init__(self, budget: int, prf_key: bytes, h: bytes, balance: int, unspent: list):
        self.budget = budget
        self.steps = 0
        self._prf_key = prf_key
        self._h = h
        self._ctr = 0
        self.balance = balance
        self.withdrawals: list = []
        self._committed = sum(c for c, _ in unspent)

    def step(self, n: int = 1) -> None:
        self.steps += n
        if self.steps > self.budget:
            raise BudgetExceeded(f"{self.steps} steps > budget {self.budget}")

    def rand_bytes(self) -> bytes:
        self._ctr += 1
        return hmac.new(self._prf_key, self._h + self._ctr.to_bytes(8, "big"), hashlib.sha256).digest()

    def randint(self, n: int) -> int:
        return int.from_bytes(self.rand_bytes(), "big") % n

    @property
    def available(self) -> int:
        return self.balance - self._committed - sum(c for c, _ in self.withdrawals)

    def withdraw(self, coins: int, user: PartyId) -> None:
        if coins <= 0:
            raise InvalidMove("withdrawal must be positive")
        if coins > self.available:
            raise InvalidMove(f"withdrawal {coins} exceeds available {self.available}")
        self.withdrawals.append((coins, user))


class Contract:
    """Plug-in base.  ``code`` identifies the contract; its hash is the code id."""

    code: bytes = b""
    name: str = ""

    def initial_app(self) -> dict:
        return {"public": {}, "private": {}}

    def on_deposit(self, app: dict, user: PartyId, coins: int) -> None:
        pass

    def apply_move(self, ctx: MoveContext, app: dict, user: PartyId, move):
        raise NotImplementedError


@dataclass
class MoveOutcome:
    dummy: bool
    result: object = None
    error: str = ""


def _thaw(value):
    """Decoded states hold tuples; contracts get mutable dicts and lists."""
    if isinstance(value, dict):
        return {k: _thaw(v) for k, v in value.items()}
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


class ContractInstance:
    def __init__(self, contract: Contract, prf_key: bytes, created_height: int = 0,
                 budget: int = DEFAULT_BUDGET):
        self.contract = contract
        self.code_id = hash_bytes(contract.code)
        self.budget = budget
        self._prf_key = prf_key
        app = contract.initial_app()
        self.state = ContractState(decode(encode(app)), (), created_height)

    # -- interface -----------------------------------------------------------
    def next_state(self, user: PartyId, chain: ChainData, move, h: bytes) -> MoveOutcome:
        st = self._process_chain(self.state, chain)
        st = replace(st, seq=st.seq + 1)
        if h in st.received:
            self.state = st
            return MoveOutcome(True)
        received = tuple(sorted(st.received + (h,)))
        app = _thaw(st.app)
        ctx = MoveContext(self.budget, self._prf_key, h, st.balance, list(st.unspent))
        try:
            result = self.contract.apply_move(ctx, app, user, move)
        except (BudgetExceeded, InvalidMove) as exc:
            # app state reverted, request still consumed
            self.state = replace(st, received=received)
            return MoveOutcome(False, None, f"{type(exc).__name__}: {exc}")
        self.state = replace(st, app=decode(encode(app)), received=received,
                             unspent=st.unspent + tuple(ctx.withdrawals))
        return MoveOutcome(False, result)

    def update_state(self, new: ContractState, h: bytes) -> bool:
        """Adopt ``new`` wholesale; returns False when treated as a dummy.

        A known request hash is a dummy only when ``new`` is older than the
        current state, so replayed updates cannot roll the state back while a
        successor executor's re-execution of the same request still wins.
        """
        if h in self.state.received and new.seq < self.state.seq:
            return False
        self.state = new
        return True

    def get_state(self, flag: str = "all") -> bytes:
        if flag == "all":
            return self.state.to_bytes()
        if flag == "pub":
            return encode(self.public_view())
        raise ValueError(f"unknown flag {flag!r}")

    def public_view(self) -> dict:
        st = self.state
        return {
            "public": st.app.get("public", {}),
            "balance": st.balance,
            "unspent": st.unspent,
            "payout_level": st.payout_level,
            "processed_height": st.processed_height,
        }

    def emit_payout(self, cid: int, sign) -> Signed:
        """WITHDRAW over the current unspent list, signed with ``sign``."""
        return sign("WITHDRAW", cid, self.state.payout_level, tuple(self.state.unspent))

    # -- chain data ----------------------------------------------------------
    def _process_chain(self, st: ContractState, chain: ChainData | None) -> ContractState:
        if chain is None or chain.height <= st.processed_height:
            return st
        app = None
        balance, unspent, level = st.balance, list(st.unspent), st.payout_level
        for height, tx in chain.txs:
            if not st.processed_height < height <= chain.height:
                continue
            method = tx.call.method
            m = tx.call.args[0]
            if method == "deposit":
                balance += m[2]
                if app is None:
                    app = _thaw(st.app)
                self.contract.on_deposit(app, m.signer, m[2])
            elif method == "submitPayout" and m[2] == level:
                for w in m[3]:
                    w = tuple(w)
                    if w in unspent:
                        unspent.remove(w)
                    balance -= w[0]
                level += 1
        return replace(st, app=st.app if app is None else decode(encode(app)), balance=balance,
                       unspent=tuple(unspent), payout_level=level, processed_height=chain.height)


_REGISTRY: dict[bytes, type] = {}


def register_contract(cls):
    _REGISTRY[hash_bytes(cls.code)] = cls
    return cls


def contract_for_code(code: bytes) -> Contract:
    cls = _REGISTRY.get(hash_bytes(code))
    if cls is None:
        raise UnknownCode(hash_bytes(code).hex()[:16])
    return cls()


def init_contract(code: bytes, prf_key: bytes, created_height: int = 0,
                  budget: int = DEFAULT_BUDGET) -> ContractInstance:
    return ContractInstance(contract_for_code(code), prf_key, created_height, budget)


def code_by_name(name: str) -> bytes:
    for cls in _REGISTRY.values():
        if cls.name == name:
            return cls.code
    raise UnknownCode(name)
