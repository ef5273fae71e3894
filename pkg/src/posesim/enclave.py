"""The program every simulated enclave runs: sync, execution half and
creation half.

Handlers return a signed message or a :class:`~posesim.messages.Bad` with
the guard that refused.  Every call is appended to ``log``.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass, field

from . import messages as M
from .contracts import ChainData, ContractInstance, ContractState, contract_for_code
from .contracts.base import DEFAULT_BUDGET
from .crypto import (
    Kind, KeyRing, PartyId, Signed, SymmetricKey, decrypt, encrypt, hash_bytes, hash_value,
    message_hash,
)
from .encoding import decode, encode
from .errors import CryptoError, EncodingError, SyncError, UnknownCode
from .manager import POSE_PROGRAM_DIGEST
from .sync import SyncedView, SyncFeed
from .timeouts import ChainParams, Timeouts


@dataclass
class ContractSlot:
    instance: ContractInstance | None = None
    key: SymmetricKey | None = None
    open: set = field(default_factory=set)           # O^cid during execution
    pending: bytes | None = None                     # h^cid
    results: dict = field(default_factory=dict)      # h -> result ciphertext
    last_exec: tuple | None = None                   # (h, dummy, view height) of the latest execute
    # creator side
    pool: tuple | None = None                        # P^cid
    creation_open: set = field(default_factory=set)
    init_msg: Signed | None = None
    statement: Signed | None = None


def install(keyring: KeyRing, vendor: PartyId, label: str, params: ChainParams,
            timeouts: Timeouts | None = None, pool_seed: bytes = b"", budget: int = DEFAULT_BUDGET):
    """Create an enclave and its attestation quote (signed by the TEE vendor)."""
    pid = keyring.new_party(Kind.ENCLAVE, label)
    quote = keyring.sign(vendor, M.QUOTE, pid, POSE_PROGRAM_DIGEST)
    return Enclave(pid, keyring, params, timeouts, pool_seed, budget), quote


def verify_quote(keyring: KeyRing, vendor: PartyId, quote) -> bool:
    p = M.parse(quote, M.QUOTE, 3)
    return (p is not None and quote.signer == vendor and keyring.verify(quote)
            and p[2] == POSE_PROGRAM_DIGEST)


def pool_rng(pool_seed: bytes, cid: int, creator: PartyId) -> random.Random:
    seed = hmac.new(pool_seed, encode((cid, creator)), hashlib.sha256).digest()
    return random.Random(int.from_bytes(seed, "big"))


def sample_pool(tees, s: int, pool_seed: bytes, cid: int, creator: PartyId) -> tuple:
    """Uniform ordered s-subset of ``tees`` from a PRF keyed by (seed, cid, creator)."""
    return tuple(pool_rng(pool_seed, cid, creator).sample(list(tees), s))


class Enclave:
    def __init__(self, pid: PartyId, keyring: KeyRing, params: ChainParams,
                 timeouts: Timeouts | None = None, pool_seed: bytes = b"",
                 budget: int = DEFAULT_BUDGET):
        self.id = pid
        self._ring = keyring
        self._sign = keyring.signer_for(pid)
        self._sk = keyring.private_key(pid)
        self._secret = hash_value((b"enclave-secret", pid.ident, pool_seed))
        self.params = params
        self.view = SyncedView(params, timeouts)
        self.pool_seed = pool_seed
        self.budget = budget
        self.slots: dict[int, ContractSlot] = {}
        self.log: list[dict] = []

    # -- helpers -------------------------------------------------------------
    @property
    def mirror(self):
        return self.view.mirror

    def _record(self, op: str, now: int, cid, out, **extra):
        entry = {"t": now, "op": op, "cid": cid}
        if isinstance(out, M.Bad):
            entry["bad"] = out.cause
        elif isinstance(out, Signed):
            entry["out"] = out.kind
            entry["digest"] = out.digest().hex()[:16]
        entry.update(extra)
        self.log.append(entry)
        return out

    def _usable(self, now: int) -> str:
        if self.view.checkpoint is None:
            return "NotSynced"
        if self.view.halted:
            return "Halted"
        if self.view.stale(now):
            return "StaleView"
        return ""

    def _slot(self, cid: int) -> ContractSlot:
        return self.slots.setdefault(cid, ContractSlot())

    def public_key(self):
        return self._sk.public

    # -- synchronization -----------------------------------------------------
    def init_sync(self, headers, txs, proof, now: int) -> Signed:
        cp = self.view.init_sync(headers, txs, proof, now)
        ev = self._sign(M.EVIDENCE, cp.number, cp.digest())
        self._record("init_sync", now, None, ev, height=cp.number)
        return ev

    def ingest(self, feed: SyncFeed, now: int) -> str:
        """Returns "" on success or the sync error name."""
        try:
            self.view.ingest(feed, now)
        except SyncError as exc:
            self.log.append({"t": now, "op": "ingest", "cid": None, "bad": exc.reason})
            return exc.reason
        return ""

    # -- execution half ------------------------------------------------------
    def handle_execute(self, m, wrap, now: int):
        cid = m[1] if M.parse(m, M.EXECUTE, 4) else None
        out = self._execute(m, wrap, now)
        return self._record("execute", now, cid, out)

    def _execute(self, m, wrap, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        p = M.parse(m, M.EXECUTE, 4)
        if p is None or not self._ring.verify(m):
            return M.Bad("BadMessage")
        cid = p[1]
        C = self.mirror.record(cid)
        slot = self.slots.get(cid)
        if C is None or C.creator is not None or C.executor != self.id:
            return M.Bad("NotExecutor")
        if slot is None or slot.instance is None:
            return M.Bad("NoInstance")
        if slot.open:
            return M.Bad("PropagationPending")
        try:
            user_key = decode(decrypt(self._sk, wrap))
            if not isinstance(user_key, SymmetricKey):
                return M.Bad("BadWrap")
            move = decode(decrypt(user_key, p[3]))
        except (CryptoError, EncodingError):
            return M.Bad("BadWrap")
        h = message_hash(m)
        chain = ChainData(self.view.final_height, list(self.view.cid_txs.get(cid, ())))
        outcome = slot.instance.next_state(m.signer, chain, move, h)
        slot.last_exec = (h, outcome.dummy, chain.height)
        if not outcome.dummy:
            body = {"result": outcome.result, "error": outcome.error}
            slot.results[h] = encrypt(user_key, encode(body))
        slot.open = set(C.pool)
        slot.pending = h
        c = encrypt(slot.key, slot.instance.get_state("all"))
        return self._sign(M.UPDATE, cid, c, h)

    def handle_update(self, m, now: int):
        cid = m[1] if M.parse(m, M.UPDATE, 4) else None
        return self._record("update", now, cid, self._update(m, now))

    def _update(self, m, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        p = M.parse(m, M.UPDATE, 4)
        if p is None or not self._ring.verify(m):
            return M.Bad("BadMessage")
        cid, c, h = p[1], p[2], p[3]
        C = self.mirror.record(cid)
        if C is None or not C.pool or m.signer != C.pool[0] or self.id not in C.pool:
            return M.Bad("NotMember")
        slot = self.slots.get(cid)
        if slot is None or slot.instance is None:
            return M.Bad("NoInstance")
        try:
            state = ContractState.from_bytes(decrypt(slot.key, c))
        except Exception:
            return M.Bad("BadState")
        slot.instance.update_state(state, h)
        return self._sign(M.CONFIRM, cid, h)

    def handle_confirms(self, cid: int, confs, now: int):
        return self._record("confirms", now, cid, self._confirms(cid, confs, now))

    def _confirms(self, cid, confs, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        C = self.mirror.record(cid)
        slot = self.slots.get(cid)
        if C is None or C.executor != self.id or slot is None or not slot.open:
            return M.Bad("NothingPending")
        slot.open &= set(C.pool)
        for conf in confs:
            p = M.parse(conf, M.CONFIRM, 3)
            if p is None or p[1] != cid or not self._ring.verify(conf):
                continue
            if p[2] != slot.pending or conf.signer not in slot.open:
                continue
            slot.open.discard(conf.signer)
        if slot.open != {self.id}:
            return M.Bad("MissingConfirms")
        slot.open = set()
        bundle = {
            "pub": slot.instance.get_state("pub"),
            "result": slot.results.pop(slot.pending, None),
            "payout": slot.instance.emit_payout(cid, self._sign),
        }
        return self._sign(M.OK, cid, encode(bundle), slot.pending)

    def open_responses(self, cid: int) -> set:
        slot = self.slots.get(cid)
        return set(slot.open) if slot else set()

    def pending_update(self, cid: int):
        slot = self.slots.get(cid)
        return slot.pending if slot and slot.open else None

    # -- creation half -------------------------------------------------------
    def handle_create(self, m, s: int, now: int):
        cid = m[1] if isinstance(m, tuple) and len(m) == 3 else None
        return self._record("create", now, cid, self._create(m, s, now))

    def _create(self, m, s, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        if not (isinstance(m, tuple) and len(m) == 3 and m[0] == M.CREATE):
            return M.Bad("BadMessage")
        _, cid, code = m
        C = self.mirror.record(cid)
        if C is None or C.creator != self.id or C.code_hash != hash_bytes(code):
            return M.Bad("NotCreator")
        slot = self._slot(cid)
        if slot.init_msg is not None:
            return slot.init_msg
        try:
            contract = contract_for_code(code)
        except UnknownCode:
            return M.Bad("UnknownCode")
        if getattr(contract, "init_cost", 0) > self.budget:
            slot.statement = self._sign(M.FAIL, cid)
            return slot.statement
        tees = self.mirror.tees
        if not 1 <= s <= len(tees):
            return M.Bad("PoolSize")
        key_secret = hash_value((b"pool-key", self._secret, cid))
        key = SymmetricKey(hash_bytes(b"keyid" + key_secret), key_secret)
        pool = sample_pool(tees, s, self.pool_seed, cid, self.id)
        cs = tuple(encrypt(self._ring.public_key(t), encode(key)) for t in pool)
        slot.pool = pool
        slot.creation_open = set(pool)
        slot.init_msg = self._sign(M.INIT, cid, pool, cs, code)
        return slot.init_msg

    def handle_init(self, m, now: int):
        cid = m[1] if M.parse(m, M.INIT, 5) else None
        return self._record("init", now, cid, self._init(m, now))

    def _init(self, m, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        p = M.parse(m, M.INIT, 5)
        if p is None or not self._ring.verify(m):
            return M.Bad("BadMessage")
        _, cid, pool, cs, code = p
        C = self.mirror.record(cid)
        if self.id not in pool or C is None or m.signer != C.creator:
            return M.Bad("NotMember")
        slot = self._slot(cid)
        if slot.instance is not None:
            return M.Bad("AlreadyInstalled")
        try:
            key = decode(decrypt(self._sk, cs[pool.index(self.id)]))
            contract = contract_for_code(code)
        except (CryptoError, EncodingError, IndexError, UnknownCode):
            return M.Bad("BadInit")
        slot.key = key
        slot.instance = ContractInstance(contract, hash_bytes(b"prf" + key.secret),
                                         C.created_at, self.budget)
        slot.open = set()
        return self._sign(M.CONFIRM, cid)

    def handle_creation_confirms(self, cid: int, confs, now: int):
        return self._record("creation_confirms", now, cid, self._creation_confirms(cid, confs, now))

    def _creation_confirms(self, cid, confs, now):
        cause = self._usable(now)
        if cause:
            return M.Bad(cause)
        slot = self.slots.get(cid)
        C = self.mirror.record(cid)
        if slot is not None and slot.statement is not None:
            return slot.statement
        if slot is None or not slot.creation_open or C is None or C.creator != self.id:
            return M.Bad("NothingPending")
        if C.pool is not None:
            slot.creation_open &= set(C.pool)
        for conf in confs:
            p = M.parse(conf, M.CONFIRM, 2)
            if p is None or p[1] != cid or not self._ring.verify(conf):
                continue
            slot.creation_open.discard(conf.signer)
        if slot.creation_open:
            return M.Bad("MissingConfirms")
        pool = slot.pool
        if C.pool is not None:
            pool = tuple(t for t in pool if t in C.pool)
        slot.statement = self._sign(M.INIT, cid, pool)
        if self.id not in slot.pool:
            slot.instance = None
            slot.key = None
        return slot.statement

    def creation_statement(self, cid: int):
        slot = self.slots.get(cid)
        return slot.statement if slot else None
