"""On-chain manager: enclave registry, contract records, coin flow and the
challenge/response/timeout flows, each guarded by a numbered validation case.

Every entry point is split into a check (which needs signatures, headers and
the current block) and an effect (which only touches manager state).  The
enclave-side mirror replays accepted transactions through the effects alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import messages as M
from .chain import RelevantTx
from .crypto import KeyRing, PartyId, Signed, hash_bytes, hash_value, message_hash
from .errors import ManagerError
from .timeouts import ChainParams, Timeouts

# digest an attestation quote must carry
POSE_PROGRAM_DIGEST = hash_bytes(b"pose-program/v1")


@dataclass
class ExecChallenge:
    msg: object = None
    res: object = None
    block: int | None = None
    wrap: object = None        # key envelope for the challenged executor
    extension: int = 0         # dynamic-mode deadline extension (blocks)
    watchdog_extensions: int = 0

    def __encode__(self):
        return b"X", (self.msg, self.res, self.block, self.wrap, self.extension,
                      self.watchdog_extensions)


@dataclass
class WatchChallenge:
    msg: object = None
    res: list = field(default_factory=list)
    block: int | None = None

    def responders(self) -> set:
        return {c.signer for c in self.res}

    def __encode__(self):
        return b"W", (self.msg, tuple(self.res), self.block)


@dataclass
class ManagerRecord:
    creator: PartyId | None
    code_hash: bytes
    pool: tuple | None = None   # None: not yet set; (): empty (crashed or failed)
    balance: int = 0
    payout_level: int = 0
    exec_chal: ExecChallenge = field(default_factory=ExecChallenge)
    watch_chal: WatchChallenge = field(default_factory=WatchChallenge)
    created_at: int = 0

    @property
    def live(self) -> bool:
        return self.creator is None and bool(self.pool)

    @property
    def crashed(self) -> bool:
        return self.pool == ()

    @property
    def executor(self) -> PartyId | None:
        return self.pool[0] if self.pool else None

    def __encode__(self):
        return b"R", (self.creator, self.code_hash, self.pool, self.balance, self.payout_level,
                      self.exec_chal, self.watch_chal, self.created_at)


OKAY = "OK"
FAIL = "FAIL"


class Validator:
    """The twelve guard conjunctions.  ``check`` returns ``(ok, reason)``."""

    def __init__(self, keyring: KeyRing | None, chain: ChainParams, timeouts: Timeouts):
        self.keyring = keyring
        self.chain = chain
        self.t = timeouts

    def _verify(self, msg) -> bool:
        # mirrors replay already-accepted transactions and pass no keyring
        return self.keyring is None or self.keyring.verify(msg)

    def exec_deadline(self, C: ManagerRecord) -> int:
        if self.t.dynamic:
            return self.t.dynamic_exec_on(self.chain) + C.exec_chal.extension
        return self.t.exec_on

    def creation_deadline(self, C: ManagerRecord) -> int:
        if self.t.dynamic:
            return self.t.dynamic_creation_on(self.chain) + C.exec_chal.extension
        return self.t.creation_on

    def check(self, case: int, msg, C: ManagerRecord | None, latest: int, code=None):
        if C is None:
            return False, "NoSuchContract"
        fn = getattr(self, f"_case{case}", None)
        if fn is None:
            raise ValueError(f"no validation case {case}")
        return fn(msg, C, latest, code)

    def __call__(self, case: int, msg, C, latest: int, code=None) -> str:
        return OKAY if self.check(case, msg, C, latest, code)[0] else FAIL

    @staticmethod
    def _in_time(block, delta, latest) -> bool:
        return block is not None and block + delta > latest

    @staticmethod
    def _expired(block, delta, latest) -> bool:
        return block is not None and block + delta <= latest

    def _case1(self, m, C, latest, code):
        if M.parse(m, M.EXECUTE, 4) is None:
            return False, "ParseError"
        if C.creator is not None:
            return False, "InCreation"
        if C.exec_chal.block is not None:
            return False, "ChallengeRunning"
        if not self._verify(m):
            return False, "BadSignature"
        return True, ""

    def _case2(self, res, C, latest, code):
        p = M.parse(res, M.OK, 4)
        if p is None:
            return False, "ParseError"
        if C.creator is not None:
            return False, "InCreation"
        if C.exec_chal.msg is None or message_hash(C.exec_chal.msg) != p[3]:
            return False, "WrongRequest"
        if not self._in_time(C.exec_chal.block, self.exec_deadline(C), latest):
            return False, "TooLate"
        if not self._verify(res):
            return False, "BadSignature"
        if C.executor != res.signer:
            return False, "NotExecutor"
        return True, ""

    def _case3(self, _, C, latest, code):
        if C.creator is not None:
            return False, "InCreation"
        if C.exec_chal.msg is None:
            return False, "NoChallenge"
        # a cleared block means the executor was already kicked for this message
        if not self._expired(C.exec_chal.block, self.exec_deadline(C), latest):
            return False, "NotExpired"
        return True, ""

    def _case4(self, pre, C, latest, code):
        if M.parse(pre, M.UPDATE, 4) is None:
            return False, "ParseError"
        if C.creator is not None:
            return False, "InCreation"
        if C.watch_chal.block is not None:
            return False, "ChallengeRunning"
        if C.executor != pre.signer:
            return False, "NotExecutor"
        if not self._verify(pre):
            return False, "BadSignature"
        return True, ""

    def _case5(self, conf, C, latest, code):
        p = M.parse(conf, M.CONFIRM, 3)
        if p is None:
            return False, "ParseError"
        if C.creator is not None:
            return False, "InCreation"
        if not self._in_time(C.watch_chal.block, self.t.prop_on, latest):
            return False, "TooLate"
        if not self._verify(conf):
            return False, "BadSignature"
        if C.watch_chal.msg is None or p[2] != C.watch_chal.msg[3]:
            return False, "WrongRequest"
        if conf.signer not in (C.pool or ()):
            return False, "NotInPool"
        return True, ""

    def _case6(self, _, C, latest, code):
        if C.creator is not None:
            return False, "InCreation"
        if C.watch_chal.block is None:
            return False, "NoChallenge"
        if not self._expired(C.watch_chal.block, self.t.prop_on, latest):
            return False, "NotExpired"
        return True, ""

    def _case7(self, m, C, latest, code):
        if not (isinstance(m, tuple) and len(m) == 3 and m[0] == M.CREATE):
            return False, "ParseError"
        if C.creator is None:
            return False, "NotInCreation"
        if C.exec_chal.block is not None:
            return False, "ChallengeRunning"
        if code is None or C.code_hash != hash_bytes(code):
            return False, "CodeMismatch"
        return True, ""

    def _case8(self, res, C, latest, code):
        if M.parse(res, M.INIT, 3) is None and M.parse(res, M.FAIL, 2) is None:
            return False, "ParseError"
        if C.creator is None or C.creator != res.signer:
            return False, "NotCreator"
        # no running creator challenge means no deadline
        if C.exec_chal.block is not None and not self._in_time(
                C.exec_chal.block, self.creation_deadline(C), latest):
            return False, "TooLate"
        if not self._verify(res):
            return False, "BadSignature"
        return True, ""

    def _case9(self, _, C, latest, code):
        if C.creator is None:
            return False, "NotInCreation"
        if C.exec_chal.block is None:
            return False, "NoChallenge"
        if not self._expired(C.exec_chal.block, self.creation_deadline(C), latest):
            return False, "NotExpired"
        return True, ""

    def _case10(self, pre, C, latest, code):
        if M.parse(pre, M.INIT, 5) is None:
            return False, "ParseError"
        if C.creator is None or C.creator != pre.signer:
            return False, "NotCreator"
        if C.watch_chal.block is not None:
            return False, "ChallengeRunning"
        if not self._verify(pre):
            return False, "BadSignature"
        return True, ""

    def _case11(self, conf, C, latest, code):
        if M.parse(conf, M.CONFIRM, 2) is None:
            return False, "ParseError"
        if C.creator is None:
            return False, "NotInCreation"
        if C.watch_chal.block is None:
            return False, "NoChallenge"
        if not self._in_time(C.watch_chal.block, self.t.creation_prop_on, latest):
            return False, "TooLate"
        if not self._verify(conf):
            return False, "BadSignature"
        if conf.signer not in (C.pool or ()):
            return False, "NotInPool"
        return True, ""

    def _case12(self, _, C, latest, code):
        if C.creator is None:
            return False, "NotInCreation"
        if C.watch_chal.block is None:
            return False, "NoChallenge"
        if not self._expired(C.watch_chal.block, self.t.creation_prop_on, latest):
            return False, "NotExpired"
        return True, ""


def call(method: str, *args) -> M.ManagerCall:
    return M.ManagerCall(method, tuple(args))


class Manager:
    """Manager state plus the transaction processor handed to the chain."""

    def __init__(self, keyring: KeyRing | None, chain_params: ChainParams | None = None,
                 timeouts: Timeouts | None = None, header_lookup=None, vendor: PartyId | None = None):
        self.params = chain_params or ChainParams()
        self.timeouts = (timeouts or Timeouts()).resolved(self.params)
        self.keyring = keyring
        self.validator = Validator(keyring, self.params, self.timeouts)
        self._header = header_lookup
        self.vendor = vendor
        self.tees: list[PartyId] = []
        self._tee_set: set = set()
        self.contracts: dict[int, ManagerRecord] = {}
        self.paid: dict[PartyId, int] = {}
        self.payouts: dict[tuple, tuple] = {}   # (cid, p) -> withdrawals
        self.deposited: dict[int, int] = {}
        self.withdrawn: dict[int, int] = {}
        self.removed: dict[int, list] = {}      # enclaves ever dropped from a pool

    # -- state commitment --------------------------------------------------
    def state(self) -> tuple:
        return (
            tuple(self.tees),
            {cid: rec for cid, rec in self.contracts.items()},
            {p: v for p, v in self.paid.items()},
            {f"{c}:{p}": w for (c, p), w in self.payouts.items()},
        )

    def digest(self) -> bytes:
        return hash_value(self.state())

    def record(self, cid: int) -> ManagerRecord | None:
        return self.contracts.get(cid)

    # -- chain processor -----------------------------------------------------
    def process(self, tx: RelevantTx, height: int):
        """Apply ``tx`` at ``height``; returns ``(accepted, result, reason)``."""
        call_ = tx.call
        fn = getattr(self, "_do_" + getattr(call_, "method", ""), None)
        if fn is None:
            return False, None, "UnknownMethod"
        try:
            result = fn(tx, height, *call_.args)
        except ManagerError as exc:
            return False, None, exc.reason
        except (TypeError, IndexError, AttributeError, KeyError) as exc:
            return False, None, f"ParseError:{type(exc).__name__}"
        return True, result, ""

    def replay(self, tx: RelevantTx, height: int):
        """Apply an already-accepted transaction without re-checking it."""
        return getattr(self, "_fx_" + tx.call.method)(tx, height, *tx.call.args)

    def _require(self, case, msg, C, latest, code=None):
        ok, reason = self.validator.check(case, msg, C, latest, code)
        if not ok:
            raise ManagerError(reason, f"validate case {case}")

    def _rec(self, cid) -> ManagerRecord:
        C = self.contracts.get(cid) if isinstance(cid, int) else None
        if C is None:
            raise ManagerError("NoSuchContract", str(cid))
        return C

    # -- registration --------------------------------------------------------
    def _do_registerEnclave(self, tx, height, m):
        p = M.parse(m, M.REGISTER, 4)
        if p is None:
            raise ManagerError("ParseError")
        if not self.keyring.verify(m) or m.signer != tx.sender:
            raise ManagerError("BadSignature")
        _, enclave, quote, evidence = p
        q = M.parse(quote, M.QUOTE, 3)
        if (q is None or not self.keyring.verify(quote) or quote.signer != self.vendor
                or q[1] != enclave or q[2] != POSE_PROGRAM_DIGEST):
            raise ManagerError("BadAttestation")
        ev = M.parse(evidence, M.EVIDENCE, 3)
        if ev is None or evidence.signer != enclave or not self.keyring.verify(evidence):
            raise ManagerError("BadAttestation", "evidence")
        number, blockhash = ev[1], ev[2]
        if self._header is None or not 0 <= number < height:
            raise ManagerError("StaleEvidence", "unknown block")
        if self._header(number).digest() != blockhash:
            raise ManagerError("StaleEvidence", "block not on chain")
        if height - number > self.params.slack_on:
            raise ManagerError("StaleEvidence", f"{height - number} blocks old")
        if enclave in self._tee_set:
            raise ManagerError("AlreadyRegistered")
        return self._fx_registerEnclave(tx, height, m)

    def _fx_registerEnclave(self, tx, height, m):
        enclave = m[1]
        self.tees.append(enclave)
        self._tee_set.add(enclave)
        return enclave

    # -- creation ------------------------------------------------------------
    def _do_initCreation(self, tx, height, creator, code_hash):
        if creator not in self._tee_set:
            raise ManagerError("UnknownEnclave", repr(creator))
        if not isinstance(code_hash, bytes) or len(code_hash) != 32:
            raise ManagerError("ParseError", "code hash")
        return self._fx_initCreation(tx, height, creator, code_hash)

    def _fx_initCreation(self, tx, height, creator, code_hash):
        cid = 0
        while cid in self.contracts:
            cid += 1
        self.contracts[cid] = ManagerRecord(creator, code_hash, created_at=height)
        self.deposited[cid] = 0
        self.withdrawn[cid] = 0
        return cid

    def _do_finalizeCreation(self, tx, height, res):
        C = self._rec(res[1] if isinstance(res, Signed) else None)
        self._require(8, res, C, height)
        if M.parse(res, M.INIT, 3) is None:
            raise ManagerError("ParseError")
        pool = res[2]
        if not isinstance(pool, tuple) or len(set(pool)) != len(pool):
            raise ManagerError("ParseError", "pool")
        if not all(t in self._tee_set for t in pool):
            raise ManagerError("UnknownEnclave", "pool member")
        if C.pool is not None and not set(pool) <= set(C.pool):
            raise ManagerError("PoolGrows")
        return self._fx_finalizeCreation(tx, height, res)

    def _fx_finalizeCreation(self, tx, height, res):
        C = self.contracts[res[1]]
        if C.pool is not None:
            self._note_removed(res[1], [t for t in C.pool if t not in res[2]])
        C.creator = None
        C.pool = tuple(res[2])
        C.exec_chal = ExecChallenge()
        C.watch_chal = WatchChallenge()
        return res[1]

    def _do_reportCreationFailure(self, tx, height, res):
        C = self._rec(res[1] if isinstance(res, Signed) else None)
        self._require(8, res, C, height)
        if M.parse(res, M.FAIL, 2) is None:
            raise ManagerError("ParseError")
        return self._fx_reportCreationFailure(tx, height, res)

    def _fx_reportCreationFailure(self, tx, height, res):
        C = self.contracts[res[1]]
        C.creator = None
        C.pool = ()
        C.exec_chal = ExecChallenge()
        C.watch_chal = WatchChallenge()
        return res[1]

    def _do_challengeCreator(self, tx, height, m, code):
        cid = m[1] if isinstance(m, tuple) and len(m) == 3 else None
        C = self._rec(cid)
        self._require(7, m, C, height, code)
        return self._fx_challengeCreator(tx, height, m, code)

    def _fx_challengeCreator(self, tx, height, m, code):
        C = self.contracts[m[1]]
        C.exec_chal = ExecChallenge(msg=m, block=height)
        return m[1]

    def _do_creatorTimeout(self, tx, height, cid):
        C = self._rec(cid)
        self._require(9, None, C, height)
        return self._fx_creatorTimeout(tx, height, cid)

    def _fx_creatorTimeout(self, tx, height, cid):
        C = self.contracts[cid]
        if C.pool:
            self._note_removed(cid, list(C.pool))
        # the challenge block stays set so a late creation statement fails
        C.pool = ()
        return cid

    def _do_challengeWatchdogsCreation(self, tx, height, pre):
        C = self._rec(pre[1] if isinstance(pre, Signed) else None)
        self._require(10, pre, C, height)
        pool = pre[2]
        if not isinstance(pool, tuple) or len(set(pool)) != len(pool):
            raise ManagerError("ParseError", "pool")
        if not all(t in self._tee_set for t in pool):
            raise ManagerError("UnknownEnclave", "pool member")
        if C.pool is not None:
            raise ManagerError("PoolAlreadySet")
        return self._fx_challengeWatchdogsCreation(tx, height, pre)

    def _fx_challengeWatchdogsCreation(self, tx, height, pre):
        C = self.contracts[pre[1]]
        C.watch_chal = WatchChallenge(msg=pre, res=[], block=height)
        C.pool = tuple(pre[2])
        return pre[1]

    def _do_creationWatchdogResponse(self, tx, height, conf):
        C = self._rec(conf[1] if isinstance(conf, Signed) else None)
        self._require(11, conf, C, height)
        return self._fx_creationWatchdogResponse(tx, height, conf)

    def _fx_creationWatchdogResponse(self, tx, height, conf):
        C = self.contracts[conf[1]]
        if conf.signer not in C.watch_chal.responders():
            C.watch_chal.res.append(conf)
        return conf[1]

    def _do_creationWatchdogTimeout(self, tx, height, cid):
        C = self._rec(cid)
        self._require(12, None, C, height)
        return self._fx_creationWatchdogTimeout(tx, height, cid)

    def _fx_creationWatchdogTimeout(self, tx, height, cid):
        C = self.contracts[cid]
        ok = C.watch_chal.responders()
        kept = tuple(t for t in C.pool if t in ok)
        self._note_removed(cid, [t for t in C.pool if t not in ok])
        C.pool = kept
        C.watch_chal.msg = None
        C.watch_chal.block = None
        return cid

    # -- coin flow -----------------------------------------------------------
    def _do_deposit(self, tx, height, m):
        p = M.parse(m, M.DEPOSIT, 3)
        if p is None:
            raise ManagerError("ParseError")
        self._rec(p[1])
        if not self.keyring.verify(m) or m.signer != tx.sender:
            raise ManagerError("BadSignature")
        if not isinstance(p[2], int) or p[2] <= 0 or tx.value != p[2]:
            raise ManagerError("ValueMismatch")
        return self._fx_deposit(tx, height, m)

    def _fx_deposit(self, tx, height, m):
        C = self.contracts[m[1]]
        C.balance += m[2]
        self.deposited[m[1]] += m[2]
        return C.balance

    def _do_submitPayout(self, tx, height, m):
        p = M.parse(m, M.WITHDRAW, 4)
        if p is None:
            raise ManagerError("ParseError")
        C = self._rec(p[1])
        if not self.keyring.verify(m):
            raise ManagerError("BadSignature")
        if C.creator is not None or C.executor != m.signer:
            raise ManagerError("NotExecutor")
        if p[2] != C.payout_level:
            raise ManagerError("WrongLevel", f"{p[2]} != {C.payout_level}")
        withdrawals = p[3]
        if not isinstance(withdrawals, tuple) or not all(
                isinstance(w, tuple) and len(w) == 2 and isinstance(w[0], int) and w[0] > 0
                and isinstance(w[1], PartyId) for w in withdrawals):
            raise ManagerError("ParseError", "withdrawals")
        if sum(w[0] for w in withdrawals) > C.balance:
            raise ManagerError("Overdraw")
        return self._fx_submitPayout(tx, height, m)

    def _fx_submitPayout(self, tx, height, m):
        cid, level, withdrawals = m[1], m[2], m[3]
        C = self.contracts[cid]
        total = 0
        for coins, user in withdrawals:
            self.paid[user] = self.paid.get(user, 0) + coins
            total += coins
        C.balance -= total
        C.payout_level = level + 1
        self.withdrawn[cid] += total
        self.payouts[(cid, level)] = withdrawals
        return total

    # -- executor challenge --------------------------------------------------
    def _do_challengeExecutor(self, tx, height, m, wrap=None):
        C = self._rec(m[1] if isinstance(m, Signed) else None)
        self._require(1, m, C, height)
        if not C.pool:
            raise ManagerError("Crashed")
        return self._fx_challengeExecutor(tx, height, m, wrap)

    def _fx_challengeExecutor(self, tx, height, m, wrap=None):
        C = self.contracts[m[1]]
        C.exec_chal = ExecChallenge(msg=m, res=None, block=height, wrap=wrap)
        return m[1]

    def _do_executorResponse(self, tx, height, res):
        C = self._rec(res[1] if isinstance(res, Signed) else None)
        self._require(2, res, C, height)
        return self._fx_executorResponse(tx, height, res)

    def _fx_executorResponse(self, tx, height, res):
        C = self.contracts[res[1]]
        C.exec_chal.msg = None
        C.exec_chal.block = None
        C.exec_chal.res = res
        C.exec_chal.extension = 0
        C.exec_chal.watchdog_extensions = 0
        return res[1]

    def _do_executorTimeout(self, tx, height, cid):
        C = self._rec(cid)
        self._require(3, None, C, height)
        return self._fx_executorTimeout(tx, height, cid)

    def _fx_executorTimeout(self, tx, height, cid):
        C = self.contracts[cid]
        kicked = C.pool[0] if C.pool else None
        if C.pool:
            self._note_removed(cid, [kicked])
            C.pool = C.pool[1:]
        C.exec_chal.block = None
        C.exec_chal.extension = 0
        C.exec_chal.watchdog_extensions = 0
        return kicked

    # -- watchdog challenge --------------------------------------------------
    def _do_challengeWatchdogs(self, tx, height, pre):
        C = self._rec(pre[1] if isinstance(pre, Signed) else None)
        self._require(4, pre, C, height)
        return self._fx_challengeWatchdogs(tx, height, pre)

    def _fx_challengeWatchdogs(self, tx, height, pre):
        C = self.contracts[pre[1]]
        C.watch_chal = WatchChallenge(msg=pre, res=[], block=height)
        ec = C.exec_chal
        if (self.timeouts.dynamic and ec.block is not None
                and ec.watchdog_extensions < self.timeouts.max_watchdog_extensions):
            ec.extension += self.timeouts.watchdog_extension(self.params)
            ec.watchdog_extensions += 1
        return pre[1]

    def _do_watchdogResponse(self, tx, height, conf):
        C = self._rec(conf[1] if isinstance(conf, Signed) else None)
        self._require(5, conf, C, height)
        return self._fx_watchdogResponse(tx, height, conf)

    def _fx_watchdogResponse(self, tx, height, conf):
        C = self.contracts[conf[1]]
        if conf.signer not in C.watch_chal.responders():
            C.watch_chal.res.append(conf)
        return conf[1]

    def _do_watchdogTimeout(self, tx, height, cid):
        C = self._rec(cid)
        self._require(6, None, C, height)
        return self._fx_watchdogTimeout(tx, height, cid)

    def _fx_watchdogTimeout(self, tx, height, cid):
        C = self.contracts[cid]
        ok = C.watch_chal.responders()
        head = C.pool[0] if C.pool else None
        kept = tuple(t for t in C.pool if t in ok or t == head)
        dropped = [t for t in C.pool if t not in kept]
        self._note_removed(cid, dropped)
        C.pool = kept
        C.watch_chal.block = None
        ec = C.exec_chal
        if self.timeouts.dynamic and ec.block is not None and dropped:
            ec.extension += self.timeouts.kick_extension(self.params)
        return tuple(dropped)

    def _note_removed(self, cid, parties):
        if parties:
            self.removed.setdefault(cid, []).extend(parties)

    # -- queries used by agents ----------------------------------------------
    def exec_deadline_block(self, cid: int) -> int | None:
        C = self.contracts.get(cid)
        if C is None or C.exec_chal.block is None:
            return None
        if C.creator is not None:
            return C.exec_chal.block + self.validator.creation_deadline(C)
        return C.exec_chal.block + self.validator.exec_deadline(C)

    def watch_deadline_block(self, cid: int) -> int | None:
        C = self.contracts.get(cid)
        if C is None or C.watch_chal.block is None:
            return None
        delta = self.timeouts.creation_prop_on if C.creator is not None else self.timeouts.prop_on
        return C.watch_chal.block + delta
