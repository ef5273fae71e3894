"""Operators and users.

An operator hosts one enclave and plays whatever role that enclave has for
each contract: executor, watchdog, creator or pool member.  It retries
refused enclave calls on every block (views lag the chain by the finality
depth) and escalates on chain when off-chain timers run out.  A user runs
workload steps one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import messages as M
from ..contracts import code_by_name
from ..crypto import Signed, SymmetricKey, decrypt, encrypt, hash_bytes, message_hash
from ..encoding import decode, encode
from ..errors import CryptoError, EncodingError
from ..manager import call
from ..sync import SyncFeed

# refusals that may clear up once the view catches up
RETRY = {"NotExecutor", "NoInstance", "PropagationPending", "Halted", "StaleView", "NotSynced",
         "NotMember", "NotCreator"}
MAX_POSTS = 3


@dataclass
class ExecJob:
    m: Signed
    wrap: object
    h: bytes
    user_ep: str
    update: Signed | None = None
    confirms: dict = field(default_factory=dict)   # PartyId -> CONFIRM
    timer: int | None = None
    watch_needed: bool = False


@dataclass
class CreateJob:
    cid: int
    code: bytes
    init: Signed | None = None
    confirms: dict = field(default_factory=dict)
    timer: int | None = None
    watch_needed: bool = False
    statement: Signed | None = None


class Operator:
    def __init__(self, sim, index: int, pid, enclave, interposer):
        self.sim = sim
        self.index = index
        self.pid = pid
        self.ep = f"op{index}"
        self.enclave = enclave
        self.iface = interposer
        self.queues: dict[int, list] = {}
        self.current: dict[int, ExecJob] = {}
        self.ok_cache: dict[bytes, Signed] = {}
        self.confirm_cache: dict[tuple, Signed] = {}
        self.creation_confirms: dict[int, Signed] = {}
        self.pending_updates: list = []
        self.pending_inits: list = []
        self.create_jobs: dict[int, CreateJob] = {}
        self._posted: dict[tuple, str | None] = {}
        self._tries: dict[tuple, int] = {}
        self.side = None
        self.side_timer = None

    # -- plumbing --------------------------------------------------------------
    @property
    def me(self):
        return self.enclave.id

    def _invoke(self, op: str, fn, *args):
        before = len(self.enclave.log)
        out = fn(*args, self.sim.sched.now)
        self.sim.log_enclave(self, op, args, out, self.enclave.log[before:])
        return out

    def send(self, dst_ep: str, kind: str, body, cid) -> None:
        now = self.sim.sched.now
        if self.iface.drop_outgoing(kind, now):
            self.sim.trace.emit(now, "drop", src=self.ep, dst=dst_ep, kind=kind, cid=cid, side="out")
            return
        self.sim.send(self.ep, dst_ep, kind, body, cid, extra_delay=self.iface.out_delay(now))

    def post(self, key: tuple, method: str, *args) -> bool:
        """Submit a manager call once per ``key``; a rejected call may be retried."""
        if not self.iface.answers_onchain(self.sim.sched.now):
            return False
        if self._posted.get(key) in ("pending", "done") or self._tries.get(key, 0) >= MAX_POSTS:
            return False
        self._tries[key] = self._tries.get(key, 0) + 1
        self._posted[key] = "pending"

        def done(receipt, key=key):
            self._posted[key] = "done" if receipt.accepted else None

        self.sim.submit(self.pid, self.ep, call(method, *args), on_receipt=done)
        return True

    def record(self, cid):
        return self.sim.manager.record(cid)

    def mirror_pool(self, cid) -> tuple:
        rec = self.enclave.mirror.record(cid)
        return tuple(rec.pool or ()) if rec else ()

    def busy(self) -> bool:
        return bool(any(self.queues.values()) or self.current or self.pending_updates
                    or self.pending_inits or self.create_jobs)

    # -- chain feed --------------------------------------------------------------
    def feed(self) -> None:
        sim = self.sim
        now = sim.sched.now
        pol = self.iface.policy
        if self.iface.active(now) and pol.sidechain and now >= pol.sidechain["start"]:
            self._feed_side(now)
            return
        if not self.iface.feeds_at(sim.chain.tip, now):
            return
        view = self.enclave.view
        chain = sim.chain
        start = view.final_height + 1
        new_final = chain.tip - chain.gamma
        txs = [] if self.iface.active(now) and pol.omit_txs else chain.relevant_txs(start, new_final)
        proofs = {n: chain.prove_incr_hash(n) for n in range(start, new_final + 1)}
        feed = SyncFeed(chain.header_range(start, chain.tip), txs, proofs)
        self._ingest(feed, now)

    def _feed_side(self, now: int) -> None:
        if self.side is None:
            self.side = self.sim.chain.fork(self.sim.chain.tip)
            self.side_timer = self.sim.sched.after(self.iface.policy.sidechain["interval"], self._mine_side)
        view = self.enclave.view
        start = view.final_height + 1
        if start > self.side.tip:
            return
        new_final = self.side.tip - self.side.gamma
        proofs = {n: self.side.prove_incr_hash(n) for n in range(start, new_final + 1)}
        self._ingest(SyncFeed(self.side.header_range(start, self.side.tip), [], proofs), now)

    def _mine_side(self) -> None:
        self.side.mine_block(self.sim.sched.now)
        self.sim.trace.emit(self.sim.sched.now, "side_block", op=self.ep, n=self.side.tip)
        if not self.sim.stopped:
            self.side_timer = self.sim.sched.after(self.iface.policy.sidechain["interval"], self._mine_side)

    def _ingest(self, feed, now) -> None:
        view = self.enclave.view
        before = (view.tip, view.final_height)
        err = self.enclave.ingest(feed, now)
        if err:
            self.sim.trace.emit(now, "sync_reject", enc=self.me.short, reason=err,
                                tip=view.tip, final=view.final_height, before=list(before))

    # -- off-chain inbox ---------------------------------------------------------
    def receive(self, kind: str, body, src: str, cid) -> None:
        now = self.sim.sched.now
        if self.iface.drop_incoming(kind, now):
            self.sim.trace.emit(now, "drop", src=src, dst=self.ep, kind=kind, cid=cid, side="in")
            return
        if kind == M.EXECUTE:
            m, wrap = body
            self._capture(m, wrap, src)
            self.queue_execute(m, wrap, src)
        elif kind == M.UPDATE:
            self.on_update(body, src)
        elif kind == M.CONFIRM:
            self.on_confirm(body)
        elif kind == M.CREATE:
            cid, code = body
            self.on_create(cid, code)
        elif kind == M.INIT:
            self.on_init(body, src)
        elif kind == "CREATION_CONFIRM":
            self.on_creation_confirm(body)

    def _capture(self, m, wrap, src):
        pol = self.iface.policy
        if self.iface.active(self.sim.sched.now) and pol.replay:
            self.sim.sched.after(pol.replay.get("after", 60), self._replay, m, wrap, src)

    def _replay(self, m, wrap, src):
        rec = self.record(m[1])
        if rec is None or not rec.pool:
            return
        target = self.sim.op_of(rec.pool[0])
        self.sim.trace.emit(self.sim.sched.now, "replay", op=self.ep, cid=m[1],
                            req=message_hash(m).hex())
        self.sim.send(self.ep, target.ep, M.EXECUTE, (m, wrap), m[1])

    # -- executor ----------------------------------------------------------------
    def queue_execute(self, m, wrap, user_ep: str, front: bool = False) -> None:
        if M.parse(m, M.EXECUTE, 4) is None:
            return
        cid = m[1]
        h = message_hash(m)
        q = self.queues.setdefault(cid, [])
        cur = self.current.get(cid)
        if cur is not None and cur.h == h:
            return
        for job in q:
            if job.h == h:
                if front:
                    q.remove(job)
                    q.insert(0, job)
                return
        job = ExecJob(m, wrap, h, user_ep)
        q.insert(0, job) if front else q.append(job)
        self.pump(cid)

    def pump(self, cid: int) -> None:
        q = self.queues.get(cid)
        while q and cid not in self.current:
            job = q[0]
            out = self._invoke("execute", self.enclave.handle_execute, job.m, job.wrap)
            if isinstance(out, M.Bad):
                if out.cause in RETRY:
                    return
                q.pop(0)
                continue
            q.pop(0)
            job.update = out
            self.current[cid] = job
            watchdogs = [p for p in self.mirror_pool(cid) if p != self.me]
            if not watchdogs:
                self.finish(cid)
                continue
            now = self.sim.sched.now
            for p in self.iface.update_targets(watchdogs, now):
                self.send(self.sim.op_of(p).ep, M.UPDATE, out, cid)
            self.iface.after_update(now)
            job.timer = self.sim.sched.after(self.sim.timeouts.prop_off, self.prop_timeout, cid, job.h)

    def on_confirm(self, conf) -> None:
        p = M.parse(conf, M.CONFIRM, 3)
        if p is None:
            return
        job = self.current.get(p[1])
        if job is None or p[2] != job.h:
            return
        job.confirms.setdefault(conf.signer, conf)
        self._maybe_finish(p[1])

    def _maybe_finish(self, cid) -> None:
        job = self.current.get(cid)
        if job is None:
            return
        need = {p for p in self.mirror_pool(cid) if p != self.me}
        if need <= set(job.confirms):
            self.finish(cid)

    def finish(self, cid: int) -> bool:
        job = self.current[cid]
        confs = list(job.confirms.values())
        out = self._invoke("confirms", self.enclave.handle_confirms, cid, confs)
        if isinstance(out, M.Bad):
            return False
        self.sim.sched.cancel(job.timer)
        del self.current[cid]
        self.ok_cache[job.h] = out
        self.send(job.user_ep, M.OK, out, cid)
        self._respond_challenge(cid)
        self.pump(cid)
        return True

    def prop_timeout(self, cid: int, h: bytes) -> None:
        job = self.current.get(cid)
        if job is None or job.h != h:
            return
        job.watch_needed = True
        self._watch_step(cid, job)

    def _watch_step(self, cid, job) -> None:
        wc = self.record(cid).watch_chal
        if wc.msg == job.update:
            for conf in wc.res:
                job.confirms.setdefault(conf.signer, conf)
        elif wc.block is None:
            self.post(("watch", cid, job.h), "challengeWatchdogs", job.update)

    def _respond_challenge(self, cid) -> None:
        rec = self.record(cid)
        ec = rec.exec_chal
        if ec.block is None or ec.msg is None or rec.executor != self.me:
            return
        ok = self.ok_cache.get(message_hash(ec.msg))
        if ok is not None:
            self.post(("resp", cid, ec.block), "executorResponse", ok)

    # -- watchdog ----------------------------------------------------------------
    def on_update(self, u, src: str) -> None:
        out = self._invoke("update", self.enclave.handle_update, u)
        if isinstance(out, M.Bad):
            if out.cause in RETRY and all(x[0] is not u for x in self.pending_updates):
                self.pending_updates.append((u, src))
            return
        self.confirm_cache[(u[1], u[3])] = out
        self.send(src, M.CONFIRM, out, u[1])

    # -- creator -----------------------------------------------------------------
    def on_create(self, cid: int, code: bytes) -> None:
        if cid not in self.create_jobs:
            self.create_jobs[cid] = CreateJob(cid, code)
        self._pump_create(cid)

    def _pump_create(self, cid) -> None:
        job = self.create_jobs[cid]
        if job.init is not None or job.statement is not None:
            return
        out = self._invoke("create", self.enclave.handle_create, (M.CREATE, cid, job.code), self.sim.scenario.s)
        if isinstance(out, M.Bad):
            if out.cause not in RETRY:
                del self.create_jobs[cid]
            return
        if out.kind == M.FAIL:
            job.statement = out
            self.post(("final", cid), "reportCreationFailure", out)
            return
        job.init = out
        for p in out[2]:
            self.send(self.sim.op_of(p).ep, M.INIT, out, cid)
        job.timer = self.sim.sched.after(self.sim.timeouts.creation_prop_off, self._creation_timeout, cid)

    def on_creation_confirm(self, conf) -> None:
        p = M.parse(conf, M.CONFIRM, 2)
        job = self.create_jobs.get(p[1]) if p else None
        if job is None or job.init is None:
            return
        job.confirms.setdefault(conf.signer, conf)
        if set(job.init[2]) <= set(job.confirms):
            self._finish_create(job.cid)

    def _finish_create(self, cid) -> bool:
        job = self.create_jobs[cid]
        out = self._invoke("creation_confirms", self.enclave.handle_creation_confirms, cid,
                           list(job.confirms.values()))
        if isinstance(out, M.Bad):
            return False
        self.sim.sched.cancel(job.timer)
        job.statement = out
        self.post(("final", cid), "finalizeCreation", out)
        return True

    def _creation_timeout(self, cid) -> None:
        job = self.create_jobs.get(cid)
        if job is None or job.statement is not None:
            return
        job.watch_needed = True
        rec = self.record(cid)
        if rec.watch_chal.block is None and rec.pool is None:
            self.post(("cwatch", cid), "challengeWatchdogsCreation", job.init)

    # -- pool member -------------------------------------------------------------
    def on_init(self, init, src: str) -> None:
        cid = init[1] if M.parse(init, M.INIT, 5) else None
        if cid in self.creation_confirms:
            self.send(src, "CREATION_CONFIRM", self.creation_confirms[cid], cid)
            return
        out = self._invoke("init", self.enclave.handle_init, init)
        if isinstance(out, M.Bad):
            if out.cause in RETRY and all(x[0] is not init for x in self.pending_inits):
                self.pending_inits.append((init, src))
            return
        self.creation_confirms[cid] = out
        self.send(src, "CREATION_CONFIRM", out, cid)

    # -- per-block duties ----------------------------------------------------------
    def on_block(self) -> None:
        chain_tip = self.sim.chain.tip
        # retries of refused off-chain work
        updates, self.pending_updates = self.pending_updates, []
        for u, src in updates:
            rec = self.record(u[1])
            if rec is not None and rec.executor == u.signer and self.me in rec.pool:
                self.on_update(u, src)
        inits, self.pending_inits = self.pending_inits, []
        for init, src in inits:
            rec = self.record(init[1])
            if rec is not None and rec.creator is not None and not rec.crashed:
                self.on_init(init, src)
        for cid in sorted(self.create_jobs):
            self._creator_duty(cid)
        for cid in sorted(set(self.queues) | set(self.current)):
            self._executor_duty(cid)
        for cid in sorted(self.sim.manager.contracts):
            self._challenge_duty(cid, chain_tip)

    def _executor_duty(self, cid) -> None:
        rec = self.record(cid)
        if rec is None or rec.creator is not None:
            return
        if rec.executor != self.me:
            # kicked, or someone else serves this contract now
            job = self.current.pop(cid, None)
            if job is not None:
                self.sim.sched.cancel(job.timer)
            self.queues.pop(cid, None)
            return
        job = self.current.get(cid)
        if job is not None:
            if job.watch_needed:
                self._watch_step(cid, job)
            self._maybe_finish(cid)
        if cid not in self.current:
            self.pump(cid)

    def _mirror_head(self, cid) -> bool:
        pool = self.mirror_pool(cid)
        return bool(pool) and pool[0] == self.me

    def _creator_duty(self, cid) -> None:
        job = self.create_jobs[cid]
        rec = self.record(cid)
        if rec is None:
            return
        if rec.creator is None or rec.crashed:
            self.sim.sched.cancel(job.timer)
            del self.create_jobs[cid]
            return
        if job.statement is not None:
            kind = "reportCreationFailure" if job.statement.kind == M.FAIL else "finalizeCreation"
            self.post(("final", cid), kind, job.statement)
            return
        if job.init is None:
            self._pump_create(cid)
            return
        wc = rec.watch_chal
        if job.watch_needed and wc.msg == job.init:
            for conf in wc.res:
                job.confirms.setdefault(conf.signer, conf)
            if wc.block is not None and self.sim.chain.tip >= wc.block + self.sim.timeouts.creation_prop_on:
                self.post(("ctimeout", cid), "creationWatchdogTimeout", cid)
        mirror = self.enclave.mirror.record(cid)
        need = set(job.init[2]) if mirror is None or mirror.pool is None else set(mirror.pool)
        if need <= set(job.confirms):
            self._finish_create(cid)

    def _challenge_duty(self, cid, tip) -> None:
        rec = self.record(cid)
        me = self.me
        pool = rec.pool or ()
        if me not in pool and rec.creator != me:
            return
        ec, wc = rec.exec_chal, rec.watch_chal
        if rec.creator is None:
            # executor challenge aimed at us
            if ec.block is not None and rec.executor == me and self.iface.answers_onchain(self.sim.sched.now):
                h = message_hash(ec.msg)
                if h in self.ok_cache:
                    self._respond_challenge(cid)
                else:
                    self.queue_execute(ec.msg, ec.wrap, self.sim.user_ep(ec.msg.signer), front=True)
            # watchdog challenge: answer as a watchdog, close it as the executor
            if wc.block is not None:
                if me != rec.executor and me not in wc.responders():
                    conf = self.confirm_cache.get((cid, wc.msg[3]))
                    if conf is None and self.iface.answers_onchain(self.sim.sched.now):
                        conf = self._invoke("update", self.enclave.handle_update, wc.msg)
                        if isinstance(conf, M.Bad):
                            conf = None
                        else:
                            self.confirm_cache[(cid, wc.msg[3])] = conf
                    if conf is not None:
                        self.post(("wresp", cid, wc.block), "watchdogResponse", conf)
                if me == rec.executor and tip >= wc.block + self.sim.timeouts.prop_on:
                    self.post(("wtimeout", cid, wc.block), "watchdogTimeout", cid)
            return
        # creation phase
        if ec.block is not None and rec.creator == me and cid not in self.create_jobs and not rec.crashed:
            self.on_create(cid, ec.msg[2])
        if wc.block is not None and me in pool and me not in wc.responders():
            conf = self.creation_confirms.get(cid)
            if conf is None and self.iface.answers_onchain(self.sim.sched.now):
                out = self._invoke("init", self.enclave.handle_init, wc.msg)
                if not isinstance(out, M.Bad):
                    conf = self.creation_confirms[cid] = out
            if conf is not None:
                self.post(("cresp", cid, wc.block), "creationWatchdogResponse", conf)


@dataclass
class Request:
    cid: int
    move: tuple
    m: Signed
    h: bytes
    key: SymmetricKey
    started: int
    secrets: list
    wrap: object = None
    timer: int | None = None
    attempts: int = 1
    challenged: bool = False
    executor: object = None


class User:
    def __init__(self, sim, index: int, pid, rng):
        self.sim = sim
        self.index = index
        self.pid = pid
        self.ep = f"u{index}"
        self.rng = rng
        self.nonce = 0
        self.req: Request | None = None
        self.payout: Signed | None = None     # latest payout statement seen in an OK
        self.payouts: list[Signed] = []
        self.create_tried: tuple = ()
        self.step = None
        self.wait = None                      # (kind, data) for block-driven steps
        self._posted: set = set()

    # -- helpers -----------------------------------------------------------------
    def post(self, key, method, *args, value=0, on_receipt=None) -> None:
        if key in self._posted:
            return
        self._posted.add(key)

        def done(receipt):
            if not receipt.accepted and on_receipt is None:
                self._posted.discard(key)
            if on_receipt is not None:
                on_receipt(receipt)

        self.sim.submit(self.pid, self.ep, call(method, *args), value=value, on_receipt=done)

    def _done(self, **info) -> None:
        self.step = None
        self.wait = None
        self.sim.step_done(self, info)

    def _materialize(self, move) -> tuple:
        out = []
        for x in move:
            if x == "$salt":
                out.append(self.rng.randbytes(16))
            elif isinstance(x, str) and x.startswith("$user:"):
                out.append(self.sim.users[int(x[6:])].pid.ident.hex())
            elif isinstance(x, list):
                out.append(self._materialize(x))
            else:
                out.append(x)
        return tuple(out)

    # -- steps -------------------------------------------------------------------
    def begin(self, step: dict) -> None:
        self.step = step
        op = step["op"]
        getattr(self, "_begin_" + op)(step)

    def _begin_wait(self, step) -> None:
        self.sim.sched.after(step["seconds"], self._done)

    def _begin_create(self, step, creator=None, tried=()) -> None:
        code = code_by_name(step.get("contract", self.sim.scenario.contract))
        creator = creator or self.sim.creator_enclave
        self.create_tried = tuple(tried) + (creator,)

        def created(receipt):
            if not receipt.accepted:
                self._done(failed=receipt.reason)
                return
            cid = receipt.result
            self.sim.register_contract(cid, creator, code)
            self.sim.send(self.ep, self.sim.op_of(creator).ep, M.CREATE, (cid, code), cid)
            self.wait = ("create", (cid, code))
            self.sim.sched.after(self.sim.timeouts.creation_off, self._creation_timeout, cid, code)

        self.post(("init", self.sim.step_index, len(self.create_tried)), "initCreation", creator, hash_bytes(code),
                  on_receipt=created)

    def _creation_timeout(self, cid, code) -> None:
        if self.wait is None or self.wait[0] != "create" or self.wait[1][0] != cid:
            return
        rec = self.sim.manager.record(cid)
        if rec.creator is not None and not rec.crashed:
            self.post(("cchal", cid), "challengeCreator", (M.CREATE, cid, code), code)

    def _cid(self, step) -> int | None:
        cids = self.sim.contract_ids
        k = step.get("contract_index", -1)      # default: the most recently created contract
        return cids[k] if -len(cids) <= k < len(cids) else None

    def _begin_deposit(self, step) -> None:
        cid = self._cid(step)
        if cid is None:
            self._done(failed="NoContract")
            return
        msg = self.sim.keyring.sign(self.pid, M.DEPOSIT, cid, step["coins"])

        def included(receipt):
            if not receipt.accepted:
                self._done(failed=receipt.reason)
            else:
                self.wait = ("final", receipt.height)

        self.post(("dep", self.sim.step_index), "deposit", msg, value=step["coins"], on_receipt=included)

    def _begin_payout(self, step) -> None:
        cid = self._cid(step)
        rec = self.sim.manager.record(cid) if cid is not None else None
        stmt = self.payout
        if step.get("stale") and self.payouts:
            # deliberately resubmit the oldest statement; the manager must refuse a spent level
            stmt = self.payouts[0]
        elif rec is None or stmt is None or stmt[1] != cid or stmt[2] != rec.payout_level or not stmt[3]:
            self.sim.trace.emit(self.sim.sched.now, "payout_skip", user=self.ep, cid=cid)
            self._done(skipped=True)
            return

        def included(receipt):
            if not receipt.accepted:
                self._done(failed=receipt.reason)
            else:
                self.wait = ("final", receipt.height)

        self.post(("pay", self.sim.step_index), "submitPayout", stmt, on_receipt=included)

    def _begin_execute(self, step) -> None:
        cid = self._cid(step)
        sim = self.sim
        if cid is None:
            self._done(failed="NoContract")
            return
        move = self._materialize(step["move"])
        self.nonce += 1
        secret = self.rng.randbytes(32)
        key = SymmetricKey(hash_bytes(b"user-key" + secret), secret)
        move_ct = encrypt(key, encode(move))
        m = sim.keyring.sign(self.pid, M.EXECUTE, cid, self.nonce, move_ct)
        secrets = [x.hex() for x in move if isinstance(x, bytes) and len(x) >= 8]
        self.req = Request(cid, move, m, message_hash(m), key, sim.sched.now, secrets)
        sim.trace.emit(sim.sched.now, "request", user=self.ep, cid=cid, req=self.req.h.hex(),
                       secrets=secrets)
        self._send_request()

    def _send_request(self) -> None:
        sim = self.sim
        req = self.req
        rec = sim.manager.record(req.cid)
        if rec is None or not rec.live:
            self._fail("ContractCrashed" if rec is not None and rec.crashed else "NotLive")
            return
        req.executor = rec.executor
        req.wrap = encrypt(sim.keyring.public_key(rec.executor), encode(req.key))
        sim.send(self.ep, sim.op_of(rec.executor).ep, M.EXECUTE, (req.m, req.wrap), req.cid)
        wait = sim.timeouts.client_exec_off(sim.params, rec.exec_chal.block is not None)
        req.timer = sim.sched.after(wait, self._exec_timeout, req.h)

    def _exec_timeout(self, h) -> None:
        req = self.req
        if req is None or req.h != h:
            return
        req.challenged = True
        self._challenge_step()

    def _challenge_step(self) -> None:
        req = self.req
        sim = self.sim
        rec = sim.manager.record(req.cid)
        if not rec.live:
            self._fail("ContractCrashed")
            return
        ec = rec.exec_chal
        ours = ec.msg is not None and message_hash(ec.msg) == req.h
        # a response clears msg, so it is matched through the hash it answers
        if ec.res is not None and ec.block is None and M.parse(ec.res, M.OK, 4) and ec.res[3] == req.h:
            self.on_ok(ec.res, via="onchain")
            return
        if ec.block is None:
            if ours and rec.executor != req.executor:
                # executor was kicked: restart with the same request
                req.attempts += 1
                sim.trace.emit(sim.sched.now, "resend", user=self.ep, cid=req.cid, req=req.h.hex(),
                               attempt=req.attempts)
                req.challenged = False
                self._send_request()
                return
            key = ("xchal", req.h, req.attempts)
            if key not in self._posted:
                wrap = encrypt(sim.keyring.public_key(rec.executor), encode(req.key))
                req.executor = rec.executor
                self.post(key, "challengeExecutor", req.m, wrap)
            return
        if ours:
            deadline = sim.manager.exec_deadline_block(req.cid)
            if deadline is not None and sim.chain.tip >= deadline:
                self.post(("xtimeout", req.h, ec.block), "executorTimeout", req.cid)

    def on_ok(self, ok, via: str = "offchain") -> None:
        req = self.req
        p = M.parse(ok, M.OK, 4)
        if req is None or p is None or p[1] != req.cid or p[3] != req.h or not self.sim.keyring.verify(ok):
            return
        try:
            bundle = decode(p[2])
            result = None
            if bundle.get("result") is not None:
                result = decode(decrypt(req.key, bundle["result"]))
        except (CryptoError, EncodingError, AttributeError):
            return
        payout = bundle.get("payout")
        if isinstance(payout, Signed):
            self.payout = payout
            if payout[3] and payout not in self.payouts:
                self.payouts.append(payout)
        self.sim.sched.cancel(req.timer)
        self.sim.request_finished(self, req, via=via, executor=ok.signer, result=result)
        self.req = None
        self._done(req=req.h.hex())

    def _fail(self, reason: str) -> None:
        req = self.req
        self.sim.sched.cancel(req.timer)
        self.sim.trace.emit(self.sim.sched.now, "request_failed", user=self.ep, cid=req.cid,
                            req=req.h.hex(), reason=reason)
        self.req = None
        self._done(failed=reason)

    def receive(self, kind, body, src, cid) -> None:
        if kind == M.OK:
            self.on_ok(body)

    def on_block(self) -> None:
        sim = self.sim
        if self.req is not None and self.req.challenged:
            self._challenge_step()
        if self.wait is None:
            return
        kind, data = self.wait
        if kind == "final" and sim.chain.is_final(data):
            self._done()
        elif kind == "create":
            cid, code = data
            rec = sim.manager.record(cid)
            if rec.creator is None or rec.crashed:
                step = sim.scenario.workload[sim.step_index]
                if rec.crashed and len(self.create_tried) <= step.get("retries", 0):
                    # creation failed: ask a different enclave to create the contract
                    fresh = [t for t in sim.manager.tees if t not in self.create_tried]
                    if fresh:
                        sim.trace.emit(sim.sched.now, "create_retry",
                                       user=self.ep, failed=cid)
                        self.wait = None
                        self._begin_create(step, self.rng.choice(fresh), self.create_tried)
                        return
                self._done(cid=cid, crashed=rec.crashed)
                return
            ec = rec.exec_chal
            if ec.block is not None:
                deadline = sim.manager.exec_deadline_block(cid)
                if sim.chain.tip >= deadline:
                    self.post(("ctimeout", cid), "creatorTimeout", cid)
