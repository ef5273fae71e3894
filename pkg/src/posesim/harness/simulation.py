"""Wires a scenario into a running system and records the trace."""

from __future__ import annotations

import random
from dataclasses import replace

from .. import messages as M
from ..chain import Chain, RelevantTx
from ..contracts import ChainData, ContractInstance, contract_for_code
from ..crypto import Kind, KeyRing, Signed, hash_bytes, hash_value, message_hash
from ..encoding import encode
from ..errors import PoseError
from ..enclave import install, sample_pool
from ..manager import Manager
from .adversary import Interposer
from .agents import Operator, User
from .scenario import Scenario
from .scheduler import Scheduler
from .trace import TraceWriter


def call_cid(call_, result=None):
    """Contract id a manager call refers to, or None for registrations."""
    method, args = call_.method, call_.args
    if method == "registerEnclave":
        return None
    if method == "initCreation":
        return result
    if method in ("executorTimeout", "watchdogTimeout", "creatorTimeout", "creationWatchdogTimeout"):
        return args[0] if args and isinstance(args[0], int) else None
    first = args[0] if args else None
    if isinstance(first, Signed):
        return first[1] if isinstance(first.payload, tuple) and len(first.payload) > 1 else None
    if isinstance(first, tuple) and len(first) == 3:
        return first[1]
    return None


def request_bound(scenario: Scenario) -> int:
    """Upper bound (seconds) on a request's lifetime with an honest user.

    Each attempt waits the client timeout, then an executor challenge runs
    to its deadline (including every dynamic extension), the timeout tx is
    included and the kick becomes final.  At most ``s`` executors can be
    kicked.
    """
    params = scenario.chain_params()
    t = scenario.timeout_config()
    if t.dynamic:
        blocks = (t.dynamic_exec_on(params) + t.max_watchdog_extensions * t.watchdog_extension(params)
                  + scenario.s * t.kick_extension(params))
    else:
        blocks = t.exec_on
    blocks += 2 * params.alpha + params.gamma + 2
    per_attempt = t.exec_off + t.max_delay + blocks * params.tau_max
    return scenario.s * per_attempt + per_attempt


class Simulation:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        scenario.validate()
        if seed is not None:
            scenario = replace(scenario, seed=seed)
        self.scenario = scenario
        self.params = scenario.chain_params()
        self.timeouts = scenario.timeout_config()
        self.rng = random.Random(scenario.seed)
        seed_bytes = scenario.seed.to_bytes(8, "big")
        self.keyring = KeyRing(seed_bytes)
        self.vendor = self.keyring.new_party(Kind.VENDOR, "vendor")
        self.sched = Scheduler()
        self.trace = TraceWriter()
        self.manager = Manager(self.keyring, self.params, self.timeouts,
                               header_lookup=lambda n: self.chain.header(n), vendor=self.vendor)
        self.chain = Chain(self.params.gamma, self.params.alpha, self.params.tau_avg,
                           processor=self.manager.process, rest_digest=self.manager.digest)
        self.operators: list[Operator] = []
        self._by_enclave = {}
        entries = scenario.adversaries()
        self._pending_adv = []
        direct = {}
        for e in entries:
            if e.who.startswith("op:"):
                direct[int(e.who[3:])] = e.policy
            else:
                self._pending_adv.append(e)
        for i in range(scenario.n):
            pid = self.keyring.new_party(Kind.OPERATOR, f"op{i}")
            enclave, quote = install(self.keyring, self.vendor, f"tee{i}", self.params, self.timeouts,
                                     pool_seed=seed_bytes, budget=scenario.budget)
            op = Operator(self, i, pid, enclave, Interposer(direct.get(i)))
            op.quote = quote
            self.operators.append(op)
            self._by_enclave[enclave.id] = op
        self.users = []
        for i in range(scenario.users):
            pid = self.keyring.new_party(Kind.USER, f"user{i}")
            self.users.append(User(self, i, pid, random.Random(hash_value((scenario.seed, "user", i)))))
        self._user_by_ident = {u.pid.ident: u for u in self.users}
        self._eps = {op.ep: op for op in self.operators}
        self._eps.update({u.ep: u for u in self.users})
        self._callbacks = {}
        self.contract_ids: list[int] = []
        self.contract_info: dict[int, dict] = {}
        self.completed: dict[int, list] = {}     # cid -> [(user pid, move, h)]
        self.exec_records: list = []             # (cid, enclave, h, dummy, height)
        self.step_index = -1
        self.stage = "setup"
        self.stopped = False
        self.inflight = 0
        self.creator_enclave = None
        self.violations: list = []
        self._registrations = {}

    # -- services used by agents ---------------------------------------------------
    def op_of(self, enclave_id) -> Operator:
        return self._by_enclave[enclave_id]

    def user_ep(self, user_pid) -> str:
        u = self._user_by_ident.get(user_pid.ident)
        return u.ep if u else "nobody"

    def _visible(self, src: str, dst: str) -> bool:
        for ep in (src, dst):
            node = self._eps.get(ep)
            if isinstance(node, Operator) and node.iface.byzantine:
                return True
        return False

    def send(self, src: str, dst: str, kind: str, body, cid, extra_delay: int = 0) -> None:
        now = self.sched.now
        fields = {"src": src, "dst": dst, "kind": kind, "cid": cid}
        if self._visible(src, dst):
            fields["data"] = encode(body).hex()
        self.trace.emit(now, "send", **fields)
        self.inflight += 1
        self.sched.after(self.scenario.network_delay + extra_delay, self._deliver, dst, kind, body, src, cid)

    def _deliver(self, dst, kind, body, src, cid) -> None:
        self.inflight -= 1
        node = self._eps.get(dst)
        if node is not None:
            node.receive(kind, body, src, cid)

    def submit(self, sender_pid, who: str, call_, value: int = 0, on_receipt=None) -> None:
        tx = RelevantTx(call_, sender_pid, value)
        ticket = self.chain.submit_tx(tx, self.scenario.inclusion_delay)
        self._callbacks[ticket.seq] = on_receipt
        self.trace.emit(self.sched.now, "submit", who=who, method=call_.method,
                        cid=call_cid(call_), target=ticket.target)

    def log_enclave(self, op: Operator, name: str, args, out, entries) -> None:
        fields = {"enc": op.me.short, "op": name}
        cid = None
        if args and isinstance(args[0], Signed) and isinstance(args[0].payload, tuple) and len(args[0].payload) > 1:
            cid = args[0][1]
            if name == "execute" and M.parse(args[0], M.EXECUTE, 4):
                fields["req"] = message_hash(args[0]).hex()
            elif name == "update" and M.parse(args[0], M.UPDATE, 4):
                fields["req"] = args[0][3].hex()
        elif args and isinstance(args[0], int):
            cid = args[0]
        elif args and isinstance(args[0], tuple) and len(args[0]) == 3:
            cid = args[0][1]
        fields["cid"] = cid
        if isinstance(out, M.Bad):
            fields["bad"] = out.cause
        else:
            fields["out"] = out.kind
            if out.kind == M.OK:
                fields["req"] = out[3].hex()
                fields["pool"] = [p.short for p in op.mirror_pool(cid)]
            elif out.kind == M.CONFIRM and len(out.payload) == 3:
                fields["req"] = out[2].hex()
            elif out.kind == M.INIT and len(out.payload) >= 3:
                fields["pool"] = [p.short for p in out[2]]
            if name == "execute":
                slot = op.enclave.slots[cid]
                h, dummy, height = slot.last_exec
                fields["dummy"] = dummy
                fields["height"] = height
                self.exec_records.append((cid, op.me, h, dummy, height))
        self.trace.emit(self.sched.now, "enclave", **fields)

    def register_contract(self, cid: int, creator, code: bytes) -> None:
        self.contract_ids.append(cid)
        pool = sample_pool(self.manager.tees, self.scenario.s, self.scenario.seed.to_bytes(8, "big"),
                           cid, creator)
        self.contract_info[cid] = {"code": code, "creator": creator, "expected_pool": pool}
        self.trace.emit(self.sched.now, "contract", cid=cid, creator=creator.short,
                        expected_pool=[p.short for p in pool])

    def request_finished(self, user: User, req, via: str, executor, result) -> None:
        self.completed.setdefault(req.cid, []).append((user.pid, req.move, req.h))
        self.trace.emit(self.sched.now, "request_done", user=user.ep, cid=req.cid, req=req.h.hex(),
                        latency=self.sched.now - req.started, via=via, executor=executor.short,
                        attempts=req.attempts, result=repr(result))

    # -- workload --------------------------------------------------------------------
    def step_done(self, user: User, info: dict) -> None:
        step = self.scenario.workload[self.step_index]
        self.trace.emit(self.sched.now, "step_done", index=self.step_index, op=step["op"],
                        user=user.ep, **{k: v for k, v in info.items() if isinstance(v, (int, str, bool))})
        self.sched.after(0, self._next_step)

    def _next_step(self) -> None:
        self.step_index += 1
        if self.step_index >= len(self.scenario.workload):
            self.stage = "drain"
            return
        step = self.scenario.workload[self.step_index]
        user = self.users[step.get("user", 0)]
        self.trace.emit(self.sched.now, "step", index=self.step_index, op=step["op"], user=user.ep)
        user.begin(step)

    # -- block production ----------------------------------------------------------------
    def _mine(self) -> None:
        if self.stopped:
            return
        now = self.sched.now
        header = self.chain.mine_block(now - self.chain.latest.timestamp)
        blk = self.chain.block(header.number)
        self.trace.emit(now, "block", n=header.number)
        for r in blk.receipts:
            cid = call_cid(r.tx.call, r.result)
            fields = {"n": header.number, "method": r.tx.method, "cid": cid, "accepted": r.accepted,
                      "reason": r.reason, "value": r.tx.value, "data": r.tx.data.hex()}
            if r.tx.method == "submitPayout" and r.accepted:
                m = r.tx.call.args[0]
                fields["level"] = m[2]
                fields["total"] = sum(c for c, _ in m[3])
            self.trace.emit(now, "tx", **fields)
            cb = self._callbacks.pop(r.seq, None)
            if cb is not None:
                r.height = header.number
                cb(r)
        if self.stage == "setup":
            self._setup_block()
        for op in self.operators:
            if self.chain.tip > self.params.gamma or self.stage != "setup":
                if op.enclave.view.checkpoint is not None:
                    op.feed()
        if self.stage != "setup":
            for op in self.operators:
                op.on_block()
            for u in self.users:
                u.on_block()
        if self.stage == "drain" and self._idle():
            self.stopped = True
            return
        if now >= self.scenario.max_time:
            self.trace.emit(now, "max_time")
            self.stopped = True
            return
        lo = self.params.tau_avg - self.params.band
        hi = self.params.tau_avg + self.params.band
        self.sched.after(self.rng.randint(lo, hi), self._mine)

    def _setup_block(self) -> None:
        gamma = self.params.gamma
        tip = self.chain.tip
        if tip == gamma:
            headers = self.chain.header_range(0, gamma)
            for op in self.operators:
                ev = op.enclave.init_sync(headers, self.chain.relevant_txs(0, 0),
                                          self.chain.prove_incr_hash(0), self.sched.now)
                msg = self.keyring.sign(op.pid, M.REGISTER, op.me, op.quote, ev)

                def registered(receipt, op=op):
                    self._registrations[op.ep] = receipt
                self.submit(op.pid, op.ep, M.ManagerCall("registerEnclave", (msg,)), on_receipt=registered)
            return
        regs = self._registrations
        for ep, r in regs.items():
            if not r.accepted:
                raise PoseError(f"registration of {ep} rejected: {r.reason}")
        if len(regs) == len(self.operators) and all(self.chain.is_final(r.height) for r in regs.values()):
            self._start_workload()

    def _start_workload(self) -> None:
        sc = self.scenario
        tees = list(self.manager.tees)
        seed_bytes = sc.seed.to_bytes(8, "big")
        roles = [int(e.who.split(":")[1]) for e in self._pending_adv if e.who.startswith("pool:")]
        wants_bad_creator = any(e.who == "creator" for e in self._pending_adv)
        if sc.creator is not None:
            creator_op = self.operators[sc.creator]
        else:
            # keep the creator out of the pool roles an adversary is meant to hold, so that
            # e.g. a silent executor does not also silence contract creation by accident
            candidates = self.rng.sample(self.operators, len(self.operators))
            creator_op = candidates[0]
            for op in candidates:
                pool = sample_pool(tees, sc.s, seed_bytes, 0, op.me)
                if op.me not in [pool[k] for k in roles] and op.iface.byzantine == wants_bad_creator:
                    creator_op = op
                    break
        self.creator_enclave = creator_op.me
        # adversaries named by role attach to the operators that will hold the role
        pool = sample_pool(tees, sc.s, seed_bytes, 0, self.creator_enclave)
        for e in self._pending_adv:
            target = creator_op if e.who == "creator" else self.op_of(pool[int(e.who.split(":")[1])])
            if target.iface.byzantine:
                continue
            target.iface = Interposer(e.policy)
        byz = [op.ep for op in self.operators if op.iface.byzantine]
        self.trace.emit(self.sched.now, "ready", tees=[t.short for t in tees], byzantine=byz,
                        creator=self.creator_enclave.short)
        self.stage = "run"
        self.sched.after(0, self._next_step)

    def _idle(self) -> bool:
        if self.inflight or self.chain.pending:
            return False
        if any(op.busy() for op in self.operators):
            return False
        if any(u.req is not None or u.step is not None for u in self.users):
            return False
        for rec in self.manager.contracts.values():
            if rec.pool and (rec.exec_chal.block is not None or rec.watch_chal.block is not None):
                return False
        return True

    # -- entry point --------------------------------------------------------------------
    def run(self) -> "Simulation":
        sc = self.scenario
        self.trace.emit(0, "scenario", scenario=sc.to_dict(), bound=request_bound(sc),
                        timeouts=self.timeouts.to_dict(), chain=self.params.to_dict())
        self.sched.after(self.rng.randint(self.params.tau_avg - self.params.band,
                                          self.params.tau_avg + self.params.band), self._mine)
        self.sched.run(stop=lambda: self.stopped)
        self._snapshot()
        self.trace.close(self.sched.now)
        return self

    def _snapshot(self) -> None:
        for cid in self.contract_ids:
            rec = self.manager.record(cid)
            self.trace.emit(self.sched.now, "final", cid=cid, pool=[p.short for p in rec.pool or ()],
                            crashed=rec.crashed, balance=rec.balance, level=rec.payout_level,
                            deposited=self.manager.deposited.get(cid, 0),
                            withdrawn=self.manager.withdrawn.get(cid, 0))
            for op in self.operators:
                slot = op.enclave.slots.get(cid)
                if slot is not None and slot.instance is not None:
                    st = slot.instance.state
                    self.trace.emit(self.sched.now, "state", cid=cid, enc=op.me.short,
                                    digest=hash_value(st).hex(), seq=st.seq,
                                    in_pool=op.me in (rec.pool or ()))

    # -- inspection helpers ----------------------------------------------------------------
    def surviving_states(self, cid: int) -> dict:
        rec = self.manager.record(cid)
        out = {}
        for p in rec.pool or ():
            slot = self.op_of(p).enclave.slots.get(cid)
            out[p.short] = slot.instance.state if slot and slot.instance else None
        return out

    def cid_txs(self, cid: int, upto: int) -> list:
        out = []
        for height, tx in self.chain.relevant_txs(0, upto):
            if tx.method in ("deposit", "submitPayout") and tx.call.args[0][1] == cid:
                out.append((height, tx))
        return out

    def oracle_state(self, cid: int, height: int | None = None):
        """Apply every completed request once, in completion order, to a fresh instance.

        Each request is applied at the view height of its last non-dummy
        execution, the one whose outcome the pool adopted.
        """
        rec = self.manager.record(cid)
        info = self.contract_info[cid]
        key = None
        for op in self.operators:
            slot = op.enclave.slots.get(cid)
            if slot is not None and slot.key is not None:
                key = slot.key
                break
        inst = ContractInstance(contract_for_code(info["code"]), hash_bytes(b"prf" + key.secret),
                                rec.created_at, self.scenario.budget)
        exec_height = {}
        for c, _, h, dummy, hh in self.exec_records:
            if c == cid and not dummy:
                exec_height[h] = hh
        for user, move, h in self.completed.get(cid, []):
            hh = exec_height[h]
            inst.next_state(user, ChainData(hh, self.cid_txs(cid, hh)), move, h)
        if height is not None:
            inst.state = inst._process_chain(inst.state, ChainData(height, self.cid_txs(cid, height)))
        return inst

    def comparable(self, cid: int, state, height: int):
        """State brought to chain height ``height`` with the call counter blanked."""
        info = self.contract_info[cid]
        helper = ContractInstance(contract_for_code(info["code"]), b"", 0, 1)
        st = helper._process_chain(state, ChainData(height, self.cid_txs(cid, height)))
        return replace(st, seq=0)


def run(scenario: Scenario, seed: int | None = None) -> Simulation:
    return Simulation(scenario, seed).run()
