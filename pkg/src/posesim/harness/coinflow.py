"""Randomized deposit/withdraw/payout workloads on the escrow contract.

Withdrawals are drawn without regard to credit, so some overdraw and are
refused by the contract; some payouts resubmit an already spent statement.
"""

from __future__ import annotations

import random

from .monitors import Violation, coin_flow
from .scenario import Scenario
from .simulation import run


def random_workload(rng: random.Random, users: int, steps: int) -> list[dict]:
    work = [{"op": "create"}]
    for _ in range(steps):
        u = rng.randrange(users)
        kind = rng.choices(["deposit", "withdraw", "pay", "payout", "stale"], weights=[3, 3, 1, 3, 1])[0]
        if kind == "deposit":
            work.append({"op": "deposit", "user": u, "coins": rng.randint(1, 20)})
        elif kind == "withdraw":
            work.append({"op": "execute", "user": u, "move": ["withdraw", rng.randint(1, 20)]})
            if rng.random() < 0.7:
                work.append({"op": "payout", "user": u})
        elif kind == "pay":
            work.append({"op": "execute", "user": u, "move": ["pay", f"$user:{rng.randrange(users)}", rng.randint(1, 10)]})
        elif kind == "payout":
            work.append({"op": "payout", "user": u})
        else:
            work.append({"op": "payout", "user": u, "stale": True})
    return work


def coinflow_scenario(seed: int, steps: int = 14) -> Scenario:
    rng = random.Random(seed)
    users = rng.randint(1, 3)
    return Scenario(name=f"coinflow-{seed}", seed=seed, n=4, s=rng.randint(1, 3), contract="escrow",
                    users=users, workload=random_workload(rng, users, steps))


def check_manager(sim) -> list[Violation]:
    """Direct check of the manager's books, independent of the trace."""
    out = []
    mgr = sim.manager
    for cid in sim.contract_ids:
        rec = mgr.record(cid)
        levels = [lvl for (c, lvl) in mgr.payouts if c == cid]
        if sorted(levels) != list(range(len(levels))):
            out.append(Violation("coin_flow", -1, f"contract {cid}: payout levels {sorted(levels)}"))
        if rec.balance < 0:
            out.append(Violation("coin_flow", -1, f"contract {cid}: balance {rec.balance}"))
        if mgr.withdrawn[cid] > mgr.deposited[cid]:
            out.append(Violation("coin_flow", -1, f"contract {cid}: withdrawn > deposited"))
    return out


def run_coinflow(seed: int, steps: int = 14):
    sim = run(coinflow_scenario(seed, steps))
    return sim, coin_flow(sim.trace.records) + check_manager(sim)
