"""Whole-run checks used by the harness tests and the acceptance suite."""

from dataclasses import replace

from posesim.harness import bundled_scenarios, load_scenario
from posesim.harness.monitors import check_trace, ok_after_confirms, privacy
from posesim.harness.simulation import run
from posesim.analysis import measure


def bundled(name):
    return load_scenario(bundled_scenarios()[name])


def state_problems(sim, cid):
    """Surviving enclaves must hold byte-identical states equal to the sequential oracle,
    with every completed request in the replay set exactly once."""
    problems = []
    states = sim.surviving_states(cid)
    if not states or any(st is None for st in states.values()):
        return [f"contract {cid}: surviving pool without state: {list(states)}"]
    distinct = {st.to_bytes() for st in states.values()}
    if len(distinct) != 1:
        problems.append(f"contract {cid}: {len(distinct)} distinct surviving states")
    done = [h for _, _, h in sim.completed.get(cid, [])]
    if len(done) != len(set(done)):
        problems.append(f"contract {cid}: a request completed twice")
    st = next(iter(states.values()))
    if sorted(st.received) != sorted(done):
        problems.append(f"contract {cid}: replay set {len(st.received)} != completed {len(done)}")
    height = sim.chain.tip
    oracle = sim.comparable(cid, sim.oracle_state(cid).state, height)
    if sim.comparable(cid, st, height) != oracle:
        problems.append(f"contract {cid}: surviving state differs from oracle")
    return problems


def executor_failover(seed):
    """Silent executor: every request completes through the on-chain challenge, the
    kick costs exactly two txs, and the pool converges on the oracle state."""
    sc = replace(bundled("executor_silent"), seed=seed)
    sim = run(sc)
    recs = sim.trace.records
    problems = [str(v) for v in check_trace(recs)]
    cid = sim.contract_ids[0]
    mt = measure(recs)
    methods = [r["method"] for r in recs if r["ev"] == "tx" and r.get("accepted") and r.get("cid") == cid]
    extra = [m for m in methods if m not in ("initCreation", "finalizeCreation")]
    if extra != ["challengeExecutor", "executorTimeout"]:
        problems.append(f"extra on-chain txs {extra}")
    kicked = sim.manager.removed.get(cid, [])
    done = [r for r in recs if r["ev"] == "request_done"]
    steps = [s for s in sc.workload if s["op"] == "execute"]
    if len(done) != len(steps):
        problems.append(f"{len(done)}/{len(steps)} requests done")
    if len(kicked) != 1 or any(r["executor"] == kicked[0].short for r in done):
        problems.append(f"kicked {kicked}, executors {[r['executor'] for r in done]}")
    if mt.requests_failed:
        problems.append("requests failed")
    return problems + state_problems(sim, cid)


def partial_propagation(seed, fanout_to):
    """UPDATE reaches one watchdog only, then the executor goes silent and is kicked."""
    sc = bundled("partial_update")
    adv = [dict(a, policy=dict(a["policy"], fanout_to=fanout_to)) for a in sc.adversary]
    sim = run(replace(sc, seed=seed, adversary=adv))
    recs = sim.trace.records
    problems = [str(v) for v in check_trace(recs)]
    cid = sim.contract_ids[0]
    if not any(r["ev"] == "tx" and r.get("accepted") and r["method"] == "executorTimeout" for r in recs):
        problems.append("executor never kicked")
    # the successor re-runs the first request: a dummy iff the UPDATE reached it
    first_h = sim.exec_records[0][2]
    reruns = [d for c, e, h, d, _ in sim.exec_records[1:] if h == first_h]
    if reruns != [fanout_to == "first"]:
        problems.append(f"fanout {fanout_to}: re-executions of the first request {reruns}")
    return problems + state_problems(sim, cid)


BYZANTINE = ["executor_silent", "watchdog_silent", "partial_update", "onchain_only", "sidechain",
             "withhold_blocks", "replay", "creator_silent", "escrow_flow"]


def with_private_moves(sc):
    """Same adversary, but an RPS workload whose moves carry secret salts."""
    work = bundled("onchain_only").workload
    return replace(sc, name=sc.name + "+rps", contract="rps", users=2, workload=work)


def privacy_problems(sc):
    """(problems, number of secrets the run exposed to the monitor)."""
    recs = run(sc).trace.records
    secrets = sum(len(r.get("secrets", ())) for r in recs if r["ev"] == "request")
    problems = [str(v) for v in ok_after_confirms(recs) + privacy(recs)]
    return problems, secrets
