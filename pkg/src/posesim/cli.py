"""posesim command line.

    posesim run SCENARIO [--out DIR] [--seed N]
    posesim check SCENARIO
    posesim replay TRACE
    posesim analyze N M S [--contracts K] [--trials T] [--seed N] [--jobs J]
    posesim sweep [--n N] [--contracts K] [--format csv|json] [--out FILE]
    posesim scenarios

Exit codes: 0 success, 1 invariant violation, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis
from .errors import ConfigInvalid, DomainError, MalformedTrace, PoseError
from .harness import bundled_scenarios, load_scenario
from .harness.monitors import check_trace
from .harness.simulation import Simulation
from .harness.trace import parse_trace, read_trace

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        if path in bundled:
            return bundled[path]
        if p.stem in bundled and p.name == p.stem + ".json":
            return bundled[p.stem]
    return p


def _scenario(path: str):
    sc = load_scenario(_resolve(path))
    env = os.environ.get("POSE_SIM_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigInvalid(f"POSE_SIM_SEED must be an integer, got {env!r}") from None
        if seed < 0:
            raise ConfigInvalid("POSE_SIM_SEED must be non-negative")
        sc.seed = seed
    return sc


def _report(violations) -> int:
    for v in violations:
        print(f"VIOLATION {v}")
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_run(args) -> int:
    sc = _scenario(args.scenario)
    sim = Simulation(sc, seed=args.seed).run()
    # the monitors see the records exactly as a reader of trace.jsonl would
    records = parse_trace(sim.trace.to_jsonl())
    metrics = analysis.measure(records)
    violations = check_trace(records)
    out = Path(args.out or f"out/{sc.name}")
    out.mkdir(parents=True, exist_ok=True)
    sim.trace.write(out / "trace.jsonl")
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    print(f"{sc.name}: seed={sim.scenario.seed} events={len(records)} onchain={metrics.onchain} "
          f"challenges={metrics.challenge_rounds} done={metrics.requests_done} "
          f"failed={metrics.requests_failed} -> {out}")
    return _report(violations)


def cmd_check(args) -> int:
    sc = _scenario(args.scenario)
    print(f"{sc.name}: ok (n={sc.n}, m={sc.m}, s={sc.s}, {len(sc.workload)} steps)")
    return EXIT_OK


def cmd_replay(args) -> int:
    records = read_trace(args.trace)
    violations = check_trace(records)
    if not violations:
        print(f"{args.trace}: {len(records)} records, all monitors pass")
    return _report(violations)


def _mc_chunk(job):
    n, m, s, trials, seed = job
    return analysis.crash_trials(n, m, s, trials, seed)


def cmd_analyze(args) -> int:
    n, m, s = args.n, args.m, args.s
    eps = analysis.liveness_epsilon(n, m, s)
    print(f"epsilon = {float(eps):.10f}")
    print(f"crash   = {float(1 - eps):.6e}")
    if args.exact:
        print(f"crash (exact) = {1 - eps}")
    if args.contracts is not None:
        print(f"no_crash({args.contracts} contracts) = {analysis.system_no_crash_prob(n, m, s, args.contracts):.10f}")
    if args.trials:
        if args.trials < 1:
            raise DomainError("--trials must be >= 1")
        jobs = max(1, args.jobs)
        if jobs == 1:
            crashes = analysis.crash_trials(n, m, s, args.trials, args.seed)
        else:
            share = [args.trials // jobs + (k < args.trials % jobs) for k in range(jobs)]
            chunks = [(n, m, s, t, args.seed * 1_000_003 + k) for k, t in enumerate(share) if t]
            with ProcessPoolExecutor(jobs) as ex:
                crashes = sum(ex.map(_mc_chunk, chunks))
        low, high = analysis.wilson(crashes, args.trials)
        covered = low <= float(1 - eps) <= high
        print(f"monte_carlo = {crashes / args.trials:.6e} ({crashes}/{args.trials}) "
              f"95% CI [{low:.6e}, {high:.6e}] formula {'inside' if covered else 'outside'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    rows = analysis.sweep(analysis.default_grid(args.n, args.contracts))
    text = analysis.to_csv(rows) if args.format == "csv" else analysis.to_json(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name, path in bundled_scenarios().items():
        print(f"{name}\t{path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="posesim", description="Off-chain contract execution simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario, write trace.jsonl and metrics.json")
    r.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    r.add_argument("--out", help="output directory (default out/<name>)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("check", help="validate a scenario file")
    c.add_argument("scenario")
    c.set_defaults(fn=cmd_check)

    rp = sub.add_parser("replay", help="re-check a saved trace offline")
    rp.add_argument("trace")
    rp.set_defaults(fn=cmd_replay)

    a = sub.add_parser("analyze", help="liveness probability for n enclaves, m byzantine, pool size s")
    a.add_argument("n", type=int)
    a.add_argument("m", type=int)
    a.add_argument("s", type=int)
    a.add_argument("--contracts", type=int, help="system-wide: number of contracts K")
    a.add_argument("--trials", type=int, default=0, help="Monte Carlo trials")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--jobs", type=int, default=1, help="worker processes for Monte Carlo")
    a.add_argument("--exact", action="store_true", help="also print the exact rational crash probability")
    a.set_defaults(fn=cmd_analyze)

    sw = sub.add_parser("sweep", help="emit an (n, m, s, K) grid as CSV or JSON")
    sw.add_argument("--n", type=int, default=1000)
    sw.add_argument("--contracts", type=int, default=40_000_000)
    sw.add_argument("--format", choices=("csv", "json"), default="csv")
    sw.add_argument("--out")
    sw.set_defaults(fn=cmd_sweep)

    ls = sub.add_parser("scenarios", help="list bundled scenarios")
    ls.set_defaults(fn=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigInvalid, DomainError, MalformedTrace) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PoseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
