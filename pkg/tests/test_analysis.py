import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posesim import analysis
from posesim.errors import DomainError, MalformedTrace


def test_binomial_identity_exhaustive():
    for n in range(1, 61):
        for m in range(n + 1):
            for s in range(1, n + 1):
                assert analysis.crash_probability(n, m, s) == Fraction(math.comb(m, s), math.comb(n, s))


@pytest.mark.parametrize("n,m,s,floor", [(100, 70, 7, 0.92), (100, 50, 7, 0.99), (100, 10, 3, 0.99)])
def test_worked_liveness_values(n, m, s, floor):
    assert analysis.liveness_epsilon(n, m, s) > floor


def test_epsilon_digits():
    # hypergeometric tail computed independently with mpmath
    mpmath.mp.dps = 40
    for n, m, s in [(100, 70, 7), (100, 50, 7), (100, 10, 3), (1000, 100, 11)]:
        oracle = 1 - mpmath.binomial(m, s) / mpmath.binomial(n, s)
        assert abs(mpmath.mpf(analysis.liveness_epsilon(n, m, s).numerator)
                   / analysis.liveness_epsilon(n, m, s).denominator - oracle) < mpmath.mpf(10) ** -35


def test_system_no_crash_against_mpmath():
    mpmath.mp.dps = 50
    for n, m, s, k in [(1000, 100, 11, 4 * 10**7), (10000, 1000, 11, 4 * 10**7), (1000, 300, 15, 10**6)]:
        p = mpmath.binomial(m, s) / mpmath.binomial(n, s)
        oracle = (1 - p) ** k
        got = analysis.system_no_crash_prob(n, m, s, k)
        assert abs(got - float(oracle)) <= 1e-12


def test_system_no_crash_edges():
    assert analysis.system_no_crash_prob(10, 0, 3, 10**9) == 1.0
    assert analysis.system_no_crash_prob(10, 10, 3, 1) == 0.0
    assert analysis.system_no_crash_prob(10, 5, 3, 0) == 1.0
    with pytest.raises(DomainError):
        analysis.system_no_crash_prob(10, 5, 3, -1)


@pytest.mark.parametrize("args", [(10, 11, 3), (10, 5, 0), (10, 5, 11), (10, -1, 2), (10.0, 5, 2), (10, 5, True)])
def test_domain_errors(args):
    with pytest.raises(DomainError):
        analysis.liveness_epsilon(*args)


@given(st.integers(2, 80).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1), st.integers(1, n - 1))))
def test_monotone(nms):
    n, m, s = nms
    eps = analysis.liveness_epsilon
    assert eps(n, m, s + 1) >= eps(n, m, s)
    assert eps(n, m + 1, s) <= eps(n, m, s)
    assert eps(n + 1, m, s) >= eps(n, m, s)


def test_wilson_interval():
    low, high = analysis.wilson(50, 100)
    assert low == pytest.approx(0.40383, abs=1e-5) and high == pytest.approx(0.59617, abs=1e-5)
    assert analysis.wilson(0, 10)[0] == 0.0
    with pytest.raises(DomainError):
        analysis.wilson(0, 0)


def test_monte_carlo_covers_formula():
    rng = random.Random(5)
    covered = 0
    for k in range(10):
        n = rng.randint(10, 60)
        m = rng.randint(n // 2, n)
        s = rng.randint(1, 4)
        mc = analysis.monte_carlo_crash(n, m, s, 100_000, seed=k)
        covered += mc.covers(float(analysis.crash_probability(n, m, s)))
    assert covered >= 8


def test_sweep_rows_and_formats():
    rows = analysis.sweep(analysis.default_grid())
    assert len(rows) == 75
    row = next(r for r in rows if r["m"] == 100 and r["s"] == 11)
    assert row["no_crash"] > 0.99
    csv_text = analysis.to_csv(rows)
    assert csv_text.splitlines()[0] == "n,m,s,contracts,epsilon,crash,no_crash"
    assert len(csv_text.splitlines()) == 76
    assert analysis.to_csv([]) == ""


def test_measure_counts():
    records = [
        {"ev": "scenario"},
        {"ev": "tx", "cid": 0, "accepted": True, "method": "initCreation"},
        {"ev": "tx", "cid": 0, "accepted": True, "method": "challengeExecutor"},
        {"ev": "tx", "cid": 0, "accepted": True, "method": "watchdogResponse"},
        {"ev": "tx", "cid": 0, "accepted": False, "method": "deposit"},
        {"ev": "tx", "cid": None, "accepted": True, "method": "registerEnclave"},
        {"ev": "request_done", "latency": 12},
        {"ev": "final", "cid": 0, "crashed": False},
    ]
    mt = analysis.measure(records)
    assert (mt.onchain, mt.challenge_rounds, mt.executor_challenges, mt.watchdog_responses, mt.rejected) == \
        (3, 1, 1, 1, 1)
    assert mt.by_phase == {"setup": 1, "challenge": 1, "response": 1}
    assert mt.latencies == [12] and mt.crashed == {"0": False}
    assert analysis.measure([]).onchain == 0
    with pytest.raises(MalformedTrace):
        analysis.measure([{"x": 1}])
    with pytest.raises(MalformedTrace):
        analysis.measure("nope")


def test_monte_carlo_calibration():
    # 400 random tuples at 1e5 trials: 95% intervals should cover about 95% of the time
    # and the standardized errors should have unit variance
    rng = random.Random(17)
    covered, z2, counted = 0, 0.0, 0
    for _ in range(400):
        n = rng.randint(12, 200)
        s = rng.randint(1, 12)
        m = rng.randint(max(s, n // 2), n)
        p = float(analysis.crash_probability(n, m, s))
        mc = analysis.monte_carlo_crash(n, m, s, 100_000, seed=rng.getrandbits(64))
        covered += mc.covers(p)
        if 0 < p < 1:
            z2 += (mc.estimate - p) ** 2 / (p * (1 - p) / mc.trials)
            counted += 1
    assert 0.92 <= covered / 400 <= 0.98
    assert 0.8 <= z2 / counted <= 1.2
