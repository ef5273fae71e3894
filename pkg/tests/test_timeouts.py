import pytest
from hypothesis import given
from hypothesis import strategies as st

from posesim.errors import ConfigInvalid
from posesim.timeouts import ETHEREUM, ChainParams, Timeouts, min_exec_off, min_exec_on, min_prop_on


def test_ethereum_delays():
    assert ETHEREUM.delta_L == 880
    assert ETHEREUM.t_conf == 15 * 44
    assert ETHEREUM.kick_extension_seconds == 1540
    assert ETHEREUM.tau_p == 33 * 50


def test_blocks_for_rounds_up_at_fastest_interval():
    p = ChainParams(tau_avg=15, band=7)
    assert p.tau_min == 8
    assert p.blocks_for(16) == 2
    assert p.blocks_for(17) == 3
    assert p.blocks_for(0) == 0


def test_resolved_minimums_chain():
    p = ChainParams()
    t = Timeouts(t_exec=5).resolved(p)
    assert t.prop_off == 10
    assert t.prop_on == p.blocks_for(10) + p.alpha + 1
    assert t.exec_off == 2 * 5 + 2 * (t.prop_on * p.tau + p.delta_L + p.t_conf)
    assert t.exec_on == p.blocks_for(t.exec_off) + p.alpha + 1
    assert t.creation_on == t.exec_on


@pytest.mark.parametrize("field", ["prop_on", "exec_off", "exec_on", "creation_prop_on", "creation_off",
                                   "creation_on"])
def test_each_relation_enforced(field):
    p = ChainParams()
    t = Timeouts().resolved(p)
    setattr(t, field, getattr(t, field) - 1)
    with pytest.raises(ConfigInvalid, match=field):
        t.validate(p)


@pytest.mark.parametrize("over", [{"alpha": 0}, {"gamma": -1}, {"tau": 10}, {"band": 20},
                                  {"L": 0}, {"tau_p": 100}, {"tau_variance": 5}])
def test_bad_chain_params(over):
    with pytest.raises(ConfigInvalid):
        ChainParams(**over).validate()


def test_short_prop_off_rejected():
    with pytest.raises(ConfigInvalid):
        Timeouts(t_exec=5, max_delay=1, prop_off=11).resolved(ChainParams())


@given(st.integers(1, 40), st.integers(0, 10), st.integers(1, 30), st.integers(0, 20),
       st.integers(0, 3))
def test_resolved_always_valid(t_exec, max_delay, alpha, gamma, slack):
    p = ChainParams(alpha=alpha, gamma=gamma)
    t = Timeouts(t_exec=t_exec, max_delay=max_delay,
                 prop_off=2 * t_exec + 2 * max_delay + slack).resolved(p)
    assert t.prop_on >= min_prop_on(p, t.prop_off)
    assert t.exec_off >= min_exec_off(p, t.t_exec, t.prop_on)
    assert t.exec_on >= min_exec_on(p, t.exec_off)


def test_dynamic_extensions():
    p = ChainParams()
    t = Timeouts(dynamic=True).resolved(p)
    assert t.kick_extension(p) * p.tau == p.kick_extension_seconds
    assert t.watchdog_extension(p) == t.prop_on + p.alpha
    assert t.dynamic_exec_on(p) < t.exec_on
    assert t.client_exec_off(p, False) == 880 + 10
    assert t.client_exec_off(p, True) == t.exec_off
    assert Timeouts().resolved(p).client_exec_off(p, False) == t.exec_off
