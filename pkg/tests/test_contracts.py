import pytest
from hypothesis import given
from hypothesis import strategies as st

from posesim import messages as M
from posesim.chain import RelevantTx
from posesim.contracts import (
    ChainData, ContractInstance, ContractState, QuickSort, code_by_name, contract_for_code, init_contract,
)
from posesim.contracts.samples import SORT_SIZE
from posesim.crypto import KeyRing, Kind, hash_bytes
from posesim.encoding import decode
from posesim.errors import UnknownCode
from posesim.manager import call

ring = KeyRing(b"contracts")
ALICE = ring.new_party(Kind.USER, "alice")
BOB = ring.new_party(Kind.USER, "bob")
TEE = ring.new_party(Kind.ENCLAVE, "tee")
KEY = b"k" * 32


def h(i):
    return hash_bytes(b"req%d" % i)


def make(name, budget=10**6):
    return init_contract(code_by_name(name), KEY, 0, budget)


def deposit_tx(user, coins, cid=0):
    return RelevantTx(call("deposit", ring.sign(user, M.DEPOSIT, cid, coins)), user, coins)


def payout_tx(level, withdrawals, cid=0):
    return RelevantTx(call("submitPayout", ring.sign(TEE, M.WITHDRAW, cid, level, tuple(withdrawals))), TEE)


def test_registry():
    assert isinstance(contract_for_code(code_by_name("quicksort")), QuickSort)
    with pytest.raises(UnknownCode):
        contract_for_code(b"nope")
    with pytest.raises(UnknownCode):
        code_by_name("nope")


def test_counter_moves_and_replay():
    c = make("counter")
    assert c.next_state(ALICE, None, ("inc",), h(1)).result == 1
    assert c.next_state(ALICE, None, ("add", 4), h(2)).result == 5
    out = c.next_state(ALICE, None, ("add", 4), h(2))
    assert out.dummy and out.result is None
    assert c.state.app["public"]["value"] == 5 and c.state.seq == 3
    assert c.state.received == tuple(sorted((h(1), h(2))))


def test_invalid_move_reverts_but_consumes():
    c = make("counter")
    c.next_state(ALICE, None, ("inc",), h(1))
    out = c.next_state(ALICE, None, ("jump",), h(2))
    assert not out.dummy and out.error.startswith("InvalidMove")
    assert c.state.app["public"]["value"] == 1 and h(2) in c.state.received
    assert c.next_state(ALICE, None, ("inc",), h(2)).dummy


def test_budget_exceeded_reverts():
    c = make("counter", budget=50)
    out = c.next_state(ALICE, None, ("spin", 100), h(1))
    assert out.error.startswith("BudgetExceeded")
    assert c.state.app["public"]["value"] == 0
    assert c.next_state(ALICE, None, ("spin", 10), h(2)).result == 1


def test_rps_round():
    c = make("rps")
    chain = ChainData(3, [(2, deposit_tx(ALICE, 5)), (3, deposit_tx(BOB, 5))])
    assert c.next_state(ALICE, chain, ("play", "rock", b"s1", 5), h(1)).result == "waiting"
    assert c.state.app["public"]["credit"] == {ALICE.ident.hex(): 0, BOB.ident.hex(): 5}
    assert "rock" not in repr(c.public_view())
    assert c.next_state(BOB, chain, ("play", "paper", b"s2", 5), h(2)).result == BOB.ident.hex()
    assert c.state.unspent == ((10, BOB),)
    assert c.state.app["public"]["last"]["moves"] == {ALICE.ident.hex(): "rock", BOB.ident.hex(): "paper"}
    assert c.state.app["private"]["moves"] == {}


def test_rps_draw_refunds_and_guards():
    c = make("rps")
    chain = ChainData(1, [(1, deposit_tx(ALICE, 2)), (1, deposit_tx(BOB, 2))])
    c.next_state(ALICE, chain, ("play", "rock", b"a", 2), h(1))
    assert c.next_state(ALICE, chain, ("play", "rock", b"a", 2), h(9)).error.endswith("already moved this round")
    assert c.next_state(BOB, chain, ("play", "rock", b"b", 2), h(2)).result == "draw"
    assert c.state.app["public"]["credit"] == {ALICE.ident.hex(): 2, BOB.ident.hex(): 2}
    assert c.next_state(ALICE, chain, ("play", "lizard", b"", 0), h(3)).error.startswith("InvalidMove")
    assert c.next_state(ALICE, chain, ("withdraw",), h(4)).result == 2
    assert c.state.unspent == ((2, ALICE),)


def test_escrow_flow():
    c = make("escrow")
    a, b = ALICE.ident.hex(), BOB.ident.hex()
    chain = ChainData(1, [(1, deposit_tx(ALICE, 10))])
    slot = c.next_state(ALICE, chain, ("hold", b, 4), h(1)).result
    assert c.next_state(BOB, chain, ("release", slot), h(2)).error.endswith("not allowed")
    c.next_state(ALICE, chain, ("release", slot), h(3))
    assert c.state.app["public"]["credit"] == {a: 6, b: 4}
    assert c.next_state(ALICE, chain, ("release", slot), h(4)).error.endswith("slot closed")
    c.next_state(ALICE, chain, ("pay", b, 1), h(5))
    assert c.next_state(BOB, chain, ("withdraw", 6), h(6)).error.endswith("insufficient credit")
    c.next_state(BOB, chain, ("withdraw", 5), h(7))
    assert c.state.unspent == ((5, BOB),)
    # a confirmed payout of level 0 clears the unspent entry and the balance
    chain2 = ChainData(2, chain.txs + [(2, payout_tx(0, [(5, BOB)]))])
    c.next_state(ALICE, chain2, ("pay", b, 1), h(8))
    assert c.state.unspent == () and c.state.balance == 5 and c.state.payout_level == 1


def test_withdraw_never_exceeds_balance():
    c = make("escrow")
    chain = ChainData(1, [(1, deposit_tx(ALICE, 3))])
    c.next_state(ALICE, chain, ("withdraw", 3), h(1))
    # credit is gone, and the committed unspent blocks any further withdrawal
    assert c.next_state(ALICE, chain, ("withdraw", 1), h(2)).error


def test_stale_payout_level_ignored():
    c = make("escrow")
    chain = ChainData(2, [(1, deposit_tx(ALICE, 3)), (2, payout_tx(1, [(3, ALICE)]))])
    c.next_state(ALICE, chain, ("pay", BOB.ident.hex(), 1), h(1))
    assert c.state.balance == 3 and c.state.payout_level == 0


def test_chain_txs_processed_once():
    c = make("escrow")
    chain = ChainData(1, [(1, deposit_tx(ALICE, 3))])
    c.next_state(ALICE, chain, ("pay", BOB.ident.hex(), 1), h(1))
    c.next_state(ALICE, chain, ("pay", BOB.ident.hex(), 1), h(2))
    assert c.state.balance == 3 and c.state.processed_height == 1


def test_quicksort_contract():
    c = make("quicksort")
    comparisons = c.next_state(ALICE, None, ("run",), h(1)).result
    assert comparisons > SORT_SIZE
    c2 = make("quicksort")
    assert c2.next_state(ALICE, None, ("run",), h(1)).result == comparisons
    tight = make("quicksort", budget=comparisons - 1)
    assert tight.next_state(ALICE, None, ("run",), h(1)).error.startswith("BudgetExceeded")


def test_prf_randomness_depends_on_request_and_key():
    runs = {}
    for key, req in ((KEY, h(1)), (KEY, h(2)), (b"j" * 32, h(1))):
        c = ContractInstance(QuickSort(), key)
        c.next_state(ALICE, None, ("run",), req)
        runs[(key, req)] = c.state.app["public"]["checksum"]
    assert len(set(runs.values())) == 3


def test_public_projection_hides_private():
    c = make("rps")
    pub = decode(c.get_state("pub"))
    assert set(pub) == {"public", "balance", "unspent", "payout_level", "processed_height"}
    assert "private" not in pub
    with pytest.raises(ValueError):
        c.get_state("secret")


def test_update_state_seq_rule():
    a, b = make("counter"), make("counter")
    a.next_state(ALICE, None, ("inc",), h(1))
    older = a.state
    a.next_state(ALICE, None, ("inc",), h(2))
    # known hash with an older lineage position is a dummy
    assert not a.update_state(older, h(1))
    assert a.state.app["public"]["value"] == 2
    assert b.update_state(a.state, h(2)) and b.state == a.state


@given(st.lists(st.sampled_from([("inc",), ("add", 3), ("spin", 2), ("bad",)]), max_size=20))
def test_state_roundtrip(moves):
    c = make("counter")
    for i, mv in enumerate(moves):
        c.next_state(ALICE, None, mv, h(i))
    assert ContractState.from_bytes(c.get_state()) == c.state


def test_emit_payout():
    c = make("escrow")
    c.next_state(ALICE, ChainData(1, [(1, deposit_tx(ALICE, 2))]), ("withdraw", 2), h(1))
    stmt = c.emit_payout(0, ring.signer_for(TEE))
    assert stmt.payload == (M.WITHDRAW, 0, 0, ((2, ALICE),))
