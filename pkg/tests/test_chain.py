import hashlib
import itertools
import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from posesim.chain import Chain, RelevantTx, fold_incr_hash, incr_hash_update, verify_state_proof
from posesim.crypto import ZERO_DIGEST, Kind, PartyId
from posesim.errors import NotFinal, OutOfRange, TimestampRegression
from posesim.manager import call

SENDER = PartyId(Kind.USER, bytes(range(32)))


def tx(i, value=0):
    return RelevantTx(call("deposit", i), SENDER, value)


def oracle_fold(prev, txs):
    for t in txs:
        prev = hashlib.sha256(prev + t.data + t.sender.ident + t.value.to_bytes(32, "big")).digest()
    return prev


def test_incr_hash_pinned_vector():
    t = tx(7, 7)
    assert t.data.hex() == "4d0000001753000000076465706f7369744c00000006490000000107"
    assert incr_hash_update(ZERO_DIGEST, t).hex() == \
        "dda33a468395a1779bd5c54d88ec006cdec527d568f7446fb4bbd7aac57bb58f"


def test_omission_and_reordering_change_the_fold():
    txs = [tx(1), tx(2), tx(3)]
    full = fold_incr_hash(ZERO_DIGEST, txs)
    assert full == oracle_fold(ZERO_DIGEST, txs)
    for i in range(3):
        assert fold_incr_hash(ZERO_DIGEST, txs[:i] + txs[i + 1:]) != full
    for perm in itertools.permutations(txs):
        if list(perm) != txs:
            assert fold_incr_hash(ZERO_DIGEST, perm) != full


def test_negative_value_rejected():
    with pytest.raises(ValueError):
        RelevantTx(call("deposit"), SENDER, -1)


@pytest.mark.parametrize("tip,gamma,final", [(15, 15, 0), (20, 15, 5), (7, 0, 7), (3, 15, 0)])
def test_finalized_height(tip, gamma, final):
    c = Chain(gamma=gamma)
    for _ in range(tip):
        c.mine_block()
    assert c.finalized_height() == final


def test_mine_block_deltas():
    c = Chain(tau=15)
    assert c.mine_block().timestamp == 15
    assert c.mine_block(44).timestamp == 59
    with pytest.raises(TimestampRegression):
        c.mine_block(0)
    with pytest.raises(TimestampRegression):
        c.mine_block(-3)


def test_header_range_linked():
    c = Chain()
    for _ in range(5):
        c.mine_block()
    assert c.header_range(3, 2) == []
    assert [h.number for h in c.header_range(2, 2)] == [2]
    hs = c.header_range(0, 5)
    assert all(b.parent == a.digest() and b.timestamp > a.timestamp for a, b in zip(hs, hs[1:]))
    with pytest.raises(OutOfRange):
        c.header_range(0, 6)


def test_alpha_one_includes_in_next_block():
    c = Chain(alpha=1)
    t = tx(1)
    c.submit_tx(t, 1)
    c.mine_block()
    assert c.block(1).relevant == [t]
    with pytest.raises(ValueError):
        c.submit_tx(t, 2)


def test_two_txs_same_block_fold_in_order():
    c = Chain()
    a, b = tx(1), tx(2)
    c.submit_tx(a)
    c.submit_tx(b)
    c.mine_block()
    assert c.incr_hash_at(1) == oracle_fold(ZERO_DIGEST, [a, b])


@given(st.lists(st.integers(1, 20), min_size=1, max_size=30))
def test_inclusion_within_alpha(delays):
    c = Chain(alpha=20)
    tickets = []
    for i, d in enumerate(delays):
        tickets.append((c.submit_tx(tx(i), d), i))
        c.mine_block()
    for _ in range(20):
        c.mine_block()
    where = {b.receipts[k].tx.call.args[0]: n for n, b in enumerate(c.blocks) for k in range(len(b.receipts))}
    for ticket, i in tickets:
        assert ticket.submitted_at < where[i] <= ticket.submitted_at + 20


@given(st.lists(st.tuples(st.integers(0, 3), st.booleans()), max_size=25))
def test_incr_hash_completeness_and_rejections(plan):
    # odd calls are rejected by the processor and must not fold in
    c = Chain(gamma=2, processor=lambda t, h: (t.call.args[0] % 2 == 0, None, ""))
    log = []
    for k, (n_txs, _) in enumerate(plan):
        for j in range(n_txs):
            c.submit_tx(tx(k * 10 + j))
        c.mine_block()
    for n in range(c.tip + 1):
        log = [t for _, t in c.relevant_txs(0, n)]
        assert c.incr_hash_at(n) == oracle_fold(ZERO_DIGEST, log)
        assert all(t.call.args[0] % 2 == 0 for t in log)


def test_state_proof():
    c = Chain(gamma=2)
    c.submit_tx(tx(1))
    for _ in range(4):
        c.mine_block()
    proof = c.prove_incr_hash(1)
    assert verify_state_proof(proof, c.header(1))
    flipped = bytes([proof.leaf[0] ^ 1]) + proof.leaf[1:]
    assert not verify_state_proof(replace(proof, leaf=flipped), c.header(1))
    assert not verify_state_proof(proof, c.header(0))
    with pytest.raises(NotFinal):
        c.prove_incr_hash(3)


def test_final_prefix_append_only():
    c = Chain(gamma=3)
    seen = {}
    for _ in range(20):
        c.mine_block()
        for n in range(c.finalized_height() + 1):
            assert seen.setdefault(n, c.header(n)) == c.header(n)


def test_sidechain():
    c = Chain(gamma=2)
    for _ in range(5):
        c.mine_block()
    side = c.fork(5)
    assert side.tip == 5 and side.header_range(0, 5) == c.header_range(0, 5)
    h = side.mine_block(c.latest.timestamp + 40)
    assert h.parent == c.latest.digest() and side.relevant_txs(0, 6) == []
    assert verify_state_proof(side.prove_incr_hash(6), h)
    with pytest.raises(TimestampRegression):
        side.mine_block(h.timestamp)


def test_export_jsonl():
    c = Chain()
    c.submit_tx(tx(1, 3))
    c.mine_block()
    lines = [json.loads(line) for line in c.export_jsonl().splitlines()]
    assert [rec["number"] for rec in lines] == [0, 1]
    assert lines[1]["txs"][0]["value"] == 3 and lines[1]["parent"] == c.header(0).digest().hex()
