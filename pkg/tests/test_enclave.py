from collections import Counter
from itertools import permutations

import pytest

from posesim import messages as M
from posesim.contracts import ContractState, code_by_name
from posesim.crypto import KeyRing, Kind, decrypt, hash_bytes, message_hash
from posesim.encoding import decode, encode
from posesim.enclave import sample_pool, verify_quote

from world import World

COUNTER = code_by_name("counter")
RPS = code_by_name("rps")


@pytest.fixture
def created():
    w = World(n=4, users=2).setup()
    cid, pool = w.create(COUNTER)
    return w, cid, pool


def test_quote_checks_vendor_and_program():
    w = World(n=1)
    assert verify_quote(w.keyring, w.vendor, w.quotes[0])
    assert not verify_quote(w.keyring, w.operators[0], w.quotes[0])
    other = w.keyring.sign(w.vendor, M.QUOTE, w.enclaves[0].id, hash_bytes(b"not pose"))
    assert not verify_quote(w.keyring, w.vendor, other)


def test_unsynced_and_stale_enclaves_refuse():
    w = World(n=2)
    assert w.enclaves[0].handle_create((M.CREATE, 0, COUNTER), 1, 0).cause == "NotSynced"
    w.setup()
    late = w.now + w.params.tau_variance + 1
    assert w.enclaves[0].handle_create((M.CREATE, 0, COUNTER), 1, late).cause == "StaleView"


def test_evidence_names_checkpoint():
    w = World(n=1)
    w.mine(w.params.gamma)
    ev = w.enclaves[0].init_sync(w.chain.header_range(0, w.params.gamma), [], w.chain.prove_incr_hash(0), w.now)
    assert ev.kind == M.EVIDENCE and ev[1] == 0 and ev[2] == w.chain.header(0).digest()


def test_execute_round_and_result(created):
    w, cid, pool = created
    m, wrap, key = w.request(cid, ("add", 5))
    upd, ok = w.run(cid, m, wrap)
    assert upd.kind == M.UPDATE and upd[3] == message_hash(m)
    assert ok.kind == M.OK and ok[3] == message_hash(m) and ok.signer == pool[0]
    bundle = decode(ok[2])
    assert decode(bundle["pub"])["public"] == {"value": 5}
    assert decode(decrypt(key, bundle["result"])) == {"result": 5, "error": ""}
    states = {w.by_id[p].slots[cid].instance.get_state() for p in pool}
    assert len(states) == 1


def test_only_the_executor_executes(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    assert w.by_id[pool[1]].handle_execute(m, wrap, w.now).cause == "NotExecutor"
    outsider = next(e for e in w.enclaves if e.id not in pool)
    assert outsider.handle_execute(m, wrap, w.now).cause == "NotExecutor"


def test_bad_wrap_and_tampered_request(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    m2, wrap2, _ = w.request(cid, ("inc",), nonce=2)
    ex = w.by_id[pool[0]]
    # a wrap meant for another enclave
    from posesim.crypto import SymmetricKey, encrypt
    foreign = encrypt(w.keyring.public_key(pool[1]), encode(SymmetricKey(b"k" * 32, b"s" * 32)))
    assert ex.handle_execute(m, foreign, w.now).cause == "BadWrap"
    assert ex.handle_execute(m, wrap2, w.now).cause == "BadWrap"
    tampered = type(m)(m.payload[:3] + (m.payload[3],), w.users[1], m.tag)
    assert ex.handle_execute(tampered, wrap, w.now).cause == "BadMessage"


def test_one_request_in_flight(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    m2, wrap2, _ = w.request(cid, ("inc",), nonce=2)
    ex = w.by_id[pool[0]]
    upd = ex.handle_execute(m, wrap, w.now)
    assert ex.handle_execute(m2, wrap2, w.now).cause == "PropagationPending"
    conf = w.by_id[pool[1]].handle_update(upd, w.now)
    assert ex.handle_confirms(cid, [conf], w.now).cause == "MissingConfirms"
    assert ex.pending_update(cid) == message_hash(m)
    conf2 = w.by_id[pool[2]].handle_update(upd, w.now)
    assert ex.handle_confirms(cid, [conf2], w.now).kind == M.OK
    assert ex.handle_execute(m2, wrap2, w.now).kind == M.UPDATE


def test_confirms_for_other_request_do_not_count(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    ex = w.by_id[pool[0]]
    ex.handle_execute(m, wrap, w.now)
    wrong = [w.keyring.sign(p, M.CONFIRM, cid, b"\1" * 32) for p in pool[1:]]
    assert ex.handle_confirms(cid, wrong, w.now).cause == "MissingConfirms"


def test_update_only_from_executor(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    upd = w.by_id[pool[0]].handle_execute(m, wrap, w.now)
    fake = w.keyring.sign(pool[1], M.UPDATE, cid, upd[2], upd[3])
    assert w.by_id[pool[2]].handle_update(fake, w.now).cause == "NotMember"
    outsider = next(e for e in w.enclaves if e.id not in pool)
    assert outsider.handle_update(upd, w.now).cause == "NotMember"


def test_replayed_request_is_a_dummy(created):
    w, cid, pool = created
    m, wrap, key = w.request(cid, ("inc",))
    w.run(cid, m, wrap)
    ex = w.by_id[pool[0]]
    before = ex.slots[cid].instance.state
    _, ok = w.run(cid, m, wrap)
    bundle = decode(ok[2])
    assert bundle["result"] is None
    after = ex.slots[cid].instance.state
    assert after.app == before.app and after.received == before.received and after.seq == before.seq + 1


def test_stale_update_cannot_roll_back(created):
    w, cid, pool = created
    m, wrap, _ = w.request(cid, ("inc",))
    upd1, _ = w.run(cid, m, wrap)
    m2, wrap2, _ = w.request(cid, ("inc",), nonce=2)
    w.run(cid, m2, wrap2)
    wd = w.by_id[pool[1]]
    value = wd.slots[cid].instance.state.app["public"]["value"]
    assert wd.handle_update(upd1, w.now).kind == M.CONFIRM
    assert wd.slots[cid].instance.state.app["public"]["value"] == value == 2


def test_creation_handlers(created):
    w, _, _ = created
    cr = w.enclaves[1]
    cid = w.tx(w.users[0], "initCreation", cr.id, hash_bytes(COUNTER)).result
    assert cr.handle_create((M.CREATE, cid, COUNTER), 3, w.now).cause == "NotCreator"  # not final yet
    w.finalize()
    w.feed_all()
    assert w.enclaves[0].handle_create((M.CREATE, cid, COUNTER), 3, w.now).cause == "NotCreator"
    assert cr.handle_create((M.CREATE, cid, b"other"), 3, w.now).cause == "NotCreator"
    assert cr.handle_create((M.CREATE, cid, COUNTER), 5, w.now).cause == "PoolSize"
    init = cr.handle_create((M.CREATE, cid, COUNTER), 3, w.now)
    assert cr.handle_create((M.CREATE, cid, COUNTER), 3, w.now) == init
    member = w.by_id[init[2][0]]
    assert member.handle_init(init, w.now).kind == M.CONFIRM
    assert member.handle_init(init, w.now).cause == "AlreadyInstalled"
    assert cr.handle_creation_confirms(cid, [], w.now).cause == "MissingConfirms"


def test_unknown_code_on_creation(created):
    w, _, _ = created
    code = b"no such contract"
    cr = w.enclaves[0]
    cid = w.tx(w.users[0], "initCreation", cr.id, hash_bytes(code)).result
    w.finalize()
    w.feed_all()
    assert cr.handle_create((M.CREATE, cid, code), 2, w.now).cause == "UnknownCode"


def test_pool_is_uniform():
    # chi-square over all ordered 2-subsets of 5 enclaves
    ring = KeyRing(b"uniform")
    tees = [ring.new_party(Kind.ENCLAVE, f"t{i}") for i in range(5)]
    creator = tees[0]
    draws = 20_000
    counts = Counter(sample_pool(tees, 2, b"seed", cid, creator) for cid in range(draws))
    cells = list(permutations(tees, 2))
    assert set(counts) == set(cells)
    expected = draws / len(cells)
    chi2 = sum((counts[c] - expected) ** 2 / expected for c in cells)
    assert chi2 < 43.8  # df=19, p=0.001


def test_pool_depends_on_seed_cid_creator():
    ring = KeyRing(b"x")
    tees = [ring.new_party(Kind.ENCLAVE, f"t{i}") for i in range(10)]
    base = sample_pool(tees, 4, b"a", 0, tees[0])
    assert base == sample_pool(tees, 4, b"a", 0, tees[0])
    others = {sample_pool(tees, 4, b"b", 0, tees[0]), sample_pool(tees, 4, b"a", 1, tees[0]),
              sample_pool(tees, 4, b"a", 0, tees[1])}
    assert base not in others


def test_private_moves_never_leave_in_plaintext():
    w = World(n=4, users=2).setup()
    cid, pool = w.create(RPS)
    secrets = []
    out = []
    for u, choice in ((0, "rock"), (1, "paper")):
        salt = hash_bytes(b"salt%d" % u)
        secrets.append(salt)
        m, wrap, _ = w.request(cid, ("play", choice, salt), user=u, nonce=u + 1)
        upd, ok = w.run(cid, m, wrap)
        out += [encode(m), encode(wrap), encode(upd), encode(ok)]
        if u == 0:
            state = ContractState.from_bytes(w.by_id[pool[0]].slots[cid].instance.get_state())
            assert state.app["private"]["moves"]
            assert "moves" not in decode(decode(ok[2])["pub"])["public"]
    for blob in out:
        for s in secrets:
            assert s not in blob
