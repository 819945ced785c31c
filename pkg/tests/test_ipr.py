import hashlib
import json
import random
import uuid
from dataclasses import replace
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agenttrust import crypto
from agenttrust.errors import (
    BackendUnavailable,
    IncompleteRecord,
    InvalidInitiatorSignature,
    NotInBatch,
    SelfInteraction,
    WrongResponder,
)
from agenttrust.identity import IdentityStore, create_did, rotate_key, sign_rotation
from agenttrust.ipr import (
    AnchorReceipt,
    FileJournalAnchorBackend,
    InMemoryAnchorBackend,
    InteractionProofRecord,
    MerkleBatch,
    anchor,
    build_merkle_batch,
    countersign_ipr,
    initiate_ipr,
    outcome_hash,
    prove_inclusion,
    verify_inclusion,
    verify_ipr,
)
from agenttrust.merkle import InclusionProof, inclusion_proof, merkle_root

from factories import T0, key_for, make_party


def sha(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


@pytest.fixture
def pair():
    ids = IdentityStore()
    return ids, make_party(ids, "alice"), make_party(ids, "bob")


def honest(ids, a, b, n=0):
    oh, _ = outcome_hash({"deal": n}, salt=bytes(16))
    rid = str(uuid.UUID(int=n, version=4))
    partial = initiate_ipr(a.key, a.did, b.did, oh, T0 + timedelta(seconds=n), record_id=rid)
    return countersign_ipr(b.key, partial, ids)


def test_outcome_hash_is_salted():
    h1, s1 = outcome_hash({"x": 1})
    h2, s2 = outcome_hash({"x": 1})
    assert s1 != s2 and h1 != h2 and len(s1) == 16
    assert outcome_hash({"x": 1}, s1)[0] == h1 == sha(b'{"x":1}' + s1)


def test_partial_record(pair):
    ids, a, b = pair
    oh, _ = outcome_hash("ok")
    partial = initiate_ipr(a.key, a.did, b.did, oh, T0)
    assert not partial.completed and partial.responder_signature is None
    assert crypto.verify(a.key.verifying_key, crypto.canonicalize(partial.core()), partial.initiator_signature)
    bad = replace(partial, outcome_hash=sha(b"other"))
    assert not crypto.verify(a.key.verifying_key, crypto.canonicalize(bad.core()), bad.initiator_signature)


def test_self_interaction(pair):
    _, a, _ = pair
    with pytest.raises(SelfInteraction):
        initiate_ipr(a.key, a.did, a.did, sha(b""), T0)


def test_countersign_and_verify(pair):
    ids, a, b = pair
    rec = honest(ids, a, b)
    assert rec.completed and verify_ipr(rec, ids)
    payload = json.loads(crypto.canonicalize(rec.responder_payload(rec.responder_key_id)))
    assert payload["initiatorSignature"] == crypto.encode_signature(rec.initiator_signature)


def test_countersign_by_third_key(pair):
    ids, a, b = pair
    partial = initiate_ipr(a.key, a.did, b.did, sha(b"x"), T0)
    with pytest.raises(WrongResponder):
        countersign_ipr(key_for("mallory"), partial, ids)


def test_countersign_tampered_partial(pair):
    ids, a, b = pair
    partial = initiate_ipr(a.key, a.did, b.did, sha(b"x"), T0)
    with pytest.raises(InvalidInitiatorSignature):
        countersign_ipr(b.key, replace(partial, outcome_hash=sha(b"y")), ids)


def test_swapped_responder_signature(pair):
    ids, a, b = pair
    r1, r2 = honest(ids, a, b, 1), honest(ids, a, b, 2)
    assert not verify_ipr(replace(r1, responder_signature=r2.responder_signature), ids)


def test_one_party_signing_both_sides(pair):
    ids, a, b = pair
    partial = initiate_ipr(a.key, a.did, b.did, sha(b"x"), T0)
    payload = crypto.canonicalize(partial.responder_payload(b.key_id))
    forged = replace(partial, responder_key_id=b.key_id, responder_signature=crypto.sign(a.key, payload))
    assert not verify_ipr(forged, ids)
    # pointing the responder key id at the initiator's own key
    payload = crypto.canonicalize(partial.responder_payload(a.key_id))
    forged = replace(partial, responder_key_id=a.key_id, responder_signature=crypto.sign(a.key, payload))
    assert not verify_ipr(forged, ids)


def test_second_did_sharing_the_same_key(pair):
    ids, a, _ = pair
    # sybil DID whose active key is rotated to alice's key
    tmp = key_for("sybil")
    did, doc = create_did(tmp.verifying_key, now=T0)
    doc = rotate_key(doc, a.key.verifying_key, sign_rotation(tmp, doc, a.key.verifying_key, T0))
    ids.put(doc)
    partial = initiate_ipr(a.key, a.did, did, sha(b"x"), T0 + timedelta(seconds=1))
    rec = countersign_ipr(a.key, partial, ids)
    assert not verify_ipr(rec, ids)


def test_record_roundtrip(pair):
    ids, a, b = pair
    rec = honest(ids, a, b)
    back = InteractionProofRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert back == rec and verify_ipr(back, ids)


def test_signature_by_rotated_out_key_still_verifies_for_old_record(pair):
    ids, a, b = pair
    rec = honest(ids, a, b)
    new = key_for("alice-2")
    ids.put(rotate_key(a.doc, new.verifying_key, sign_rotation(a.key, a.doc, new.verifying_key, T0 + timedelta(hours=1))))
    assert verify_ipr(rec, ids)
    late = initiate_ipr(a.key, a.did, b.did, sha(b"x"), T0 + timedelta(hours=2))
    with pytest.raises(InvalidInitiatorSignature):
        countersign_ipr(b.key, late, ids)


# -- merkle ----------------------------------------------------------------


def test_single_leaf_root(pair):
    ids, a, b = pair
    rec = honest(ids, a, b)
    assert build_merkle_batch([rec], T0).root == rec.leaf_digest()


def test_four_leaf_root_by_hand(pair):
    ids, a, b = pair
    recs = [honest(ids, a, b, n) for n in (3, 1, 4, 2)]
    leaves = [r.leaf_digest() for r in sorted(recs, key=lambda r: r.id)]
    l1, l2, l3, l4 = leaves
    expected = sha(sha(l1 + l2) + sha(l3 + l4))
    assert build_merkle_batch(recs, T0).root == expected
    # leaf digest is the digest of the canonical completed record
    assert l1 == sha(crypto.canonicalize(sorted(recs, key=lambda r: r.id)[0].to_dict()))


def test_three_leaf_duplicates_last():
    l = [sha(bytes([i])) for i in range(3)]
    assert merkle_root(l) == sha(sha(l[0] + l[1]) + sha(l[2] + l[2]))


def test_incomplete_record(pair):
    ids, a, b = pair
    partial = initiate_ipr(a.key, a.did, b.did, sha(b"x"), T0)
    with pytest.raises(IncompleteRecord):
        build_merkle_batch([honest(ids, a, b), partial], T0)


def test_eight_leaf_proofs_exhaustive(pair):
    ids, a, b = pair
    recs = [honest(ids, a, b, n) for n in range(8)]
    batch = build_merkle_batch(recs, T0)
    other = build_merkle_batch(recs[:7], T0)
    for r in recs:
        proof = prove_inclusion(batch, r.id)
        assert verify_inclusion(batch.root, r.leaf_digest(), proof)
        assert not verify_inclusion(other.root, r.leaf_digest(), proof)
        assert InclusionProof.from_dict(proof.to_dict()) == proof
    with pytest.raises(NotInBatch):
        prove_inclusion(batch, str(uuid.uuid4()))


def test_batch_order_independent_of_input_order(pair):
    ids, a, b = pair
    recs = [honest(ids, a, b, n) for n in range(5)]
    assert build_merkle_batch(recs, T0).root == build_merkle_batch(recs[::-1], T0).root
    leaves = [r.leaf_digest() for r in recs]
    assert merkle_root(leaves) != merkle_root(leaves[::-1])


@settings(max_examples=100)
@given(st.integers(min_value=1, max_value=40), st.binary(min_size=32, max_size=32), st.data())
def test_non_members_do_not_prove(n, stranger, data):
    leaves = [sha(i.to_bytes(4, "big")) for i in range(n)]
    root = merkle_root(leaves)
    idx = data.draw(st.integers(0, n - 1))
    proof = inclusion_proof(leaves, idx)
    assert verify_inclusion(root, leaves[idx], proof)
    if stranger not in leaves:
        assert not verify_inclusion(root, stranger, proof)


def test_batch_serialization(pair):
    ids, a, b = pair
    batch = build_merkle_batch([honest(ids, a, b, n) for n in range(3)], T0)
    assert MerkleBatch.from_dict(batch.to_dict()) == batch


# -- anchoring --------------------------------------------------------------


def test_memory_backend_reference_is_hex_root(pair):
    ids, a, b = pair
    batch = build_merkle_batch([honest(ids, a, b)], T0)
    backend = InMemoryAnchorBackend()
    r1 = anchor(batch, backend, T0)
    r2 = anchor(batch, backend, T0 + timedelta(minutes=1))
    assert r1.reference == batch.root.hex() == r2.reference
    assert r1 != r2 and r1.batch_root == r2.batch_root
    assert AnchorReceipt.from_dict(r1.to_dict()) == r1


def test_backend_fault(pair):
    ids, a, b = pair
    batch = build_merkle_batch([honest(ids, a, b)], T0)
    with pytest.raises(BackendUnavailable):
        anchor(batch, InMemoryAnchorBackend(fail=True), T0)


def test_file_journal_backend(pair, tmp_path):
    ids, a, b = pair
    backend = FileJournalAnchorBackend(tmp_path / "anchors" / "journal.jsonl")
    roots = []
    for n in range(3):
        batch = build_merkle_batch([honest(ids, a, b, n)], T0)
        receipt = anchor(batch, backend, T0)
        assert receipt.reference == f"journal:{n}:{batch.root.hex()}"
        roots.append(batch.root.hex())
    lines = [json.loads(x) for x in (tmp_path / "anchors" / "journal.jsonl").read_text().splitlines()]
    assert [x["root"] for x in lines] == roots and [x["seq"] for x in lines] == [0, 1, 2]


def test_randomized_honest_and_fabricated(pair):
    ids, a, b = pair
    rnd = random.Random(3)
    for n in range(50):
        rec = honest(ids, a, b, n)
        assert verify_ipr(rec, ids)
        field = rnd.choice(["outcome_hash", "timestamp", "initiator", "responder_signature"])
        if field == "outcome_hash":
            bad = replace(rec, outcome_hash=sha(rec.outcome_hash))
        elif field == "timestamp":
            bad = replace(rec, timestamp=rec.timestamp + timedelta(seconds=1))
        elif field == "initiator":
            bad = replace(rec, initiator=b.did, responder=a.did)
        else:
            bad = replace(rec, responder_signature=bytes(64))
        assert not verify_ipr(bad, ids)
