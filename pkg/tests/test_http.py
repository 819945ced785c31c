import json

import pytest
from fastapi.testclient import TestClient

from agenttrust import crypto
from agenttrust.credential import issue_credential
from agenttrust.identity import sign_rotation
from agenttrust.interop import falco_line
from agenttrust.ipr import countersign_ipr, initiate_ipr, outcome_hash
from agenttrust.registry import Registry, RegistryConfig, sign_request, verify_score_response
from agenttrust.registry.app import create_app
from agenttrust.trust import sign_endorsement
from factories import OPERATOR, Clock, child_of, key_for, make_envelope, make_party, revocation_event

GUARD = RegistryConfig(guard_allowed_hosts=("testclient",), max_body_bytes=64 * 1024)


@pytest.fixture
def clock():
    return Clock()


@pytest.fixture
def reg(clock):
    return Registry(OPERATOR, clock=clock)


@pytest.fixture
def client(reg):
    return TestClient(create_app(reg, GUARD))


def register(client, name, principal=None, verticals=()):
    p = make_party(None, name)
    c = client.post("/challenges", json={"did": str(p.did)}).json()["challenge"]
    body = {
        "didDocument": p.doc.to_dict(),
        "principal": str(principal or p.did),
        "challenge": c,
        "signature": crypto.encode_signature(crypto.sign(p.key, c.encode())),
        "verticals": list(verticals),
    }
    r = client.post("/agents", json=body)
    assert r.status_code == 201, r.text
    return p


def endorse(client, reg, a, b, vertical="shopping"):
    return client.post("/endorsements", json=sign_endorsement(a.key, a.did, b.did, vertical, reg.clock()).to_dict())


def test_register_and_lookup(client):
    p = register(client, "alice", verticals=["travel"])
    r = client.get(f"/agents/{p.did}")
    assert r.status_code == 200
    assert r.json()["agent"]["did"] == str(p.did)
    assert r.json()["didDocument"] == p.doc.to_dict()
    assert client.get(f"/dids/{p.did}").json() == p.doc.to_dict()
    assert client.get("/agents/did:moltrust:nobody").status_code == 404


def test_register_errors(client):
    p = register(client, "alice")
    c = client.post("/challenges", json={"did": str(p.did)}).json()["challenge"]
    body = {"didDocument": p.doc.to_dict(), "principal": str(p.did), "challenge": c,
            "signature": crypto.encode_signature(crypto.sign(p.key, c.encode()))}
    r = client.post("/agents", json=body)
    assert r.status_code == 409 and r.json()["error"] == "DuplicateDid"
    q = make_party(None, "bob")
    c = client.post("/challenges", json={"did": str(q.did)}).json()["challenge"]
    body = {"didDocument": q.doc.to_dict(), "principal": str(q.did), "challenge": c,
            "signature": crypto.encode_signature(crypto.sign(key_for("zz"), c.encode()))}
    r = client.post("/agents", json=body)
    assert r.status_code == 401 and r.json()["error"] == "BadProofOfControl"


@pytest.mark.parametrize(
    "raw,status",
    [
        (b'{"did": "x", "did": "y"}', 400),
        (b"[1, 2]", 400),
        (b'{"did": NaN}', 400),
        (b"not json", 400),
        (b"{}", 400),
    ],
)
def test_strict_body_parsing(client, raw, status):
    r = client.post("/challenges", content=raw, headers={"content-type": "application/json"})
    assert r.status_code == status
    assert "error" in r.json()


def test_oversize_body(client):
    r = client.post("/challenges", content=b'{"did":"' + b"a" * 70000 + b'"}')
    assert r.status_code == 400 and "exceeds" in r.json()["detail"]


def test_signed_score_round_trip(client, reg):
    subject = register(client, "subject")
    es = [register(client, f"e{i}") for i in range(3)]
    assert client.get(f"/agents/{subject.did}/score").json()["score"]["withheld"] is True
    for e in es:
        assert endorse(client, reg, e, subject).status_code == 201
    resp = client.get(f"/agents/{subject.did}/score").json()
    operator = client.get("/.well-known/did.json").json()
    assert operator["id"] == resp["registryDid"]
    assert verify_score_response(resp, operator)
    resp["score"]["final"] = 99
    assert not verify_score_response(resp, operator)
    assert client.get("/agents/did:moltrust:ghost/score").status_code == 404


def test_endorsement_errors(client, reg):
    a, b = register(client, "a"), register(client, "b")
    r = endorse(client, reg, a, a)
    assert r.status_code == 422
    forged = sign_endorsement(b.key, a.did, b.did, "shopping", reg.clock()).to_dict()
    assert client.post("/endorsements", json=forged).status_code == 422
    r = client.post("/endorsements", json={"endorser": str(a.did)})
    assert r.status_code == 400


def test_rotation(client, reg):
    p = register(client, "rot")
    new = key_for("rot-2")
    rec = sign_rotation(p.key, p.doc, new.verifying_key, reg.clock()).to_dict()
    other = make_party(None, "x")
    assert client.post(f"/agents/{other.did}/rotate", json=rec).status_code == 400
    r = client.post(f"/agents/{p.did}/rotate", json=rec)
    assert r.status_code == 200 and len(r.json()["verificationMethod"]) == 2
    assert client.post(f"/agents/{p.did}/rotate", json=rec).status_code == 403


def test_ipr_flow_and_proof(client, reg):
    a, b = register(client, "a"), register(client, "b")
    h, _ = outcome_hash({"ok": True})
    partial = initiate_ipr(a.key, a.did, b.did, h, reg.clock(), record_id="ipr-1")
    r = client.post("/iprs", json=partial.to_dict())
    assert r.status_code == 201 and r.json()["completed"] is False
    full = countersign_ipr(b.key, partial, reg.identities)
    assert client.post("/iprs", json=full.to_dict()).json()["completed"] is True
    assert client.get("/iprs/ipr-1").json() == full.to_dict()
    assert client.get("/iprs/ipr-1/proof").status_code == 404  # not batched yet
    reg.flush_batches()
    r = client.post("/batches/tick")
    assert r.status_code == 200 and len(r.json()["anchored"]) == 1
    proof = client.get("/iprs/ipr-1/proof").json()
    assert proof["receipt"]["batchRoot"] == proof["root"]
    batches = client.get("/batches").json()
    assert batches[0]["root"] == proof["root"] and batches[0]["receipt"] is not None
    bad = {**full.to_dict(), "responderSignature": full.to_dict()["initiatorSignature"]}
    assert client.post("/iprs", json={**bad, "id": "ipr-2"}).status_code == 422
    assert client.get("/iprs/none").status_code == 404


def test_credentials_endpoints(client, reg):
    issuer, holder = register(client, "issuer"), register(client, "holder")
    vc = issue_credential(issuer.key, issuer.doc, holder.did, "VerifiedSkillCredential", {"skill": "x"}, 600, now=reg.clock())
    r = client.post("/credentials", json=vc.to_dict())
    assert r.status_code == 201 and r.json() == {"id": vc.id, "statusIndex": 0}
    assert client.post("/credentials/verify", json={"credential": vc.to_dict()}).json()["status"] == "Valid"
    assert client.get(f"/credentials/{vc.id}/status").json()["status"] == "active"
    forged = revocation_event(issuer, vc, reg.clock()).to_dict()
    forged["reason"] = "changed"
    assert client.post("/credentials/revoke", json=forged).status_code == 401
    r = client.post("/credentials/revoke", json=revocation_event(issuer, vc, reg.clock()).to_dict())
    assert r.status_code == 200
    assert client.post("/credentials/revoke", json=revocation_event(issuer, vc, reg.clock()).to_dict()).status_code == 409
    assert client.post("/credentials/verify", json={"id": vc.id}).json() == {
        "status": "Revoked",
        "valid": False,
        "checkedAt": "2026-03-02T12:00:00Z",
    }
    assert client.get(f"/credentials/{vc.id}/status").json()["status"] == "revoked"
    assert client.get(f"/status-lists/{issuer.did}").json()["type"] == "BitstringStatusList"
    assert client.get("/credentials/missing/status").status_code == 404


def test_authorize_endpoint(client, reg):
    principal = make_party(reg.identities, "p")
    agent = make_party(reg.identities, "ag")
    root = make_envelope(principal, agent.did)
    req = {"actor": str(agent.did), "action": "https://api.shop/orders/1", "timestamp": "2026-03-02T12:00:00Z",
           "amount": "600", "currency": "USDC", "jurisdiction": "CH"}
    r = client.post("/aae/authorize", json={"envelope": root.to_dict(), "request": req})
    assert r.json() == {"kind": "StepUp", "matchedRule": r.json()["matchedRule"]}
    sub = make_party(reg.identities, "sub")
    wide = child_of(root, agent, sub.did, allowed=("https://**",))
    r = client.post("/aae/authorize", json={"chain": [root.to_dict(), wide.to_dict()], "request": req})
    assert r.status_code == 422 and r.json()["error"] == "ScopeExceedsParent"


def test_violations_endpoints(client, reg):
    owner = make_party(None, "owner")
    agent = register(client, "agent", principal=owner.did)
    reporter = register(client, "reporter")
    body = sign_request({"agent": str(agent.did), "detail": "x"}, reporter.key, reporter.key_id)
    r = client.post("/violations", json=body)
    assert r.status_code == 201
    vid = r.json()["id"]
    assert [v["id"] for v in client.get("/violations", params={"principal": str(owner.did)}).json()] == [vid]
    assert [v["id"] for v in client.get("/violations", params={"agent": str(agent.did)}).json()] == [vid]
    assert client.post("/violations", json={**body, "detail": "y"}).status_code == 401


def test_guard_events(client, reg):
    agent = register(client, "guarded")
    line = falco_line("Terminal shell", agent.did, "2026-03-02T12:00:00.5Z", evt_type="execve")
    ghost = falco_line("Terminal shell", make_party(None, "ghost").did, "2026-03-02T12:00:00Z")
    body = "\n".join([line, line, ghost, "{oops", ""])
    r = client.post("/guard/events", content=body.encode())
    assert r.status_code == 207
    data = r.json()
    assert [s["line"] for s in data["stored"]] == [1, 2]
    assert data["stored"][0]["violationId"] == data["stored"][1]["violationId"]
    assert [(x["line"], x["error"]) for x in data["rejected"]] == [(3, "UnknownAgent"), (4, "JSONDecodeError")]
    assert client.post("/guard/events", content=line.encode()).status_code == 200
    assert len(client.get("/violations").json()) == 1


def test_guard_requires_local_host(reg):
    outside = TestClient(create_app(reg, RegistryConfig()))
    assert outside.post("/guard/events", content=b"").status_code == 403
    assert outside.post("/batches/tick").status_code == 403


def test_public_endpoints(client, reg):
    register(client, "x")
    stats = client.get("/swarm/stats").json()
    assert stats["agentCount"] == 1 and stats["seedAgents"] == []
    v = client.get("/version").json()
    assert v["registryDid"] == str(reg.operator_did) and v["logLength"] == len(reg.log)
    audit = client.get("/guard/audit/checks").json()
    assert audit["passed"] is True
    assert [c["id"] for c in audit["checks"]] == [3, 4, 5]


def test_anchor_outage_maps_to_503(clock):
    from agenttrust.ipr import InMemoryAnchorBackend

    reg = Registry(OPERATOR, clock=clock, anchor_backend=InMemoryAnchorBackend(fail=True))
    client = TestClient(create_app(reg, GUARD))
    register(client, "a")
    reg.flush_batches()
    r = client.post("/batches/tick")
    assert r.status_code == 503 and r.json()["error"] == "BackendUnavailable"


def test_score_body_is_canonical_json(client, reg):
    p = register(client, "c")
    raw = client.get(f"/agents/{p.did}/score").content
    resp = json.loads(raw)
    body = {k: v for k, v in resp.items() if k != "proof"}
    assert crypto.canonicalize(body) == crypto.canonicalize(crypto.parse_json(crypto.canonicalize(body)))
