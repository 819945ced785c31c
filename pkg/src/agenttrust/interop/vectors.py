"""Behavior conformance vectors TV-001 … TV-005 and their harness.

The fixtures are generated from fixed seeds so regeneration is byte-stable;
``write_vectors`` refreshes the JSON files shipped under ``vectors/``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable

from .. import crypto
from ..aae import (
    ActionRequest,
    AuthorizationEnvelope,
    Constraints,
    Delegation,
    FinancialConstraints,
    Mandate,
    TimeConstraints,
    Validity,
    attenuation_check,
    evaluate,
    sign_envelope,
    verify_delegation_chain,
)
from ..crypto import SigningKey
from ..errors import ProtocolError
from ..identity import DidDocument, IdentityStore, create_did
from ..timeutil import format_ts, parse_ts

VECTOR_DIR = Path(__file__).with_name("vectors")
VECTOR_IDS = ("TV-001", "TV-002", "TV-003", "TV-004", "TV-005")
EPOCH = datetime(2026, 3, 2, 12, 0, 0, tzinfo=timezone.utc)
SHOP = "https://api.shop.example"


def _key(name: str) -> SigningKey:
    return SigningKey(hashlib.sha256(f"conformance:{name}".encode()).digest())


class _Fixture:
    def __init__(self) -> None:
        self.docs: dict[str, DidDocument] = {}
        self.keys: dict[str, SigningKey] = {}

    def party(self, name: str):
        if name not in self.docs:
            key = _key(name)
            _, doc = create_did(key.verifying_key, now=EPOCH)
            self.docs[name], self.keys[name] = doc, key
        return self.docs[name]

    def envelope(
        self,
        issuer: str,
        holder: str,
        *,
        allowed,
        denied=(),
        depth=3,
        parent: AuthorizationEnvelope | None = None,
        jurisdictions=("CH", "DE"),
        ttl=86400,
    ) -> AuthorizationEnvelope:
        idoc, hdoc = self.party(issuer), self.party(holder)
        env = AuthorizationEnvelope(
            mandate=Mandate("commerce", tuple(allowed), tuple(denied), (), Delegation(depth > 0, depth)),
            constraints=Constraints(
                time=TimeConstraints(ttl_seconds=ttl),
                financial=FinancialConstraints("USDC", Decimal("50"), Decimal("250"), Decimal("1000"), 20),
                jurisdictions=frozenset(jurisdictions),
            ),
            validity=Validity(
                issuer=idoc.id,
                verification_method=idoc.active_methods[0].key_id,
                holder=hdoc.id,
                issued_at=EPOCH,
                expires_at=EPOCH + timedelta(seconds=ttl),
                revocation_endpoint="https://registry.example/aae/status",
            ),
            parent_ref=parent.envelope_id if parent is not None else None,
        )
        return sign_envelope(env, self.keys[issuer])

    def request(self, actor: str, action: str, amount: str | None = None) -> dict[str, Any]:
        req: dict[str, Any] = {
            "actor": str(self.party(actor).id),
            "action": action,
            "timestamp": format_ts(EPOCH + timedelta(minutes=5)),
            "jurisdiction": "CH",
        }
        if amount is not None:
            req["amount"], req["currency"] = amount, "USDC"
        return req


def build_vectors() -> dict[str, dict[str, Any]]:
    fx = _Fixture()
    now = format_ts(EPOCH + timedelta(minutes=5))
    root = fx.envelope("principal", "agent-1", allowed=[f"{SHOP}/orders/**", f"{SHOP}/catalog/*"])
    d2 = fx.envelope("agent-1", "agent-2", allowed=[f"{SHOP}/orders/**"], depth=2, parent=root, jurisdictions=("CH",))
    d3 = fx.envelope("agent-2", "agent-3", allowed=[f"{SHOP}/orders/*/status"], depth=1, parent=d2, jurisdictions=("CH",))
    overlap = fx.envelope(
        "principal", "agent-1", allowed=[f"{SHOP}/orders/**"], denied=[f"{SHOP}/orders/*/refund"], depth=0
    )
    wide = fx.envelope(
        "agent-1", "agent-2", allowed=[f"{SHOP}/orders/**", f"{SHOP}/payouts/**"], depth=2, parent=root
    )

    def docs(*names):
        return [fx.party(n).to_dict() for n in names]

    vectors = {
        "TV-001": {
            "description": "top-level envelope evaluation",
            "kind": "evaluate",
            "didDocuments": docs("principal", "agent-1"),
            "chain": [root.to_dict()],
            "now": now,
            "cases": [
                {"request": fx.request("agent-1", f"{SHOP}/orders/7/status", "20"), "expected": {"kind": "Allow"}},
                {"request": fx.request("agent-1", f"{SHOP}/orders/7/pay", "300"), "expected": {"kind": "StepUp"}},
                {"request": fx.request("agent-1", f"{SHOP}/admin/users"), "expected": {"kind": "Deny", "reason": "NotPermitted"}},
            ],
        },
        "TV-002": {
            "description": "delegation chain of depth 2",
            "kind": "chain",
            "didDocuments": docs("principal", "agent-1", "agent-2"),
            "chain": [root.to_dict(), d2.to_dict()],
            "now": now,
            "expected": {"accepted": True},
            "cases": [
                {"request": fx.request("agent-2", f"{SHOP}/orders/7/status"), "expected": {"kind": "Allow"}},
                {"request": fx.request("agent-2", f"{SHOP}/catalog/shoes"), "expected": {"kind": "Deny", "reason": "NotPermitted"}},
            ],
        },
        "TV-003": {
            "description": "delegation chain of depth 3",
            "kind": "chain",
            "didDocuments": docs("principal", "agent-1", "agent-2", "agent-3"),
            "chain": [root.to_dict(), d2.to_dict(), d3.to_dict()],
            "now": now,
            "expected": {"accepted": True},
            "cases": [
                {"request": fx.request("agent-3", f"{SHOP}/orders/7/status"), "expected": {"kind": "Allow"}},
                {"request": fx.request("agent-3", f"{SHOP}/orders/7/cancel"), "expected": {"kind": "Deny", "reason": "NotPermitted"}},
            ],
        },
        "TV-004": {
            "description": "deny-precedence on overlapping allow and deny patterns",
            "kind": "evaluate",
            "didDocuments": docs("principal", "agent-1"),
            "chain": [overlap.to_dict()],
            "now": now,
            "cases": [
                {"request": fx.request("agent-1", f"{SHOP}/orders/7/refund", "10"), "expected": {"kind": "Deny", "reason": "ExplicitDeny"}},
                {"request": fx.request("agent-1", f"{SHOP}/orders/7/status"), "expected": {"kind": "Allow"}},
            ],
        },
        "TV-005": {
            "description": "delegated scope exceeding the parent is rejected",
            "kind": "chain",
            "didDocuments": docs("principal", "agent-1", "agent-2"),
            "chain": [root.to_dict(), wide.to_dict()],
            "now": now,
            "expected": {"accepted": False, "error": "ScopeExceedsParent"},
            "cases": [],
        },
    }
    for vid, vec in vectors.items():
        vec["id"] = vid
    return vectors


def write_vectors(directory: Path = VECTOR_DIR) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for vid, vec in build_vectors().items():
        path = directory / f"{vid}.json"
        path.write_bytes(crypto.canonicalize(vec) + b"\n")
        paths.append(path)
    return paths


def load_vectors(directory: Path = VECTOR_DIR) -> dict[str, dict[str, Any]]:
    return {vid: json.loads((directory / f"{vid}.json").read_text()) for vid in VECTOR_IDS}


@dataclass(frozen=True)
class VectorResult:
    id: str
    passed: bool
    evidence: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "passed": self.passed, "evidence": list(self.evidence)}


@dataclass(frozen=True)
class ConformanceReport:
    results: tuple[VectorResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, vid: str) -> VectorResult:
        return next(r for r in self.results if r.id == vid)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": sum(r.passed for r in self.results),
            "total": len(self.results),
            "results": [r.to_dict() for r in self.results],
        }


def _decision_matches(decision, expected: dict[str, Any]) -> bool:
    if decision.kind.value != expected["kind"]:
        return False
    return "reason" not in expected or (decision.reason is not None and decision.reason.value == expected["reason"])


def _run_one(
    vec: dict[str, Any],
    evaluate_fn: Callable,
    attenuation_fn: Callable,
) -> VectorResult:
    evidence: list[str] = []
    ok = True
    store = IdentityStore()
    for d in vec["didDocuments"]:
        store.put(DidDocument.from_dict(d))
    chain = [AuthorizationEnvelope.from_dict(e) for e in vec["chain"]]
    now = parse_ts(vec["now"])

    try:
        verify_delegation_chain(chain, store, now, check=attenuation_fn)
        outcome, err = True, None
    except ProtocolError as exc:
        outcome, err = False, type(exc).__name__
        evidence.append(f"chain rejected: {err}: {exc}")
    expected = vec.get("expected", {"accepted": True})
    if outcome != expected["accepted"] or (not outcome and expected.get("error") not in (None, err)):
        ok = False
        evidence.append(f"chain outcome {outcome} ({err}), expected {expected}")
    elif outcome:
        evidence.append(f"chain of {len(chain)} accepted")

    leaf = chain[-1]
    for case in vec.get("cases", []):
        req = ActionRequest.from_dict(case["request"])
        decision = evaluate_fn(leaf, req, now)
        got = decision.to_dict()
        if _decision_matches(decision, case["expected"]):
            evidence.append(f"{req.action}: {got['kind']} as expected")
        else:
            ok = False
            evidence.append(f"{req.action}: got {got}, expected {case['expected']}")
    return VectorResult(vec["id"], ok, evidence)


def run_conformance_vectors(
    suite: dict[str, dict[str, Any]] | None = None,
    *,
    evaluate_fn: Callable = evaluate,
    attenuation_fn: Callable = attenuation_check,
) -> ConformanceReport:
    """Run every vector; failures are report entries, never exceptions."""
    suite = load_vectors() if suite is None else suite
    results = []
    for vid in sorted(suite):
        try:
            results.append(_run_one(suite[vid], evaluate_fn, attenuation_fn))
        except Exception as exc:  # a malformed vector is a failed vector
            results.append(VectorResult(vid, False, [f"harness error: {type(exc).__name__}: {exc}"]))
    return ConformanceReport(tuple(results))
