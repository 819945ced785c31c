"""Self-audit probes for input validation, signature verification and expiry.

Each probe builds its own throwaway keys and credentials, so running the audit
never touches registry state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Any, Callable

from .. import crypto
from ..credential import ACTIVE, VerificationStatus, issue_credential, verify_credential
from ..crypto import SigningKey
from ..errors import NonCanonicalizable
from ..identity import IdentityStore, create_did
from ..trust import verify_endorsement

NOT_IN_SCOPE = {
    1: "secrets_scan",
    2: "tls_enforcement",
    6: "rate_limit",
    7: "cors_policy",
    8: "dependency_audit",
    9: "logging_integrity",
}


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    cwe: str
    severity: str
    passed: bool
    findings: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.number,
            "name": self.name,
            "cwe": self.cwe,
            "severity": self.severity,
            "passed": self.passed,
            "findings": list(self.findings),
        }


class _Always:
    def check(self, credential_id: str, now: datetime):
        return ACTIVE


def _probe_keys(now: datetime):
    store = IdentityStore()
    parties = []
    for name in ("audit-issuer", "audit-subject", "audit-other"):
        key = SigningKey(hashlib.sha256(f"self-audit:{name}".encode()).digest())
        _, doc = create_did(key.verifying_key, now=now)
        store.put(doc)
        parties.append((key, doc))
    return store, parties


def _rejects(fn: Callable[[], Any], exc: type[Exception]) -> bool:
    try:
        fn()
    except exc:
        return True
    return False


def check_input_validation(max_body_bytes: int) -> CheckResult:
    findings = []
    probes = {
        "duplicate keys": lambda: crypto.parse_json('{"a":1,"a":2}'),
        "NaN literal": lambda: crypto.parse_json('{"a":NaN}'),
        "integer beyond 2^53": lambda: crypto.canonicalize({"n": 2**53}),
        "lone surrogate": lambda: crypto.canonicalize({"s": "\ud800"}),
        "trailing garbage": lambda: crypto.parse_json('{"a":1} x'),
    }
    for label, probe in probes.items():
        if not _rejects(probe, (ValueError, NonCanonicalizable)):
            findings.append(f"accepted {label}")
    if crypto.canonicalize(crypto.parse_json('{"b":2,"a":1}')) != b'{"a":1,"b":2}':
        findings.append("canonical form does not sort member names")
    if not 0 < max_body_bytes <= 16 * 1024 * 1024:
        findings.append(f"body limit {max_body_bytes} is unset or above 16 MiB")
    return CheckResult(3, "input_validation", "CWE-20", "fail", not findings, tuple(findings))


def check_signature_verification(now: datetime, registry=None) -> CheckResult:
    findings = []
    store, [(ik, idoc), (_, sdoc), (ok, _)] = _probe_keys(now)
    vc = issue_credential(ik, idoc, sdoc.id, "CoreIdentity", {"name": "probe"}, 3600, now=now)
    if verify_credential(vc, store, _Always(), now).status is not VerificationStatus.VALID:
        findings.append("an honest credential did not verify")
    tampered = replace(vc, claims={"name": "other"})
    if verify_credential(tampered, store, _Always(), now).status is not VerificationStatus.BAD_SIGNATURE:
        findings.append("tampered claims were accepted")
    foreign = replace(vc, proof=replace(vc.proof, signature=crypto.sign(ok, vc.signing_bytes())))
    if verify_credential(foreign, store, _Always(), now).status is not VerificationStatus.BAD_SIGNATURE:
        findings.append("a signature by a key outside the issuer's document was accepted")
    unsigned = replace(vc, proof=None)
    if verify_credential(unsigned, store, _Always(), now).status is not VerificationStatus.BAD_SIGNATURE:
        findings.append("an unsigned credential was accepted")
    if registry is not None:
        bad = [e for e in registry.graph.endorsements if not verify_endorsement(e, registry.identities)]
        if bad:
            findings.append(f"{len(bad)} stored endorsements fail re-verification")
    return CheckResult(4, "signature_verification", "CWE-347", "hard_fail", not findings, tuple(findings))


def check_expiry_enforcement(now: datetime) -> CheckResult:
    findings = []
    store, [(ik, idoc), (_, sdoc), _] = _probe_keys(now)
    vc = issue_credential(ik, idoc, sdoc.id, "CoreIdentity", {"name": "probe"}, 60, now=now)
    at = {
        "one microsecond before expiry": (vc.expires_at - timedelta(microseconds=1), VerificationStatus.VALID),
        "exactly at expiry": (vc.expires_at, VerificationStatus.EXPIRED),
        "one second after expiry": (vc.expires_at + timedelta(seconds=1), VerificationStatus.EXPIRED),
    }
    for label, (when, expected) in at.items():
        got = verify_credential(vc, store, _Always(), when).status
        if got is not expected:
            findings.append(f"{label}: {got.value}, expected {expected.value}")
    if not _rejects(lambda: verify_credential(vc, store, _Always(), vc.expires_at.replace(tzinfo=None)), TypeError):
        findings.append("a naive timestamp was compared against UTC expiry")
    return CheckResult(5, "expiry_enforcement", "CWE-613", "fail", not findings, tuple(findings))


def run_audit(now: datetime, *, max_body_bytes: int = 256 * 1024, registry=None) -> dict[str, Any]:
    results = [
        check_input_validation(max_body_bytes),
        check_signature_verification(now, registry),
        check_expiry_enforcement(now),
    ]
    return {
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
        "notInScope": [{"id": n, "name": name} for n, name in sorted(NOT_IN_SCOPE.items())],
    }
