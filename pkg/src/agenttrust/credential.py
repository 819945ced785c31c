"""Verifiable Credential issuance, verification and revocation.

Verification is fail-closed: any failure to obtain revocation status is a
denial, never a pass.
"""

from __future__ import annotations

import base64
import enum
import gzip
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Any, Protocol

from . import crypto
from .crypto import SigningKey
from .errors import (
    AlreadyRevoked,
    BadEventSignature,
    InvalidCredentialType,
    KeyNotActive,
    NotFound,
    NotIssuer,
    UnknownCredential,
    UnknownKey,
    ZeroTtl,
)
from .identity import Did, DidDocument, Resolver
from .timeutil import format_ts, parse_ts

VC_CONTEXT = "https://www.w3.org/ns/credentials/v2"
PROOF_TYPE = "Ed25519Signature2020"

CREDENTIAL_TYPES = frozenset(
    {
        "CoreIdentity",
        "VerifiedSkillCredential",
        "BuyerAgentCredential",
        "AuthorizedAgentCredential",
        "TravelAgentCredential",
        "PredictionTrackCredential",
        "ProductProvenanceCredential",
        "AuthorizedResellerCredential",
        "SkillEndorsementCredential",
    }
)

# bits in one status list; the W3C minimum for herd privacy
STATUS_LIST_BITS = 131072


def is_uuid4(value: str) -> bool:
    try:
        parsed = uuid.UUID(value)
    except (ValueError, AttributeError, TypeError):
        return False
    return parsed.version == 4 and str(parsed) == value.lower()


@dataclass(frozen=True)
class Proof:
    verification_method: str
    created: datetime
    signature: bytes

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": PROOF_TYPE,
            "created": format_ts(self.created),
            "verificationMethod": self.verification_method,
            "proofPurpose": "assertionMethod",
            "proofValue": crypto.encode_signature(self.signature),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Proof:
        return cls(
            verification_method=data["verificationMethod"],
            created=parse_ts(data["created"]),
            signature=crypto.decode_signature(data["proofValue"]),
        )


@dataclass(frozen=True)
class VerifiableCredential:
    id: str
    type: str
    issuer: Did
    subject: Did
    claims: dict[str, Any]
    issued_at: datetime
    expires_at: datetime
    revocation_endpoint: str
    proof: Proof | None = None

    def unsigned_dict(self) -> dict[str, Any]:
        return {
            "@context": [VC_CONTEXT],
            "id": f"urn:uuid:{self.id}",
            "type": ["VerifiableCredential", self.type],
            "issuer": str(self.issuer),
            "validFrom": format_ts(self.issued_at),
            "validUntil": format_ts(self.expires_at),
            "credentialSubject": {"id": str(self.subject), "claims": self.claims},
            "credentialStatus": {
                "id": self.revocation_endpoint,
                "type": "BitstringStatusListEntry",
                "statusPurpose": "revocation",
            },
        }

    def signing_bytes(self) -> bytes:
        return crypto.canonicalize(self.unsigned_dict())

    def to_dict(self) -> dict[str, Any]:
        data = self.unsigned_dict()
        if self.proof is not None:
            data["proof"] = self.proof.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VerifiableCredential:
        types = [t for t in data["type"] if t != "VerifiableCredential"]
        return cls(
            id=data["id"].removeprefix("urn:uuid:"),
            type=types[0] if types else "",
            issuer=Did.parse(data["issuer"]),
            subject=Did.parse(data["credentialSubject"]["id"]),
            claims=data["credentialSubject"].get("claims", {}),
            issued_at=parse_ts(data["validFrom"]),
            expires_at=parse_ts(data["validUntil"]),
            revocation_endpoint=data["credentialStatus"]["id"],
            proof=Proof.from_dict(data["proof"]) if "proof" in data else None,
        )


def issue_credential(
    issuer_key: SigningKey,
    issuer_doc: DidDocument,
    subject: Did,
    type: str,
    claims: dict[str, Any],
    ttl_seconds: int,
    *,
    now: datetime,
    revocation_endpoint: str | None = None,
    credential_id: str | None = None,
) -> VerifiableCredential:
    if ttl_seconds <= 0:
        raise ZeroTtl("credentials must carry a positive lifetime")
    if type not in CREDENTIAL_TYPES:
        raise InvalidCredentialType(type)
    vm = issuer_doc.active_method_for(issuer_key.verifying_key)
    if vm is None:
        raise KeyNotActive("issuer key is not active in the issuer document")
    cid = credential_id or str(uuid.uuid4())
    vc = VerifiableCredential(
        id=cid,
        type=type,
        issuer=issuer_doc.id,
        subject=subject,
        claims=dict(claims),
        issued_at=now,
        expires_at=now + timedelta(seconds=ttl_seconds),
        revocation_endpoint=revocation_endpoint or f"/credentials/{cid}/status",
    )
    sig = crypto.sign(issuer_key, vc.signing_bytes())
    return replace(vc, proof=Proof(vm.key_id, now, sig))


# -- status -----------------------------------------------------------------


@dataclass(frozen=True)
class CredentialStatus:
    state: str  # "active" | "revoked"
    revoked_at: datetime | None = None
    reason: str | None = None

    @property
    def revoked(self) -> bool:
        return self.state == "revoked"

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"status": self.state}
        if self.revoked_at is not None:
            data["revokedAt"] = format_ts(self.revoked_at)
            data["reason"] = self.reason
        return data


ACTIVE = CredentialStatus("active")


class RevocationChecker(Protocol):
    def check(self, credential_id: str, now: datetime) -> CredentialStatus: ...


@dataclass(frozen=True)
class RevocationEvent:
    credential_id: str
    issuer: Did
    revoked_at: datetime
    reason: str
    verification_method: str
    signature: bytes = b""

    def payload(self) -> dict[str, Any]:
        return {
            "credentialId": self.credential_id,
            "issuer": str(self.issuer),
            "revokedAt": format_ts(self.revoked_at),
            "reason": self.reason,
            "verificationMethod": self.verification_method,
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.payload(), "signature": crypto.encode_signature(self.signature)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RevocationEvent:
        return cls(
            credential_id=data["credentialId"],
            issuer=Did.parse(data["issuer"]),
            revoked_at=parse_ts(data["revokedAt"]),
            reason=data["reason"],
            verification_method=data["verificationMethod"],
            signature=crypto.decode_signature(data["signature"]),
        )


def verify_revocation_event(event: RevocationEvent, resolver: Resolver) -> bool:
    try:
        doc = resolver.resolve(event.issuer)
        vm = doc.method(event.verification_method)
    except (NotFound, UnknownKey):
        return False
    if not vm.valid_at(event.revoked_at):
        return False
    return crypto.verify(vm.public_key, crypto.canonicalize(event.payload()), event.signature)


@dataclass
class CredentialStore:
    """Issued credentials, their revocations and per-issuer status-list indices."""

    credentials: dict[str, VerifiableCredential] = field(default_factory=dict)
    revocations: dict[str, RevocationEvent] = field(default_factory=dict)
    status_indices: dict[str, int] = field(default_factory=dict)
    _issuer_counts: dict[Did, int] = field(default_factory=dict)

    def add(self, vc: VerifiableCredential) -> None:
        if vc.id in self.credentials:
            return
        self.credentials[vc.id] = vc
        idx = self._issuer_counts.get(vc.issuer, 0)
        self._issuer_counts[vc.issuer] = idx + 1
        self.status_indices[vc.id] = idx

    def get(self, credential_id: str) -> VerifiableCredential:
        try:
            return self.credentials[credential_id]
        except KeyError:
            raise UnknownCredential(credential_id) from None

    def apply_revocation(self, event: RevocationEvent, resolver: Resolver) -> None:
        vc = self.get(event.credential_id)
        if event.issuer != vc.issuer:
            raise NotIssuer(f"{event.issuer} did not issue {vc.id}")
        if not verify_revocation_event(event, resolver):
            raise BadEventSignature(f"revocation of {vc.id} is not signed by its issuer")
        if vc.id in self.revocations:
            raise AlreadyRevoked(vc.id)
        self.revocations[vc.id] = event

    def status(self, credential_id: str) -> CredentialStatus:
        self.get(credential_id)
        event = self.revocations.get(credential_id)
        if event is None:
            return ACTIVE
        return CredentialStatus("revoked", event.revoked_at, event.reason)

    def check(self, credential_id: str, now: datetime) -> CredentialStatus:
        return self.status(credential_id)

    def status_list(self, issuer: Did) -> dict[str, Any]:
        ids = [cid for cid, vc in self.credentials.items() if vc.issuer == issuer]
        return encode_status_list(self.status_indices[cid] for cid in ids if cid in self.revocations)


def check_status(credential_id: str, store: CredentialStore) -> CredentialStatus:
    return store.status(credential_id)


def revoke_credential(
    issuer_key: SigningKey,
    credential_id: str,
    reason: str,
    now: datetime,
    *,
    store: CredentialStore,
    resolver: Resolver,
) -> RevocationEvent:
    vc = store.get(credential_id)
    vm = resolver.resolve(vc.issuer).active_method_for(issuer_key.verifying_key)
    if vm is None:
        raise NotIssuer("key does not belong to an active method of the issuer")
    if credential_id in store.revocations:
        raise AlreadyRevoked(credential_id)
    event = RevocationEvent(credential_id, vc.issuer, now, reason, vm.key_id)
    event = replace(event, signature=crypto.sign(issuer_key, crypto.canonicalize(event.payload())))
    store.apply_revocation(event, resolver)
    return event


def encode_status_list(revoked_indices) -> dict[str, Any]:
    """GZIP + base64url bitstring; bit 0 is the most significant bit of byte 0."""
    bits = bytearray(STATUS_LIST_BITS // 8)
    for idx in revoked_indices:
        bits[idx // 8] |= 0x80 >> (idx % 8)
    compressed = gzip.compress(bytes(bits), mtime=0)
    encoded = "u" + base64.urlsafe_b64encode(compressed).decode("ascii").rstrip("=")
    return {"type": "BitstringStatusList", "statusPurpose": "revocation", "encodedList": encoded}


def decode_status_list(encoded: str) -> bytes:
    text = encoded.removeprefix("u")
    raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    return gzip.decompress(raw)


def status_bit(bitstring: bytes, index: int) -> bool:
    return bool(bitstring[index // 8] & (0x80 >> (index % 8)))


@dataclass
class CachedStatusChecker:
    """Caches upstream status answers for at most ``ttl_seconds``.

    A revocation becomes visible no later than ``ttl_seconds`` after it is
    recorded upstream; ``invalidate`` makes it visible immediately.
    """

    source: RevocationChecker
    ttl_seconds: float = 60.0
    _cache: dict[str, tuple[CredentialStatus, datetime]] = field(default_factory=dict)

    def check(self, credential_id: str, now: datetime) -> CredentialStatus:
        hit = self._cache.get(credential_id)
        if hit is not None:
            status, fetched_at = hit
            if status.revoked or (now - fetched_at).total_seconds() < self.ttl_seconds:
                return status
        status = self.source.check(credential_id, now)
        self._cache[credential_id] = (status, now)
        return status

    def invalidate(self, credential_id: str | None = None) -> None:
        if credential_id is None:
            self._cache.clear()
        else:
            self._cache.pop(credential_id, None)


# -- verification -----------------------------------------------------------


class VerificationStatus(str, enum.Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    REVOKED = "Revoked"
    BAD_SIGNATURE = "BadSignature"
    REVOCATION_UNREACHABLE = "RevocationUnreachable"
    ISSUER_UNKNOWN = "IssuerUnknown"


@dataclass(frozen=True)
class VerificationResult:
    status: VerificationStatus
    checked_at: datetime

    @property
    def valid(self) -> bool:
        return self.status is VerificationStatus.VALID


def _signature_ok(vc: VerifiableCredential, doc: DidDocument) -> bool:
    if vc.proof is None or not is_uuid4(vc.id) or vc.expires_at <= vc.issued_at:
        return False
    try:
        vm = doc.method(vc.proof.verification_method)
    except UnknownKey:
        return False
    if not vm.active:
        return False
    return crypto.verify(vm.public_key, vc.signing_bytes(), vc.proof.signature)


def verify_credential(
    vc: VerifiableCredential,
    resolver: Resolver,
    revocation_checker: RevocationChecker,
    now: datetime,
) -> VerificationResult:
    """Checks run issuer, signature, expiry, revocation; the first failure wins."""

    def result(status: VerificationStatus) -> VerificationResult:
        return VerificationResult(status, now)

    try:
        doc = resolver.resolve(vc.issuer)
    except NotFound:
        return result(VerificationStatus.ISSUER_UNKNOWN)
    if not _signature_ok(vc, doc):
        return result(VerificationStatus.BAD_SIGNATURE)
    if now >= vc.expires_at:
        return result(VerificationStatus.EXPIRED)
    try:
        status = revocation_checker.check(vc.id, now)
    except Exception:
        # fail closed on any fault, including unknown ids at the status source
        return result(VerificationStatus.REVOCATION_UNREACHABLE)
    if not isinstance(status, CredentialStatus):
        return result(VerificationStatus.REVOCATION_UNREACHABLE)
    if status.revoked:
        return result(VerificationStatus.REVOKED)
    return result(VerificationStatus.VALID)
