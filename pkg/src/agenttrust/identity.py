"""Decentralized identifiers, DID Documents and key rotation.

A document never drops a key: rotation marks the old verification method
revoked (with a timestamp) and appends the new one, so signatures made before
the rotation stay attributable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Iterator, Protocol

import base58

from . import crypto
from .crypto import SigningKey, VerifyingKey
from .errors import NotFound, UnauthorizedRotation, UnknownKey
from .timeutil import format_ts, parse_ts, utcnow

DEFAULT_METHOD = "moltrust"
DID_CONTEXT = ["https://www.w3.org/ns/did/v1", "https://w3id.org/security/suites/ed25519-2020/v1"]
KEY_TYPE = "Ed25519VerificationKey2020"

_METHOD_RE = re.compile(r"^[a-z0-9]+$")
_ID_RE = re.compile(r"^[A-Za-z0-9._\-]+(:[A-Za-z0-9._\-]+)*$")


@dataclass(frozen=True, order=True)
class Did:
    method: str
    method_specific_id: str

    def __post_init__(self) -> None:
        if not _METHOD_RE.match(self.method):
            raise ValueError(f"invalid DID method: {self.method!r}")
        if not self.method_specific_id or not _ID_RE.match(self.method_specific_id):
            raise ValueError(f"invalid method-specific id: {self.method_specific_id!r}")

    def __str__(self) -> str:
        return f"did:{self.method}:{self.method_specific_id}"

    @classmethod
    def parse(cls, text: str | Did) -> Did:
        if isinstance(text, Did):
            return text
        parts = text.split(":", 2)
        if len(parts) != 3 or parts[0] != "did":
            raise ValueError(f"not a DID: {text!r}")
        return cls(parts[1], parts[2])


def did_for_key(key: VerifyingKey, method: str = DEFAULT_METHOD) -> Did:
    """Key-derived identifier: base58btc(SHA-256(pub)[:24])."""
    msid = base58.b58encode(crypto.digest(key.raw)[:24]).decode("ascii")
    return Did(method, msid)


@dataclass(frozen=True)
class VerificationMethod:
    key_id: str
    public_key: VerifyingKey
    status: str = "active"
    revoked_at: datetime | None = None

    @property
    def active(self) -> bool:
        return self.status == "active"

    def valid_at(self, ts: datetime) -> bool:
        """Whether this key could have produced a signature at ``ts``."""
        return self.active or (self.revoked_at is not None and ts < self.revoked_at)


@dataclass(frozen=True)
class DidDocument:
    id: Did
    verification_methods: tuple[VerificationMethod, ...]
    created: datetime
    updated: datetime
    controller: Did | None = None

    def __post_init__(self) -> None:
        ids = [vm.key_id for vm in self.verification_methods]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate key ids in DID document")

    @property
    def active_methods(self) -> list[VerificationMethod]:
        return [vm for vm in self.verification_methods if vm.active]

    @property
    def revoked_methods(self) -> list[VerificationMethod]:
        return [vm for vm in self.verification_methods if not vm.active]

    def method(self, key_id: str) -> VerificationMethod:
        for vm in self.verification_methods:
            if vm.key_id == key_id:
                return vm
        raise UnknownKey(key_id)

    def active_method_for(self, key: VerifyingKey) -> VerificationMethod | None:
        for vm in self.active_methods:
            if vm.public_key == key:
                return vm
        return None

    def to_dict(self) -> dict[str, Any]:
        did = str(self.id)
        methods = []
        for vm in self.verification_methods:
            entry: dict[str, Any] = {
                "id": vm.key_id,
                "type": KEY_TYPE,
                "controller": did,
                "publicKeyMultibase": vm.public_key.to_multibase(),
                "status": vm.status,
            }
            if vm.revoked_at is not None:
                entry["revokedAt"] = format_ts(vm.revoked_at)
            methods.append(entry)
        doc: dict[str, Any] = {
            "@context": list(DID_CONTEXT),
            "id": did,
            "verificationMethod": methods,
            "authentication": [vm.key_id for vm in self.active_methods],
            "assertionMethod": [vm.key_id for vm in self.active_methods],
            "created": format_ts(self.created),
            "updated": format_ts(self.updated),
        }
        if self.controller is not None:
            doc["controller"] = str(self.controller)
        return doc

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DidDocument:
        methods = tuple(
            VerificationMethod(
                key_id=m["id"],
                public_key=VerifyingKey.from_multibase(m["publicKeyMultibase"]),
                status=m.get("status", "active"),
                revoked_at=parse_ts(m["revokedAt"]) if m.get("revokedAt") else None,
            )
            for m in data["verificationMethod"]
        )
        controller = data.get("controller")
        return cls(
            id=Did.parse(data["id"]),
            verification_methods=methods,
            created=parse_ts(data["created"]),
            updated=parse_ts(data["updated"]),
            controller=Did.parse(controller) if controller else None,
        )


def create_did(
    key: VerifyingKey,
    method: str = DEFAULT_METHOD,
    *,
    controller: Did | None = None,
    now: datetime | None = None,
) -> tuple[Did, DidDocument]:
    now = now or utcnow()
    did = did_for_key(key, method)
    vm = VerificationMethod(key_id=f"{did}#key-1", public_key=key)
    return did, DidDocument(did, (vm,), created=now, updated=now, controller=controller)


# -- rotation ---------------------------------------------------------------


@dataclass(frozen=True)
class KeyRotationRecord:
    did: Did
    old_key_id: str
    new_key_id: str
    new_public_key: VerifyingKey
    timestamp: datetime
    authorizing_signature: bytes = b""

    def payload(self) -> dict[str, Any]:
        return {
            "did": str(self.did),
            "oldKeyId": self.old_key_id,
            "newKeyId": self.new_key_id,
            "newPublicKeyMultibase": self.new_public_key.to_multibase(),
            "timestamp": format_ts(self.timestamp),
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.payload(), "authorizingSignature": crypto.encode_signature(self.authorizing_signature)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KeyRotationRecord:
        return cls(
            did=Did.parse(data["did"]),
            old_key_id=data["oldKeyId"],
            new_key_id=data["newKeyId"],
            new_public_key=VerifyingKey.from_multibase(data["newPublicKeyMultibase"]),
            timestamp=parse_ts(data["timestamp"]),
            authorizing_signature=crypto.decode_signature(data["authorizingSignature"]),
        )


def next_key_id(doc: DidDocument) -> str:
    return f"{doc.id}#key-{len(doc.verification_methods) + 1}"


def sign_rotation(
    old_key: SigningKey, doc: DidDocument, new_key: VerifyingKey, now: datetime
) -> KeyRotationRecord:
    """Build the rotation record authorized by ``old_key``."""
    vm = doc.active_method_for(old_key.verifying_key)
    if vm is None:
        raise UnauthorizedRotation("signing key is not an active key of the document")
    record = KeyRotationRecord(doc.id, vm.key_id, next_key_id(doc), new_key, now)
    sig = crypto.sign(old_key, crypto.canonicalize(record.payload()))
    return replace(record, authorizing_signature=sig)


def rotate_key(doc: DidDocument, new_key: VerifyingKey, record: KeyRotationRecord) -> DidDocument:
    if record.did != doc.id:
        raise UnauthorizedRotation("rotation record names a different DID")
    old = doc.method(record.old_key_id)
    if not old.active:
        raise UnauthorizedRotation(f"{record.old_key_id} is already revoked")
    if record.new_public_key != new_key:
        raise UnauthorizedRotation("rotation record does not cover the supplied key")
    if not crypto.verify(old.public_key, crypto.canonicalize(record.payload()), record.authorizing_signature):
        raise UnauthorizedRotation("authorizing signature does not verify under the old key")
    if any(vm.key_id == record.new_key_id for vm in doc.verification_methods):
        raise UnauthorizedRotation(f"key id {record.new_key_id} already in use")
    methods = tuple(
        replace(vm, status="revoked", revoked_at=record.timestamp) if vm.key_id == old.key_id else vm
        for vm in doc.verification_methods
    )
    methods += (VerificationMethod(record.new_key_id, new_key),)
    return replace(doc, verification_methods=methods, updated=record.timestamp)


def verify_control(did: Did, challenge: bytes, sig: bytes, doc: DidDocument) -> bool:
    """True iff ``sig`` over ``challenge`` verifies under an active key of ``doc``."""
    if doc.id != did:
        return False
    return any(crypto.verify(vm.public_key, challenge, sig) for vm in doc.active_methods)


# -- resolution -------------------------------------------------------------


class Resolver(Protocol):
    def resolve(self, did: Did) -> DidDocument: ...


@dataclass
class IdentityStore:
    """In-memory DID registry; callers serialize writes."""

    documents: dict[Did, DidDocument] = field(default_factory=dict)

    def put(self, doc: DidDocument) -> None:
        self.documents[doc.id] = doc

    def resolve(self, did: Did | str) -> DidDocument:
        did = Did.parse(did)
        try:
            return self.documents[did]
        except KeyError:
            raise NotFound(str(did)) from None

    def __contains__(self, did: object) -> bool:
        return did in self.documents

    def __iter__(self) -> Iterator[DidDocument]:
        return iter(self.documents.values())


def resolve(did: Did | str, store: Resolver) -> DidDocument:
    return store.resolve(Did.parse(did))
