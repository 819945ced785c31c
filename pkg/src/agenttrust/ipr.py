"""Interaction Proof Records: bilateral, sequentially countersigned, Merkle-batched.

The initiator signs the core fields. The responder signs the core fields plus
the initiator's signature, so a completed record commits both parties in
order and cannot be produced by either party alone.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Protocol

from . import crypto, merkle
from .crypto import SigningKey
from .errors import (
    BackendUnavailable,
    IncompleteRecord,
    InvalidInitiatorSignature,
    NotFound,
    NotInBatch,
    SelfInteraction,
    UnknownKey,
    WrongResponder,
)
from .identity import Did, Resolver
from .timeutil import format_ts, parse_ts

SALT_BYTES = 16


def outcome_hash(outcome: Any, salt: bytes | None = None) -> tuple[bytes, bytes]:
    """Salted digest of an outcome payload; returns (digest, salt). Keep the salt off-chain."""
    salt = os.urandom(SALT_BYTES) if salt is None else salt
    if len(salt) < SALT_BYTES:
        raise ValueError(f"outcome salt must be at least {SALT_BYTES} bytes")
    return crypto.digest(crypto.canonicalize(outcome) + salt), salt


@dataclass(frozen=True)
class InteractionProofRecord:
    id: str
    initiator: Did
    responder: Did
    outcome_hash: bytes
    timestamp: datetime
    initiator_key_id: str
    initiator_signature: bytes
    responder_key_id: str | None = None
    responder_signature: bytes | None = None

    @property
    def completed(self) -> bool:
        return self.responder_signature is not None

    def core(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "initiator": str(self.initiator),
            "responder": str(self.responder),
            "outcomeHash": self.outcome_hash.hex(),
            "timestamp": format_ts(self.timestamp),
            "initiatorKeyId": self.initiator_key_id,
        }

    def responder_payload(self, responder_key_id: str) -> dict[str, Any]:
        return {
            **self.core(),
            "initiatorSignature": crypto.encode_signature(self.initiator_signature),
            "responderKeyId": responder_key_id,
        }

    def to_dict(self) -> dict[str, Any]:
        data = {**self.core(), "initiatorSignature": crypto.encode_signature(self.initiator_signature)}
        if self.responder_signature is not None:
            data["responderKeyId"] = self.responder_key_id
            data["responderSignature"] = crypto.encode_signature(self.responder_signature)
        return data

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> InteractionProofRecord:
        rsig = d.get("responderSignature")
        return cls(
            id=d["id"],
            initiator=Did.parse(d["initiator"]),
            responder=Did.parse(d["responder"]),
            outcome_hash=bytes.fromhex(d["outcomeHash"]),
            timestamp=parse_ts(d["timestamp"]),
            initiator_key_id=d["initiatorKeyId"],
            initiator_signature=crypto.decode_signature(d["initiatorSignature"]),
            responder_key_id=d.get("responderKeyId"),
            responder_signature=crypto.decode_signature(rsig) if rsig is not None else None,
        )

    def leaf_digest(self) -> bytes:
        return crypto.digest(crypto.canonicalize(self.to_dict()))


def _signer_method(resolver: Resolver, did: Did, key_id: str, at: datetime):
    try:
        vm = resolver.resolve(did).method(key_id)
    except (NotFound, UnknownKey):
        return None
    if not key_id.startswith(f"{did}#") or not vm.valid_at(at):
        return None
    return vm


def verify_initiator_signature(ipr: InteractionProofRecord, resolver: Resolver) -> bool:
    vm = _signer_method(resolver, ipr.initiator, ipr.initiator_key_id, ipr.timestamp)
    return vm is not None and crypto.verify(
        vm.public_key, crypto.canonicalize(ipr.core()), ipr.initiator_signature
    )


def initiate_ipr(
    initiator_key: SigningKey,
    initiator: Did,
    responder: Did,
    outcome_hash: bytes,
    now: datetime,
    *,
    key_id: str | None = None,
    record_id: str | None = None,
) -> InteractionProofRecord:
    if initiator == responder:
        raise SelfInteraction("initiator and responder must differ")
    if len(outcome_hash) != 32:
        raise ValueError("outcome hash must be a 32-byte digest")
    partial = InteractionProofRecord(
        id=record_id or str(uuid.uuid4()),
        initiator=initiator,
        responder=responder,
        outcome_hash=outcome_hash,
        timestamp=now,
        initiator_key_id=key_id or f"{initiator}#key-1",
        initiator_signature=b"",
    )
    sig = crypto.sign(initiator_key, crypto.canonicalize(partial.core()))
    return replace(partial, initiator_signature=sig)


def countersign_ipr(
    responder_key: SigningKey, partial: InteractionProofRecord, resolver: Resolver
) -> InteractionProofRecord:
    if not verify_initiator_signature(partial, resolver):
        raise InvalidInitiatorSignature(partial.id)
    try:
        doc = resolver.resolve(partial.responder)
    except NotFound:
        raise WrongResponder(f"responder {partial.responder} is not resolvable") from None
    vm = doc.active_method_for(responder_key.verifying_key)
    if vm is None:
        raise WrongResponder("signing key is not an active key of the named responder")
    payload = crypto.canonicalize(partial.responder_payload(vm.key_id))
    return replace(partial, responder_key_id=vm.key_id, responder_signature=crypto.sign(responder_key, payload))


def verify_ipr(ipr: InteractionProofRecord, resolver: Resolver) -> bool:
    """Both signatures valid, in order, by two distinct keys of the two named DIDs."""
    if ipr.initiator == ipr.responder or not ipr.completed or ipr.responder_key_id is None:
        return False
    init_vm = _signer_method(resolver, ipr.initiator, ipr.initiator_key_id, ipr.timestamp)
    resp_vm = _signer_method(resolver, ipr.responder, ipr.responder_key_id, ipr.timestamp)
    if init_vm is None or resp_vm is None or init_vm.public_key == resp_vm.public_key:
        return False
    if not crypto.verify(init_vm.public_key, crypto.canonicalize(ipr.core()), ipr.initiator_signature):
        return False
    payload = crypto.canonicalize(ipr.responder_payload(ipr.responder_key_id))
    return crypto.verify(resp_vm.public_key, payload, ipr.responder_signature)


# -- batching ---------------------------------------------------------------


@dataclass(frozen=True)
class MerkleBatch:
    leaves: tuple[tuple[str, bytes], ...]  # (item id, leaf digest), id-sorted
    root: bytes
    built_at: datetime

    def index_of(self, item_id: str) -> int:
        for i, (lid, _) in enumerate(self.leaves):
            if lid == item_id:
                return i
        raise NotInBatch(item_id)

    def leaf_digest(self, item_id: str) -> bytes:
        return self.leaves[self.index_of(item_id)][1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "leaves": [{"id": lid, "digest": d.hex()} for lid, d in self.leaves],
            "root": self.root.hex(),
            "builtAt": format_ts(self.built_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MerkleBatch:
        return cls(
            tuple((leaf["id"], bytes.fromhex(leaf["digest"])) for leaf in d["leaves"]),
            bytes.fromhex(d["root"]),
            parse_ts(d["builtAt"]),
        )


def batch_from_leaves(items: Iterable[tuple[str, bytes]], now: datetime) -> MerkleBatch:
    leaves = tuple(sorted(items, key=lambda item: item[0]))
    return MerkleBatch(leaves, merkle.merkle_root([d for _, d in leaves]), now)


def build_merkle_batch(iprs: Iterable[InteractionProofRecord], now: datetime) -> MerkleBatch:
    records = list(iprs)
    if not records:
        raise ValueError("cannot batch an empty list")
    for r in records:
        if not r.completed:
            raise IncompleteRecord(f"{r.id} lacks the responder signature")
    return batch_from_leaves(((r.id, r.leaf_digest()) for r in records), now)


def prove_inclusion(batch: MerkleBatch, item_id: str) -> merkle.InclusionProof:
    return merkle.inclusion_proof([d for _, d in batch.leaves], batch.index_of(item_id))


verify_inclusion = merkle.verify_inclusion


# -- anchoring --------------------------------------------------------------


@dataclass(frozen=True)
class AnchorReceipt:
    batch_root: bytes
    backend_id: str
    reference: str
    anchored_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "batchRoot": self.batch_root.hex(),
            "backendId": self.backend_id,
            "reference": self.reference,
            "anchoredAt": format_ts(self.anchored_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AnchorReceipt:
        return cls(bytes.fromhex(d["batchRoot"]), d["backendId"], d["reference"], parse_ts(d["anchoredAt"]))


class AnchorBackend(Protocol):
    backend_id: str

    def submit(self, root: bytes) -> str: ...


@dataclass
class InMemoryAnchorBackend:
    """Deterministic mock: the reference is the hex root."""

    backend_id: str = "memory"
    fail: bool = False
    submitted: list[bytes] = field(default_factory=list)

    def submit(self, root: bytes) -> str:
        if self.fail:
            raise ConnectionError("anchor backend offline")
        self.submitted.append(root)
        return root.hex()


@dataclass
class FileJournalAnchorBackend:
    """Append-only journal of roots, one JSON line each."""

    path: Path
    backend_id: str = "file-journal"

    def submit(self, root: bytes) -> str:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a+", encoding="utf-8") as fh:
            fh.seek(0)
            line_no = sum(1 for _ in fh)
            fh.write(json.dumps({"seq": line_no, "root": root.hex()}) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return f"journal:{line_no}:{root.hex()}"


def anchor(batch: MerkleBatch, backend: AnchorBackend, now: datetime) -> AnchorReceipt:
    try:
        reference = backend.submit(batch.root)
    except Exception as exc:
        raise BackendUnavailable(f"{backend.backend_id}: {exc}") from exc
    if not reference:
        raise BackendUnavailable(f"{backend.backend_id} returned an empty reference")
    return AnchorReceipt(batch.root, backend.backend_id, reference, now)
