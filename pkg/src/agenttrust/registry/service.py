"""Registry state machine.

Every mutation is validated, appended to the event log, then applied. Replay
feeds the same entries through the same ``_apply_*`` functions, so a replayed
registry is bit-identical to the live one (see ``canonical_state``). The clock
is injected; nothing below reads wall time except the default clock.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Iterable

from .. import crypto
from ..aae import (
    ActionRequest,
    AuthorizationEnvelope,
    Decision,
    DecisionKind,
    DenyReason,
    evaluate,
    verify_delegation_chain,
)
from ..credential import (
    ACTIVE,
    CachedStatusChecker,
    CredentialStore,
    RevocationEvent,
    VerifiableCredential,
    VerificationResult,
    VerificationStatus,
    verify_credential,
)
from ..crypto import SigningKey
from ..errors import (
    BadEventSignature,
    BadProofOfControl,
    DuplicateDid,
    InvalidEndorsement,
    InvalidRecord,
    NotFound,
    PrincipalMismatch,
    ProtocolError,
    UnknownAgent,
    UnknownCredential,
    UnknownKey,
)
from ..identity import Did, DidDocument, IdentityStore, KeyRotationRecord, create_did, did_for_key, rotate_key, verify_control
from ..ipr import (
    AnchorBackend,
    AnchorReceipt,
    FileJournalAnchorBackend,
    InMemoryAnchorBackend,
    InteractionProofRecord,
    MerkleBatch,
    anchor,
    batch_from_leaves,
    prove_inclusion,
    verify_initiator_signature,
    verify_ipr,
)
from ..interop.kernel import KernelViolationEvent
from ..interop.qntm import aps_grade
from ..timeutil import format_ts, parse_ts, utcnow
from ..trust import (
    CREDENTIAL_VERTICALS,
    VERTICALS,
    AgentRecord,
    Endorsement,
    ImportedScore,
    TrustGraph,
    TrustScoreBreakdown,
    score_all,
    verify_endorsement,
)
from ..violations import Severity, ViolationKind, ViolationRecord, ViolationStore
from .audit import run_audit
from .config import RegistryConfig
from .log import EventLog

CHALLENGE_TTL = timedelta(minutes=5)
SCORE_STALENESS = timedelta(seconds=60)
CLOCK_SKEW = timedelta(minutes=5)
TX_WINDOW = timedelta(hours=1)


# -- signed request bodies --------------------------------------------------


def sign_request(payload: dict[str, Any], key: SigningKey, key_id: str) -> dict[str, Any]:
    """Attach an Ed25519 proof over the canonical payload."""
    sig = crypto.sign(key, crypto.canonicalize(payload))
    return {**payload, "proof": {"verificationMethod": key_id, "proofValue": crypto.encode_signature(sig)}}


def verify_signed_request(body: dict[str, Any], resolver, at: datetime) -> tuple[dict[str, Any], Did]:
    """Return (payload, signer DID) or raise BadEventSignature."""
    proof = body.get("proof")
    if not isinstance(proof, dict):
        raise BadEventSignature("missing proof")
    payload = {k: v for k, v in body.items() if k != "proof"}
    key_id = str(proof.get("verificationMethod", ""))
    signer_text = key_id.split("#", 1)[0]
    try:
        signer = Did.parse(signer_text)
        vm = resolver.resolve(signer).method(key_id)
    except (ValueError, NotFound, UnknownKey) as exc:
        raise BadEventSignature(f"unknown signer {key_id!r}") from exc
    sig = crypto.decode_signature(str(proof.get("proofValue", "")))
    if not vm.valid_at(at) or not crypto.verify(vm.public_key, crypto.canonicalize(payload), sig):
        raise BadEventSignature("proof does not verify")
    return payload, signer


def seed_designation(did: Did | str, base_score: float, label: str) -> dict[str, Any]:
    return {"did": str(did), "baseScore": base_score, "label": label}


def verify_score_response(response: dict[str, Any], operator_doc: DidDocument | dict[str, Any]) -> bool:
    """Client-side check of a signed score response against the published operator document."""
    if isinstance(operator_doc, dict):
        operator_doc = DidDocument.from_dict(operator_doc)
    proof = response.get("proof")
    if not isinstance(proof, dict) or response.get("registryDid") != str(operator_doc.id):
        return False
    body = {k: v for k, v in response.items() if k != "proof"}
    try:
        vm = operator_doc.method(str(proof.get("verificationMethod", "")))
    except UnknownKey:
        return False
    sig = crypto.decode_signature(str(proof.get("proofValue", "")))
    try:
        return vm.active and crypto.verify(vm.public_key, crypto.canonicalize(body), sig)
    except ProtocolError:
        return False


@dataclass(frozen=True)
class PendingLeaf:
    item_id: str
    digest: bytes
    queued_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.item_id, "digest": self.digest.hex(), "queuedAt": format_ts(self.queued_at)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PendingLeaf:
        return cls(d["id"], bytes.fromhex(d["digest"]), parse_ts(d["queuedAt"]))


class Registry:
    def __init__(
        self,
        operator_key: SigningKey | None = None,
        *,
        data_dir: Path | str | None = None,
        clock: Callable[[], datetime] = utcnow,
        anchor_backend: AnchorBackend | None = None,
        batch_size: int = 64,
        batch_interval: timedelta = timedelta(minutes=10),
        snapshot_every: int = 500,
        revocation_cache_seconds: float = 60.0,
    ) -> None:
        self.operator_key = operator_key
        self.clock = clock
        self.anchor_backend = anchor_backend or InMemoryAnchorBackend()
        self.batch_size = batch_size
        self.batch_interval = batch_interval
        self.snapshot_every = snapshot_every
        self._lock = threading.RLock()
        self._challenges: dict[str, tuple[Did, datetime]] = {}
        self._reset_state()
        self.status_checker = CachedStatusChecker(_LiveStatus(self), ttl_seconds=revocation_cache_seconds)
        self.log = EventLog(Path(data_dir) if data_dir is not None else None)
        self._restore()
        if not self.log.entries:
            if operator_key is None:
                raise ValueError("a new registry needs an operator key")
            _, doc = create_did(operator_key.verifying_key, now=self.clock())
            self._commit("genesis", {"operator": doc.to_dict()})
        elif operator_key is not None and self.operator_doc.active_method_for(operator_key.verifying_key) is None:
            raise BadProofOfControl("operator key does not match this registry's operator DID")

    @classmethod
    def from_config(cls, config: RegistryConfig, *, read_only: bool = False, clock: Callable[[], datetime] = utcnow) -> Registry:
        """Open the registry described by ``config``; ``read_only`` skips the operator key."""
        key = None if read_only else load_key_file(config.operator_key_path)
        if config.anchor_backend == "file":
            backend: AnchorBackend = FileJournalAnchorBackend(config.journal_path)
        else:
            backend = InMemoryAnchorBackend()
        return cls(
            key,
            data_dir=config.data_dir,
            clock=clock,
            anchor_backend=backend,
            batch_size=config.batch_size,
            batch_interval=timedelta(seconds=config.batch_interval_seconds),
            snapshot_every=config.snapshot_every,
            revocation_cache_seconds=config.revocation_cache_seconds,
        )

    # -- state ------------------------------------------------------------

    def _reset_state(self) -> None:
        self.operator_doc: DidDocument | None = None
        self.identities = IdentityStore()
        self.graph = TrustGraph()
        self.credentials = CredentialStore()
        self.violations = ViolationStore()
        self.iprs: dict[str, InteractionProofRecord] = {}
        self.pending: list[PendingLeaf] = []
        self.batches: list[MerkleBatch] = []
        self.receipts: list[AnchorReceipt] = []
        self.kernel_keys: dict[str, str] = {}
        self.tx_windows: dict[str, list[datetime]] = {}
        self._version = 0
        self._score_cache: tuple[int, datetime, dict[Did, TrustScoreBreakdown]] | None = None
        if hasattr(self, "status_checker"):
            self.status_checker.invalidate()

    def _restore(self) -> None:
        snap = self.log.latest_snapshot()
        start = 0
        if snap is not None:
            start, state = snap
            self._load_state(state)
        for entry in self.log.entries[start:]:
            self._apply(entry.type, entry.payload)

    def _commit(self, type_: str, payload: dict[str, Any]) -> None:
        entry = self.log.append(type_, payload)
        self._apply(entry.type, entry.payload)
        if self.snapshot_every and len(self.log) % self.snapshot_every == 0:
            self.log.write_snapshot(self.state_dict())

    def _apply(self, type_: str, p: dict[str, Any]) -> None:
        getattr(self, f"_apply_{type_}")(p)
        self._version += 1

    def _apply_genesis(self, p):
        self.operator_doc = DidDocument.from_dict(p["operator"])
        self.identities.put(self.operator_doc)

    def _apply_register(self, p):
        self.identities.put(DidDocument.from_dict(p["didDocument"]))
        self.graph.add_agent(AgentRecord.from_dict(p["agent"]))
        self.pending.append(PendingLeaf.from_dict(p["leaf"]))

    def _apply_rotate(self, p):
        self.identities.put(DidDocument.from_dict(p["didDocument"]))

    def _apply_endorse(self, p):
        self.graph.add_endorsement(Endorsement.from_dict(p["endorsement"]))

    def _apply_import(self, p):
        self.graph.add_import(ImportedScore.from_dict(p["import"]))

    def _apply_ipr(self, p):
        rec = InteractionProofRecord.from_dict(p["record"])
        self.iprs[rec.id] = rec
        if rec.completed:
            self.graph.record_verified_ipr(rec.initiator, rec.responder, rec.timestamp)
            self.pending.append(PendingLeaf.from_dict(p["leaf"]))

    def _apply_credential(self, p):
        self.credentials.add(VerifiableCredential.from_dict(p["credential"]))

    def _apply_revoke(self, p):
        event = RevocationEvent.from_dict(p["event"])
        self.credentials.revocations[event.credential_id] = event
        self.status_checker.invalidate(event.credential_id)

    def _apply_violation(self, p):
        self.violations.add(ViolationRecord.from_dict(p["violation"]))
        if "kernelKey" in p:
            self.kernel_keys[p["kernelKey"]] = p["violation"]["id"]

    def _apply_batch(self, p):
        batch = MerkleBatch.from_dict(p["batch"])
        done = {lid for lid, _ in batch.leaves}
        self.batches.append(batch)
        self.pending = [leaf for leaf in self.pending if leaf.item_id not in done]

    def _apply_anchor(self, p):
        self.receipts.append(AnchorReceipt.from_dict(p["receipt"]))

    def _apply_tx(self, p):
        at = parse_ts(p["at"])
        window = [t for t in self.tx_windows.get(p["envelopeId"], []) if t > at - TX_WINDOW]
        window.append(at)
        self.tx_windows[p["envelopeId"]] = window

    def state_dict(self) -> dict[str, Any]:
        """Complete registry state as plain JSON; ephemeral challenges are excluded."""
        with self._lock:
            return {
                "operator": self.operator_doc.to_dict() if self.operator_doc else None,
                "identities": [d.to_dict() for d in sorted(self.identities, key=lambda d: str(d.id))],
                "agents": [a.to_dict() for a in self.graph.agents.values()],
                "endorsements": [e.to_dict() for e in self.graph.endorsements],
                "imports": [i.to_dict() for i in self.graph.imports],
                "iprCounts": {str(k): v for k, v in self.graph.ipr_counts.items()},
                "iprs": [r.to_dict() for r in self.iprs.values()],
                "pending": [leaf.to_dict() for leaf in self.pending],
                "batches": [b.to_dict() for b in self.batches],
                "receipts": [r.to_dict() for r in self.receipts],
                "credentials": [vc.to_dict() for vc in self.credentials.credentials.values()],
                "revocations": [e.to_dict() for e in self.credentials.revocations.values()],
                "violations": [v.to_dict() for v in self.violations.all()],
                "kernelKeys": dict(sorted(self.kernel_keys.items())),
                "txWindows": {k: [format_ts(t) for t in v] for k, v in sorted(self.tx_windows.items())},
                "logHead": self.log.head,
                "logLength": len(self.log),
            }

    def canonical_state(self) -> bytes:
        return crypto.canonicalize(self.state_dict())

    def _load_state(self, s: dict[str, Any]) -> None:
        self._reset_state()
        if s["operator"] is not None:
            self.operator_doc = DidDocument.from_dict(s["operator"])
        for d in s["identities"]:
            self.identities.put(DidDocument.from_dict(d))
        for a in s["agents"]:
            self.graph.add_agent(AgentRecord.from_dict(a))
        self.graph.endorsements = [Endorsement.from_dict(e) for e in s["endorsements"]]
        self.graph.imports = [ImportedScore.from_dict(i) for i in s["imports"]]
        self.graph.ipr_counts = {Did.parse(k): v for k, v in s["iprCounts"].items()}
        for r in s["iprs"]:
            rec = InteractionProofRecord.from_dict(r)
            self.iprs[rec.id] = rec
        self.pending = [PendingLeaf.from_dict(x) for x in s["pending"]]
        self.batches = [MerkleBatch.from_dict(b) for b in s["batches"]]
        self.receipts = [AnchorReceipt.from_dict(r) for r in s["receipts"]]
        for vc in s["credentials"]:
            self.credentials.add(VerifiableCredential.from_dict(vc))
        for e in s["revocations"]:
            event = RevocationEvent.from_dict(e)
            self.credentials.revocations[event.credential_id] = event
        for v in s["violations"]:
            self.violations.add(ViolationRecord.from_dict(v))
        self.kernel_keys = dict(s["kernelKeys"])
        self.tx_windows = {k: [parse_ts(t) for t in v] for k, v in s["txWindows"].items()}

    # -- identity ---------------------------------------------------------

    @property
    def operator_did(self) -> Did:
        return self.operator_doc.id

    def issue_challenge(self, did: Did | str) -> dict[str, str]:
        did = Did.parse(did)
        now = self.clock()
        nonce = secrets.token_hex(32)
        with self._lock:
            self._challenges = {k: v for k, v in self._challenges.items() if v[1] > now}
            self._challenges[nonce] = (did, now + CHALLENGE_TTL)
        return {"challenge": nonce, "expiresAt": format_ts(now + CHALLENGE_TTL)}

    def resolve(self, did: Did | str) -> DidDocument:
        return self.identities.resolve(did)

    def register_agent(
        self,
        did_document: dict[str, Any] | DidDocument,
        principal: Did | str,
        challenge: str,
        signature: bytes,
        *,
        verticals: Iterable[str] = (),
        seed: dict[str, Any] | None = None,
    ) -> AgentRecord:
        doc = did_document if isinstance(did_document, DidDocument) else DidDocument.from_dict(did_document)
        principal = Did.parse(principal)
        verticals = frozenset(verticals)
        if not verticals <= VERTICALS:
            raise ValueError(f"unknown verticals: {sorted(verticals - VERTICALS)}")
        if doc.controller is not None and doc.controller != principal:
            raise BadProofOfControl("document controller differs from the declared principal")
        first = doc.verification_methods[0]
        if did_for_key(first.public_key, doc.id.method) != doc.id:
            raise BadProofOfControl("DID is not derived from its first key")
        now = self.clock()
        with self._lock:
            if doc.id in self.graph.agents or doc.id in self.identities:
                raise DuplicateDid(str(doc.id))
            issued = self._challenges.pop(challenge, None)
            if issued is None or issued[0] != doc.id or issued[1] <= now:
                raise BadProofOfControl("unknown, expired or foreign challenge")
            if not verify_control(doc.id, challenge.encode(), signature, doc):
                raise BadProofOfControl("challenge signature does not verify")
            base_score = label = None
            if seed is not None:
                try:
                    payload, signer = verify_signed_request(seed, self.identities, now)
                except BadEventSignature as exc:
                    raise BadProofOfControl(f"seed designation: {exc}") from exc
                if signer != self.operator_did or payload.get("did") != str(doc.id):
                    raise BadProofOfControl("seed designation must be signed by the operator")
                base_score, label = float(payload["baseScore"]), str(payload["label"])
            record = AgentRecord(
                did=doc.id,
                principal=principal,
                registered_at=now,
                last_activity_at=now,
                is_seed=seed is not None,
                base_score=base_score,
                verticals=verticals,
                label=label,
            )
            leaf = PendingLeaf(
                f"registration:{doc.id}",
                crypto.digest(crypto.canonicalize({"didDocument": doc.to_dict(), "agent": record.to_dict()})),
                now,
            )
            self._commit("register", {"didDocument": doc.to_dict(), "agent": record.to_dict(), "leaf": leaf.to_dict()})
            return self.graph.agent(doc.id)

    def rotate_key(self, record: dict[str, Any] | KeyRotationRecord) -> DidDocument:
        if isinstance(record, dict):
            record = KeyRotationRecord.from_dict(record)
        with self._lock:
            doc = self.identities.resolve(record.did)
            new_doc = rotate_key(doc, record.new_public_key, record)
            self._commit("rotate", {"didDocument": new_doc.to_dict(), "record": record.to_dict()})
            return new_doc

    def agent(self, did: Did | str) -> AgentRecord:
        return self.graph.agent(Did.parse(did))

    # -- endorsements and scores -------------------------------------------

    def add_endorsement(self, data: dict[str, Any] | Endorsement) -> Endorsement:
        e = data if isinstance(data, Endorsement) else Endorsement.from_dict(data)
        now = self.clock()
        with self._lock:
            self.graph.agent(e.subject)
            self.graph.agent(e.endorser)
            if e.timestamp > now + CLOCK_SKEW:
                raise InvalidEndorsement("endorsement is dated in the future")
            if not verify_endorsement(e, self.identities):
                raise InvalidEndorsement("endorsement signature or vertical is invalid")
            self._commit("endorse", {"endorsement": e.to_dict()})
            return e

    def import_score(self, subject: Did | str, source: str, score: float) -> ImportedScore:
        imp = ImportedScore(Did.parse(subject), source, float(score), self.clock())
        with self._lock:
            self.graph.agent(imp.subject)
            if not 0 <= imp.score <= 100:
                raise ValueError("imported scores must lie in [0, 100]")
            self._commit("import", {"import": imp.to_dict()})
            return imp

    def _graph_snapshot(self, now: datetime) -> TrustGraph:
        held: dict[Did, set[str]] = {}
        for vc in self.credentials.credentials.values():
            if vc.type in CREDENTIAL_VERTICALS and vc.id not in self.credentials.revocations and now < vc.expires_at:
                held.setdefault(vc.subject, set()).add(vc.type)
        agents = {
            did: replace(rec, verticals=rec.verticals | frozenset(held.get(did, ()))) for did, rec in self.graph.agents.items()
        }
        return TrustGraph(agents, list(self.graph.endorsements), list(self.graph.imports), dict(self.graph.ipr_counts))

    def scores(self, now: datetime | None = None) -> dict[Did, TrustScoreBreakdown]:
        now = now or self.clock()
        with self._lock:
            cached = self._score_cache
            if cached is not None and cached[0] == self._version and timedelta(0) <= now - cached[1] < SCORE_STALENESS:
                return cached[2]
            snapshot = self._graph_snapshot(now)
            version = self._version
        result = score_all(snapshot, now)
        with self._lock:
            if self._version == version:
                self._score_cache = (version, now, result)
        return result

    def score_breakdown(self, did: Did | str, now: datetime | None = None) -> TrustScoreBreakdown:
        did = Did.parse(did)
        self.graph.agent(did)
        return self.scores(now)[did]

    def score_response(self, did: Did | str) -> dict[str, Any]:
        if self.operator_key is None:
            raise RuntimeError("this registry was opened without its operator key")
        did = Did.parse(did)
        now = self.clock()
        b = self.score_breakdown(did, now)
        rec = self.graph.agent(did)
        if b.withheld:
            score: dict[str, Any] = {"withheld": True, "reason": "fewer than 3 distinct endorser DIDs"}
        else:
            score = {**b.to_dict(), "apsGrade": aps_grade(b.final).grade}
        body = {
            "agent": str(did),
            "principal": str(rec.principal),
            "score": score,
            "principalViolations": len(self.violations.for_principal(rec.principal)),
            "issuedAt": format_ts(now),
            "registryDid": str(self.operator_did),
        }
        key_id = self.operator_doc.active_method_for(self.operator_key.verifying_key).key_id
        return sign_request(body, self.operator_key, key_id)

    # -- interaction proofs and batches --------------------------------------

    def submit_ipr(self, data: dict[str, Any] | InteractionProofRecord) -> InteractionProofRecord:
        rec = data if isinstance(data, InteractionProofRecord) else InteractionProofRecord.from_dict(data)
        now = self.clock()
        with self._lock:
            existing = self.iprs.get(rec.id)
            if existing is not None and existing.completed:
                if existing == rec:
                    return existing
                raise InvalidRecord(f"record {rec.id} is already completed")
            if existing is not None and existing.core() != rec.core():
                raise InvalidRecord(f"record {rec.id} conflicts with the stored partial")
            if rec.completed:
                if not verify_ipr(rec, self.identities):
                    raise InvalidRecord("dual signature does not verify")
                leaf = PendingLeaf(rec.id, rec.leaf_digest(), now)
                self._commit("ipr", {"record": rec.to_dict(), "leaf": leaf.to_dict()})
                self._maybe_batch(now)
            else:
                if not verify_initiator_signature(rec, self.identities):
                    raise InvalidRecord("initiator signature does not verify")
                self._commit("ipr", {"record": rec.to_dict()})
            return rec

    def ipr(self, record_id: str) -> InteractionProofRecord:
        try:
            return self.iprs[record_id]
        except KeyError:
            raise NotFound(record_id) from None

    def _maybe_batch(self, now: datetime) -> MerkleBatch | None:
        if not self.pending:
            return None
        due = now - self.pending[0].queued_at >= self.batch_interval
        if len(self.pending) >= self.batch_size or due:
            return self._cut_batch(now)
        return None

    def _cut_batch(self, now: datetime) -> MerkleBatch:
        leaves = self.pending[: self.batch_size]
        batch = batch_from_leaves(((x.item_id, x.digest) for x in leaves), now)
        self._commit("batch", {"batch": batch.to_dict()})
        return batch

    def flush_batches(self) -> list[MerkleBatch]:
        """Cut every pending leaf into batches now, regardless of the triggers."""
        out = []
        now = self.clock()
        with self._lock:
            while self.pending:
                out.append(self._cut_batch(now))
        return out

    def tick(self) -> list[AnchorReceipt]:
        """Apply the time trigger and anchor any batch that lacks a receipt."""
        with self._lock:
            self._maybe_batch(self.clock())
        return self.anchor_pending()

    def anchor_pending(self) -> list[AnchorReceipt]:
        with self._lock:
            anchored = {r.batch_root for r in self.receipts}
            todo = [b for b in self.batches if b.root not in anchored]
        receipts = []
        for batch in todo:
            receipt = anchor(batch, self.anchor_backend, self.clock())  # may raise BackendUnavailable
            with self._lock:
                self._commit("anchor", {"receipt": receipt.to_dict()})
            receipts.append(receipt)
        return receipts

    def inclusion(self, item_id: str) -> dict[str, Any]:
        with self._lock:
            for batch in self.batches:
                if any(lid == item_id for lid, _ in batch.leaves):
                    receipt = next((r for r in self.receipts if r.batch_root == batch.root), None)
                    return {
                        "id": item_id,
                        "leaf": batch.leaf_digest(item_id).hex(),
                        "root": batch.root.hex(),
                        "proof": prove_inclusion(batch, item_id).to_dict(),
                        "receipt": receipt.to_dict() if receipt else None,
                    }
        raise NotFound(f"{item_id} is not in any batch yet")

    # -- credentials --------------------------------------------------------

    def register_credential(self, data: dict[str, Any] | VerifiableCredential) -> VerifiableCredential:
        vc = data if isinstance(data, VerifiableCredential) else VerifiableCredential.from_dict(data)
        now = self.clock()
        with self._lock:
            if vc.id in self.credentials.credentials:
                if self.credentials.credentials[vc.id] == vc:
                    return vc
                raise InvalidRecord(f"credential id {vc.id} is taken")
            result = verify_credential(vc, self.identities, _NeverRevoked(), now)
            if result.status is not VerificationStatus.VALID:
                raise InvalidRecord(f"credential rejected: {result.status.value}")
            self._commit("credential", {"credential": vc.to_dict()})
            return vc

    def revoke_credential(self, data: dict[str, Any] | RevocationEvent) -> RevocationEvent:
        """Accept a signed revocation event and invalidate every cache that could serve the old status."""
        event = data if isinstance(data, RevocationEvent) else RevocationEvent.from_dict(data)
        with self._lock:
            probe = CredentialStore(
                credentials=self.credentials.credentials, revocations=dict(self.credentials.revocations)
            )
            probe.apply_revocation(event, self.identities)  # NotIssuer, BadEventSignature, AlreadyRevoked
            self._commit("revoke", {"event": event.to_dict()})
            self._score_cache = None
            return event

    def credential_status(self, credential_id: str) -> dict[str, Any]:
        with self._lock:
            return {"id": credential_id, **self.credentials.status(credential_id).to_dict()}

    def credential(self, credential_id: str) -> VerifiableCredential:
        return self.credentials.get(credential_id)

    def status_list(self, issuer: Did | str) -> dict[str, Any]:
        with self._lock:
            return self.credentials.status_list(Did.parse(issuer))

    def verify_credential(self, data: dict[str, Any] | VerifiableCredential | str) -> VerificationResult:
        if isinstance(data, str):
            vc = self.credentials.get(data)
        elif isinstance(data, dict):
            vc = VerifiableCredential.from_dict(data)
        else:
            vc = data
        with self._lock:
            return verify_credential(vc, self.identities, self.status_checker, self.clock())

    # -- violations -----------------------------------------------------------

    def _store_violation(self, record: ViolationRecord, kernel_key: str | None = None) -> ViolationRecord:
        payload: dict[str, Any] = {"violation": record.to_dict()}
        if kernel_key is not None:
            payload["kernelKey"] = kernel_key
        self._commit("violation", payload)
        return record

    def report_violation(self, body: dict[str, Any]) -> ViolationRecord:
        """Store a violation report signed by a registered party or the operator."""
        now = self.clock()
        with self._lock:
            payload, reporter = verify_signed_request(body, self.identities, now)
            agent = self.graph.agent(Did.parse(payload["agent"]))
            principal = Did.parse(payload.get("principal", str(agent.principal)))
            if principal != agent.principal:
                raise PrincipalMismatch(f"{agent.did} is not operated by {principal}")
            record = ViolationRecord(
                id=str(uuid.uuid4()),
                principal=principal,
                agent=agent.did,
                kind=ViolationKind(payload.get("kind", "policy_violation")),
                severity=Severity(payload.get("severity", "fail")),
                detail=f"reported by {reporter}: {payload.get('detail', '')}",
                timestamp=now,
            )
            return self._store_violation(record)

    def record_kernel_event(self, event: KernelViolationEvent) -> ViolationRecord:
        with self._lock:
            key = event.idempotency_key
            if key in self.kernel_keys:
                vid = self.kernel_keys[key]
                return next(v for v in self.violations.all() if v.id == vid)
            agent = self.graph.agent(event.agent_did)
            record = ViolationRecord(
                id=str(uuid.UUID(bytes=bytes.fromhex(key)[:16], version=4)),
                principal=agent.principal,
                agent=agent.did,
                kind=ViolationKind.KERNEL_EVENT,
                severity=Severity(event.severity),
                detail=f"{event.rule_name}: {event.syscall_class} {event.resource}".strip(),
                timestamp=event.observed_at,
            )
            self._score_cache = None
            return self._store_violation(record, key)

    def violations_for(self, *, principal: Did | str | None = None, agent: Did | str | None = None) -> list[ViolationRecord]:
        with self._lock:
            if principal is not None:
                return self.violations.for_principal(Did.parse(principal))
            if agent is not None:
                return self.violations.for_agent(Did.parse(agent))
            return self.violations.all()

    # -- authorization ----------------------------------------------------------

    def authorize(self, chain: list[dict[str, Any]], request: dict[str, Any]) -> Decision:
        """Verify an envelope chain, evaluate the leaf, and enforce maxTxPerHour."""
        envelopes = [AuthorizationEnvelope.from_dict(e) for e in chain]
        req = ActionRequest.from_dict(request)
        now = self.clock()
        with self._lock:
            verify_delegation_chain(envelopes, self.identities, now)
            leaf = envelopes[-1]
            decision = evaluate(leaf, req, now)
            fin = leaf.constraints.financial
            if decision.denied or req.amount is None or fin is None or fin.max_tx_per_hour is None:
                return decision
            env_id = leaf.envelope_id
            recent = [t for t in self.tx_windows.get(env_id, []) if t > now - TX_WINDOW]
            if len(recent) >= fin.max_tx_per_hour:
                return Decision(DecisionKind.DENY, DenyReason.RATE_LIMITED, f"maxTxPerHour {fin.max_tx_per_hour}")
            self._commit("tx", {"envelopeId": env_id, "at": format_ts(now)})
            return decision

    # -- reporting ----------------------------------------------------------------

    def audit_checks(self, max_body_bytes: int = 256 * 1024) -> dict[str, Any]:
        with self._lock:
            return run_audit(self.clock(), max_body_bytes=max_body_bytes, registry=self)

    def swarm_stats(self) -> dict[str, Any]:
        with self._lock:
            seeds = [
                {"did": str(a.did), "baseScore": a.base_score, "label": a.label}
                for a in sorted(self.graph.agents.values(), key=lambda a: str(a.did))
                if a.is_seed
            ]
            return {
                "agentCount": len(self.graph.agents),
                "endorsementCount": len(self.graph.endorsements),
                "seedAgents": seeds,
                "iprCount": sum(1 for r in self.iprs.values() if r.completed),
                "violationCount": len(self.violations.all()),
                "credentialCount": len(self.credentials.credentials),
                "batchCount": len(self.batches),
                "anchoredBatchCount": len(self.receipts),
            }


class _NeverRevoked:
    """Status source for admission of a fresh credential (revocation is checked on use)."""

    def check(self, credential_id: str, now: datetime):
        return ACTIVE


class _LiveStatus:
    def __init__(self, registry: Registry) -> None:
        self.registry = registry

    def check(self, credential_id: str, now: datetime):
        return self.registry.credentials.check(credential_id, now)


def load_key_file(path: Path | str) -> SigningKey:
    data = json.loads(Path(path).read_text())
    seed = crypto.multibase_decode(data["privateKeyMultibase"])
    return SigningKey(seed)


def write_key_file(path: Path | str, key: SigningKey) -> dict[str, Any]:
    vk = key.verifying_key
    data = {
        "type": "Ed25519",
        "did": str(did_for_key(vk)),
        "publicKeyMultibase": vk.to_multibase(),
        "privateKeyMultibase": crypto.multibase_encode(key.seed),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=2)
    return {k: v for k, v in data.items() if k != "privateKeyMultibase"}


__all__ = [
    "PendingLeaf",
    "Registry",
    "UnknownAgent",
    "UnknownCredential",
    "load_key_file",
    "seed_designation",
    "sign_request",
    "verify_score_response",
    "verify_signed_request",
    "write_key_file",
]
