"""Envelope data model, canonical JSON form, signing and structural validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime
from decimal import Decimal, InvalidOperation
from typing import Any

from .. import crypto
from ..crypto import SigningKey
from ..errors import KeyNotActive, MalformedPattern, NotFound, UnknownKey
from ..identity import Did, Resolver
from ..timeutil import format_ts, parse_ts
from .patterns import validate_pattern

MAX_DELEGATION_DEPTH = 8

PURPOSES = frozenset(
    {"commerce", "data_read", "data_write", "communication", "delegation", "administration"}
)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


def _amount(value: Any) -> Decimal | None:
    if value is None:
        return None
    if isinstance(value, float):
        raise ValueError("amounts are decimal strings, not floats")
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise ValueError(f"bad amount: {value!r}") from exc


def _amount_str(value: Decimal) -> str:
    return format(value, "f")


def _drop_none(d: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class Delegation:
    allowed: bool = False
    max_depth: int = 0


@dataclass(frozen=True)
class Mandate:
    purpose: str
    allowed_actions: tuple[str, ...] = ()
    denied_actions: tuple[str, ...] = ()
    resources: tuple[dict[str, str], ...] = ()
    delegation: Delegation = field(default_factory=Delegation)

    def to_dict(self) -> dict[str, Any]:
        return {
            "purpose": self.purpose,
            "allowedActions": list(self.allowed_actions),
            "deniedActions": list(self.denied_actions),
            "resources": [dict(r) for r in self.resources],
            "delegation": {"allowed": self.delegation.allowed, "maxDepth": self.delegation.max_depth},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Mandate:
        deleg = d.get("delegation", {})
        return cls(
            purpose=d["purpose"],
            allowed_actions=tuple(d.get("allowedActions", ())),
            denied_actions=tuple(d.get("deniedActions", ())),
            resources=tuple(dict(r) for r in d.get("resources", ())),
            delegation=Delegation(bool(deleg.get("allowed", False)), int(deleg.get("maxDepth", 0))),
        )


@dataclass(frozen=True)
class TimeConstraints:
    ttl_seconds: int
    session_seconds: int | None = None
    allowed_days: frozenset[str] | None = None
    allowed_hours: tuple[int, int] | None = None  # [start, end) local hours
    timezone: str = "UTC"

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "ttlSeconds": self.ttl_seconds,
                "sessionSeconds": self.session_seconds,
                "allowedDays": (
                    [d for d in WEEKDAYS if d in self.allowed_days]
                    if self.allowed_days is not None
                    else None
                ),
                "allowedHours": list(self.allowed_hours) if self.allowed_hours else None,
                "timezone": self.timezone,
            }
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TimeConstraints:
        days = d.get("allowedDays")
        hours = d.get("allowedHours")
        return cls(
            ttl_seconds=int(d["ttlSeconds"]),
            session_seconds=d.get("sessionSeconds"),
            allowed_days=frozenset(days) if days is not None else None,
            allowed_hours=(int(hours[0]), int(hours[1])) if hours else None,
            timezone=d.get("timezone", "UTC"),
        )


@dataclass(frozen=True)
class FinancialConstraints:
    currency: str
    autonomous_threshold: Decimal | None = None
    step_up_threshold: Decimal | None = None
    approval_threshold: Decimal | None = None
    max_tx_per_hour: int | None = None

    def thresholds(self) -> dict[str, Decimal]:
        return {
            name: value
            for name, value in (
                ("autonomousThreshold", self.autonomous_threshold),
                ("stepUpThreshold", self.step_up_threshold),
                ("approvalThreshold", self.approval_threshold),
            )
            if value is not None
        }

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"currency": self.currency}
        data.update({k: _amount_str(v) for k, v in self.thresholds().items()})
        if self.max_tx_per_hour is not None:
            data["maxTxPerHour"] = self.max_tx_per_hour
        return data

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FinancialConstraints:
        return cls(
            currency=d["currency"],
            autonomous_threshold=_amount(d.get("autonomousThreshold")),
            step_up_threshold=_amount(d.get("stepUpThreshold")),
            approval_threshold=_amount(d.get("approvalThreshold")),
            max_tx_per_hour=d.get("maxTxPerHour"),
        )


@dataclass(frozen=True)
class Obligations:
    tool_allowlist: tuple[str, ...] | None = None
    require_human_approval_above: Decimal | None = None

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "toolAllowlist": list(self.tool_allowlist) if self.tool_allowlist is not None else None,
                "requireHumanApprovalAbove": (
                    _amount_str(self.require_human_approval_above)
                    if self.require_human_approval_above is not None
                    else None
                ),
            }
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Obligations:
        tools = d.get("toolAllowlist")
        return cls(
            tool_allowlist=tuple(tools) if tools is not None else None,
            require_human_approval_above=_amount(d.get("requireHumanApprovalAbove")),
        )


@dataclass(frozen=True)
class Constraints:
    time: TimeConstraints
    financial: FinancialConstraints | None = None
    jurisdictions: frozenset[str] | None = None
    counterparty_min_score: float | None = None
    obligations: Obligations | None = None

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "time": self.time.to_dict(),
                "financial": self.financial.to_dict() if self.financial else None,
                "jurisdictions": sorted(self.jurisdictions) if self.jurisdictions is not None else None,
                "counterpartyMinScore": self.counterparty_min_score,
                "obligations": self.obligations.to_dict() if self.obligations else None,
            }
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Constraints:
        jur = d.get("jurisdictions")
        return cls(
            time=TimeConstraints.from_dict(d["time"]),
            financial=FinancialConstraints.from_dict(d["financial"]) if d.get("financial") else None,
            jurisdictions=frozenset(jur) if jur is not None else None,
            counterparty_min_score=d.get("counterpartyMinScore"),
            obligations=Obligations.from_dict(d["obligations"]) if d.get("obligations") else None,
        )


@dataclass(frozen=True)
class Validity:
    issuer: Did
    verification_method: str
    holder: Did
    issued_at: datetime
    expires_at: datetime | None
    revocation_endpoint: str
    on_chain_anchor: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "issuer": str(self.issuer),
                "verificationMethod": self.verification_method,
                "holder": str(self.holder),
                "issuedAt": format_ts(self.issued_at),
                "expiresAt": format_ts(self.expires_at) if self.expires_at else None,
                "revocationEndpoint": self.revocation_endpoint,
                "onChainAnchor": self.on_chain_anchor,
            }
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Validity:
        return cls(
            issuer=Did.parse(d["issuer"]),
            verification_method=d["verificationMethod"],
            holder=Did.parse(d["holder"]),
            issued_at=parse_ts(d["issuedAt"]),
            expires_at=parse_ts(d["expiresAt"]) if d.get("expiresAt") else None,
            revocation_endpoint=d["revocationEndpoint"],
            on_chain_anchor=d.get("onChainAnchor"),
        )


@dataclass(frozen=True)
class AuthorizationEnvelope:
    mandate: Mandate
    constraints: Constraints
    validity: Validity
    parent_ref: str | None = None
    signature: bytes | None = None

    def unsigned_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "mandate": self.mandate.to_dict(),
                "constraints": self.constraints.to_dict(),
                "validity": self.validity.to_dict(),
                "parentRef": self.parent_ref,
            }
        )

    def signing_bytes(self) -> bytes:
        return crypto.canonicalize(self.unsigned_dict())

    def to_dict(self) -> dict[str, Any]:
        data = self.unsigned_dict()
        if self.signature is not None:
            data["proof"] = {
                "type": "Ed25519Signature2020",
                "verificationMethod": self.validity.verification_method,
                "proofValue": crypto.encode_signature(self.signature),
            }
        return data

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AuthorizationEnvelope:
        proof = d.get("proof")
        return cls(
            mandate=Mandate.from_dict(d["mandate"]),
            constraints=Constraints.from_dict(d["constraints"]),
            validity=Validity.from_dict(d["validity"]),
            parent_ref=d.get("parentRef"),
            signature=crypto.decode_signature(proof["proofValue"]) if proof else None,
        )

    @property
    def envelope_id(self) -> str:
        """Hex SHA-256 of the canonical signed form; children reference it as ``parentRef``."""
        return crypto.digest(crypto.canonicalize(self.to_dict())).hex()


def sign_envelope(env: AuthorizationEnvelope, key: SigningKey, resolver: Resolver | None = None) -> AuthorizationEnvelope:
    if resolver is not None:
        doc = resolver.resolve(env.validity.issuer)
        vm = doc.active_method_for(key.verifying_key)
        if vm is None or vm.key_id != env.validity.verification_method:
            raise KeyNotActive("signing key does not match the envelope's verification method")
    return replace(env, signature=crypto.sign(key, env.signing_bytes()))


def verify_envelope_proof(env: AuthorizationEnvelope, resolver: Resolver) -> bool:
    if env.signature is None:
        return False
    try:
        doc = resolver.resolve(env.validity.issuer)
        vm = doc.method(env.validity.verification_method)
    except (NotFound, UnknownKey):
        return False
    return vm.active and crypto.verify(vm.public_key, env.signing_bytes(), env.signature)


class Violation(str, enum.Enum):
    MISSING_EXPIRY = "MissingExpiry"
    INVALID_WINDOW = "InvalidValidityWindow"
    EXPIRED = "Expired"
    VALIDITY_EXCEEDS_TTL = "ValidityExceedsTtl"
    THRESHOLD_ORDER = "ThresholdOrder"
    NEGATIVE_THRESHOLD = "NegativeThreshold"
    DEPTH_EXCEEDED = "DepthExceeded"
    BAD_PROOF = "BadProof"
    MALFORMED_PATTERN = "MalformedPattern"
    UNKNOWN_PURPOSE = "UnknownPurpose"
    BAD_TIME_CONSTRAINT = "BadTimeConstraint"
    BAD_SCORE = "BadCounterpartyScore"


def _time_violations(t: TimeConstraints) -> bool:
    from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

    if t.ttl_seconds <= 0:
        return True
    if t.allowed_days is not None and not t.allowed_days <= set(WEEKDAYS):
        return True
    if t.allowed_hours is not None:
        start, end = t.allowed_hours
        if not (0 <= start <= 23 and 0 <= end <= 24 and start != end):
            return True
    try:
        ZoneInfo(t.timezone)
    except (ZoneInfoNotFoundError, ValueError):
        return True
    return False


def validate_envelope(env: AuthorizationEnvelope, resolver: Resolver, now: datetime) -> list[Violation]:
    """Structural and cryptographic checks; an empty list means the envelope is valid."""
    out: list[Violation] = []
    v = env.validity
    if v.expires_at is None:
        out.append(Violation.MISSING_EXPIRY)
    else:
        if v.expires_at <= v.issued_at:
            out.append(Violation.INVALID_WINDOW)
        elif (v.expires_at - v.issued_at).total_seconds() > env.constraints.time.ttl_seconds:
            out.append(Violation.VALIDITY_EXCEEDS_TTL)
        if now >= v.expires_at:
            out.append(Violation.EXPIRED)
    if env.mandate.purpose not in PURPOSES:
        out.append(Violation.UNKNOWN_PURPOSE)
    if not 0 <= env.mandate.delegation.max_depth <= MAX_DELEGATION_DEPTH:
        out.append(Violation.DEPTH_EXCEEDED)
    try:
        for pattern in env.mandate.allowed_actions + env.mandate.denied_actions:
            validate_pattern(pattern)
    except MalformedPattern:
        out.append(Violation.MALFORMED_PATTERN)
    if _time_violations(env.constraints.time):
        out.append(Violation.BAD_TIME_CONSTRAINT)
    fin = env.constraints.financial
    amounts = list(fin.thresholds().values()) if fin else []
    ob = env.constraints.obligations
    if ob and ob.require_human_approval_above is not None:
        amounts.append(ob.require_human_approval_above)
    if any(a < 0 for a in amounts):
        out.append(Violation.NEGATIVE_THRESHOLD)
    if fin:
        ordered = list(fin.thresholds().values())
        if any(a > b for a, b in zip(ordered, ordered[1:])):
            out.append(Violation.THRESHOLD_ORDER)
    score = env.constraints.counterparty_min_score
    if score is not None and not 0 <= score <= 100:
        out.append(Violation.BAD_SCORE)
    if not verify_envelope_proof(env, resolver):
        out.append(Violation.BAD_PROOF)
    return out
