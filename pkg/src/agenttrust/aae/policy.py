"""Per-request authorization decisions against a single envelope."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from fnmatch import fnmatchcase
from typing import Any, Mapping
from zoneinfo import ZoneInfo

from ..errors import CurrencyMismatch
from ..identity import Did
from .envelope import WEEKDAYS, AuthorizationEnvelope
from .patterns import any_match


@dataclass(frozen=True)
class ActionRequest:
    actor: Did
    action: str
    timestamp: datetime
    resource: Mapping[str, str] | None = None
    amount: Decimal | None = None
    currency: str | None = None
    tool: str | None = None
    counterparty_score: float | None = None
    jurisdiction: str | None = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ActionRequest:
        from ..timeutil import parse_ts

        amount = d.get("amount")
        return cls(
            actor=Did.parse(d["actor"]),
            action=d["action"],
            timestamp=parse_ts(d["timestamp"]),
            resource=d.get("resource"),
            amount=Decimal(amount) if amount is not None else None,
            currency=d.get("currency"),
            tool=d.get("tool"),
            counterparty_score=d.get("counterpartyScore"),
            jurisdiction=d.get("jurisdiction"),
        )


class DecisionKind(str, enum.Enum):
    ALLOW = "Allow"
    DENY = "Deny"
    STEP_UP = "StepUp"
    REQUIRE_HUMAN_APPROVAL = "RequireHumanApproval"


class DenyReason(str, enum.Enum):
    HOLDER_MISMATCH = "HolderMismatch"
    EXPIRED = "Expired"
    OUTSIDE_WINDOW = "OutsideWindow"
    EXPLICIT_DENY = "ExplicitDeny"
    NOT_PERMITTED = "NotPermitted"
    RESOURCE_NOT_PERMITTED = "ResourceNotPermitted"
    JURISDICTION = "JurisdictionNotPermitted"
    COUNTERPARTY_SCORE = "CounterpartyScore"
    TOOL_NOT_ALLOWED = "ToolNotAllowed"
    # only the registry issues this one; it owns the per-envelope transaction window
    RATE_LIMITED = "RateLimited"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    reason: DenyReason | None = None
    matched_rule: str = field(default="", compare=False)

    @property
    def denied(self) -> bool:
        return self.kind is DecisionKind.DENY

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind.value, "matchedRule": self.matched_rule}
        if self.reason is not None:
            data["reason"] = self.reason.value
        return data


def _deny(reason: DenyReason, rule: str) -> Decision:
    return Decision(DecisionKind.DENY, reason, rule)


def _in_time_window(env: AuthorizationEnvelope, ts: datetime) -> bool:
    t = env.constraints.time
    if t.allowed_days is None and t.allowed_hours is None:
        return True
    local = ts.astimezone(ZoneInfo(t.timezone))
    if t.allowed_days is not None and WEEKDAYS[local.weekday()] not in t.allowed_days:
        return False
    if t.allowed_hours is not None:
        start, end = t.allowed_hours
        h = local.hour
        inside = start <= h < end if start < end else (h >= start or h < end)
        if not inside:
            return False
    return True


def resource_matches(pattern: Mapping[str, str], resource: Mapping[str, str]) -> bool:
    return all(
        key in resource and fnmatchcase(str(resource[key]), str(glob)) for key, glob in pattern.items()
    )


def evaluate(env: AuthorizationEnvelope, req: ActionRequest, now: datetime) -> Decision:
    """Decide one request. Gates run in a fixed order and the first failing gate denies."""
    v = env.validity
    m = env.mandate
    c = env.constraints

    if req.actor != v.holder:
        return _deny(DenyReason.HOLDER_MISMATCH, f"envelope bound to {v.holder}")
    if v.expires_at is None or not (v.issued_at <= now < v.expires_at):
        return _deny(DenyReason.EXPIRED, "validity window")
    if not _in_time_window(env, req.timestamp):
        return _deny(DenyReason.OUTSIDE_WINDOW, "time constraints")

    denied = any_match(m.denied_actions, req.action)
    if denied is not None:
        return _deny(DenyReason.EXPLICIT_DENY, f"deniedActions: {denied}")
    allowed = any_match(m.allowed_actions, req.action)
    if allowed is None:
        return _deny(DenyReason.NOT_PERMITTED, "no allowedActions pattern matched")

    if m.resources:
        if req.resource is None or not any(resource_matches(p, req.resource) for p in m.resources):
            return _deny(DenyReason.RESOURCE_NOT_PERMITTED, "resources")
    if c.jurisdictions is not None and req.jurisdiction not in c.jurisdictions:
        return _deny(DenyReason.JURISDICTION, "jurisdictions")
    if c.counterparty_min_score is not None and (
        req.counterparty_score is None or req.counterparty_score < c.counterparty_min_score
    ):
        return _deny(DenyReason.COUNTERPARTY_SCORE, f"counterpartyMinScore {c.counterparty_min_score}")
    ob = c.obligations
    if req.tool is not None and ob is not None and ob.tool_allowlist is not None:
        if req.tool not in ob.tool_allowlist:
            return _deny(DenyReason.TOOL_NOT_ALLOWED, "obligations.toolAllowlist")

    return _financial_ladder(env, req, allowed)


def _financial_ladder(env: AuthorizationEnvelope, req: ActionRequest, allowed: str) -> Decision:
    fin = env.constraints.financial
    ob = env.constraints.obligations
    amount = req.amount
    if amount is None:
        return Decision(DecisionKind.ALLOW, None, f"allowedActions: {allowed}")
    if fin is not None and req.currency is not None and req.currency != fin.currency:
        raise CurrencyMismatch(f"request in {req.currency}, envelope in {fin.currency}")

    if fin is not None and fin.autonomous_threshold is not None and amount < fin.autonomous_threshold:
        return Decision(DecisionKind.ALLOW, None, "below autonomousThreshold")
    human_limit = ob.require_human_approval_above if ob is not None else None
    if (fin is not None and fin.approval_threshold is not None and amount >= fin.approval_threshold) or (
        human_limit is not None and amount >= human_limit
    ):
        return Decision(DecisionKind.REQUIRE_HUMAN_APPROVAL, None, "approval threshold")
    if fin is not None and fin.step_up_threshold is not None and amount >= fin.step_up_threshold:
        return Decision(DecisionKind.STEP_UP, None, "stepUpThreshold")
    return Decision(DecisionKind.ALLOW, None, f"allowedActions: {allowed}")
