"""Violation records, keyed by principal so they outlive any one agent DID."""

from __future__ import annotations

import enum
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

from .errors import PrincipalMismatch, UnknownPrincipal
from .identity import Did
from .timeutil import format_ts, parse_ts
from .trust import TrustGraph


class ViolationKind(str, enum.Enum):
    POLICY_VIOLATION = "policy_violation"
    SYBIL_FLAG = "sybil_flag"
    ENDORSEMENT_PATTERN = "endorsement_pattern"
    KERNEL_EVENT = "kernel_event"


class Severity(str, enum.Enum):
    WARNING = "warning"
    FAIL = "fail"
    HARD_FAIL = "hard_fail"


@dataclass(frozen=True)
class ViolationRecord:
    id: str
    principal: Did
    agent: Did
    kind: ViolationKind
    severity: Severity
    detail: str
    timestamp: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "principal": str(self.principal),
            "agent": str(self.agent),
            "kind": self.kind.value,
            "severity": self.severity.value,
            "detail": self.detail,
            "timestamp": format_ts(self.timestamp),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ViolationRecord:
        return cls(
            id=d["id"],
            principal=Did.parse(d["principal"]),
            agent=Did.parse(d["agent"]),
            kind=ViolationKind(d["kind"]),
            severity=Severity(d["severity"]),
            detail=d.get("detail", ""),
            timestamp=parse_ts(d["timestamp"]),
        )


@dataclass
class ViolationStore:
    by_principal: dict[Did, list[ViolationRecord]] = field(default_factory=dict)

    def add(self, record: ViolationRecord) -> None:
        self.by_principal.setdefault(record.principal, []).append(record)

    def for_principal(self, principal: Did) -> list[ViolationRecord]:
        return list(self.by_principal.get(principal, ()))

    def for_agent(self, agent: Did) -> list[ViolationRecord]:
        return [r for records in self.by_principal.values() for r in records if r.agent == agent]

    def all(self) -> list[ViolationRecord]:
        return [r for records in self.by_principal.values() for r in records]


def record_violation(
    store: ViolationStore,
    graph: TrustGraph,
    principal: Did,
    agent: Did,
    kind: ViolationKind | str,
    severity: Severity | str,
    now: datetime,
    *,
    detail: str = "",
    violation_id: str | None = None,
) -> ViolationRecord:
    if principal not in graph.principals():
        raise UnknownPrincipal(str(principal))
    if graph.agent(agent).principal != principal:
        raise PrincipalMismatch(f"{agent} is not operated by {principal}")
    record = ViolationRecord(
        id=violation_id or str(uuid.uuid4()),
        principal=principal,
        agent=agent,
        kind=ViolationKind(kind),
        severity=Severity(severity),
        detail=detail,
        timestamp=now,
    )
    store.add(record)
    return record
