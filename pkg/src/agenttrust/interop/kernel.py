"""Kernel-monitor violation events (Falco NDJSON output shape)."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Protocol

from .. import crypto
from ..errors import MalformedEvent
from ..identity import Did
from ..timeutil import format_ts, parse_ts

DID_LABEL = "container.labels.moltrust_did"

# Falco priorities, highest first
_HARD_FAIL = {"emergency", "alert", "critical"}
_FAIL = {"error", "warning"}

_FRACTION = re.compile(r"\.(\d+)")


@dataclass(frozen=True)
class KernelViolationEvent:
    rule_name: str
    agent_did: Did
    syscall_class: str
    resource: str
    observed_at: datetime
    priority: str
    raw_payload: dict[str, Any]

    @property
    def idempotency_key(self) -> str:
        material = crypto.canonicalize([self.rule_name, str(self.agent_did), format_ts(self.observed_at)])
        return crypto.digest(material).hex()

    @property
    def severity(self) -> str:
        p = self.priority.lower()
        if p in _HARD_FAIL:
            return "hard_fail"
        if p in _FAIL:
            return "fail"
        return "warning"

    def to_dict(self) -> dict[str, Any]:
        return {
            "ruleName": self.rule_name,
            "agentDid": str(self.agent_did),
            "syscallClass": self.syscall_class,
            "resource": self.resource,
            "observedAt": format_ts(self.observed_at),
            "priority": self.priority,
            "idempotencyKey": self.idempotency_key,
        }


def _parse_time(text: Any) -> datetime:
    if not isinstance(text, str):
        raise MalformedEvent("time must be an RFC 3339 string")
    # Falco emits nanoseconds; datetime carries microseconds
    text = _FRACTION.sub(lambda m: "." + m.group(1)[:6].ljust(6, "0"), text, count=1)
    try:
        return parse_ts(text)
    except ValueError as exc:
        raise MalformedEvent(f"bad time {text!r}: {exc}") from exc


def parse_kernel_event(obj: Any) -> KernelViolationEvent:
    if not isinstance(obj, dict):
        raise MalformedEvent("event must be a JSON object")
    rule = obj.get("rule")
    if not isinstance(rule, str) or not rule.strip():
        raise MalformedEvent("missing rule")
    fields = obj.get("output_fields")
    if not isinstance(fields, dict):
        raise MalformedEvent("missing output_fields")
    did_text = fields.get(DID_LABEL)
    if not isinstance(did_text, str):
        raise MalformedEvent(f"missing {DID_LABEL}")
    try:
        did = Did.parse(did_text)
    except ValueError as exc:
        raise MalformedEvent(str(exc)) from exc
    return KernelViolationEvent(
        rule_name=rule,
        agent_did=did,
        syscall_class=str(fields.get("evt.type") or fields.get("syscall.type") or "unknown"),
        resource=str(fields.get("fd.name") or fields.get("proc.cmdline") or ""),
        observed_at=_parse_time(obj.get("time")),
        priority=str(obj.get("priority", "Warning")),
        raw_payload=obj,
    )


def parse_ndjson(text: str | bytes) -> list[KernelViolationEvent]:
    """Parse newline-delimited events; blank lines are skipped, any bad line raises."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    events = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedEvent(f"line {n}: {exc}") from exc
        try:
            events.append(parse_kernel_event(obj))
        except MalformedEvent as exc:
            raise MalformedEvent(f"line {n}: {exc}") from exc
    return events


class ViolationSink(Protocol):
    def record_kernel_event(self, event: KernelViolationEvent): ...


def ingest_kernel_event(event: KernelViolationEvent, registry: ViolationSink):
    """Store a kernel_event violation against the agent's principal (idempotent)."""
    return registry.record_kernel_event(event)


def ingest_ndjson(text: str | bytes, registry: ViolationSink) -> list:
    return [ingest_kernel_event(e, registry) for e in parse_ndjson(text)]


def falco_line(rule: str, did: Did | str, time: str, *, priority: str = "Critical", **fields: Any) -> str:
    """Render one event in Falco's JSON output shape."""
    output_fields = {DID_LABEL: str(did), **{k.replace("_", "."): v for k, v in fields.items()}}
    return json.dumps({"rule": rule, "priority": priority, "time": time, "output": rule, "output_fields": output_fields})

