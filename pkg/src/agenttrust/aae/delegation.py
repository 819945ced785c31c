"""Attenuation-only delegation: a child envelope may narrow its parent, never widen it."""

from __future__ import annotations

from datetime import datetime
from typing import Callable, Sequence

from ..errors import (
    BrokenLink,
    ChainTooDeep,
    DepthExhausted,
    InvalidEnvelope,
    ParentForbidsDelegation,
    ScopeExceedsParent,
)
from ..identity import Resolver
from .envelope import MAX_DELEGATION_DEPTH, AuthorizationEnvelope, validate_envelope
from .patterns import pattern_covers
from .policy import resource_matches


def _scope_error(msg: str) -> ScopeExceedsParent:
    return ScopeExceedsParent(msg)


def _check_actions(parent: AuthorizationEnvelope, child: AuthorizationEnvelope) -> None:
    pm, cm = parent.mandate, child.mandate
    for pattern in cm.allowed_actions:
        if not any(pattern_covers(p, pattern) for p in pm.allowed_actions):
            raise _scope_error(f"allowed pattern {pattern!r} is not covered by the parent")
        for denied in pm.denied_actions:
            if pattern_covers(denied, pattern):
                raise _scope_error(f"allowed pattern {pattern!r} is denied by the parent")
    for denied in pm.denied_actions:
        if not any(pattern_covers(d, denied) for d in cm.denied_actions):
            raise _scope_error(f"child drops the parent's denial {denied!r}")
    if pm.resources:
        for res in cm.resources or [{}]:
            # a child resource pattern is narrower if it pins every attribute the parent pins
            if not any(
                all(k in res and resource_matches({k: g}, {k: res[k]}) for k, g in p.items())
                for p in pm.resources
            ):
                raise _scope_error(f"resource pattern {res!r} is not covered by the parent")


def _check_constraints(parent: AuthorizationEnvelope, child: AuthorizationEnvelope) -> None:
    pc, cc = parent.constraints, child.constraints
    if cc.time.ttl_seconds > pc.time.ttl_seconds:
        raise _scope_error("child ttl exceeds parent ttl")
    if pc.financial is not None:
        if cc.financial is None:
            raise _scope_error("child drops the parent's financial limits")
        if cc.financial.currency != pc.financial.currency:
            raise _scope_error("child changes currency")
        child_limits = cc.financial.thresholds()
        for name, limit in pc.financial.thresholds().items():
            if name not in child_limits or child_limits[name] > limit:
                raise _scope_error(f"child {name} exceeds the parent's")
        if pc.financial.max_tx_per_hour is not None and (
            cc.financial.max_tx_per_hour is None or cc.financial.max_tx_per_hour > pc.financial.max_tx_per_hour
        ):
            raise _scope_error("child maxTxPerHour exceeds the parent's")
    if pc.jurisdictions is not None and (cc.jurisdictions is None or not cc.jurisdictions <= pc.jurisdictions):
        raise _scope_error("child jurisdictions are not a subset of the parent's")
    if pc.counterparty_min_score is not None and (
        cc.counterparty_min_score is None or cc.counterparty_min_score < pc.counterparty_min_score
    ):
        raise _scope_error("child lowers counterpartyMinScore")
    pob, cob = pc.obligations, cc.obligations
    if pob is not None and pob.tool_allowlist is not None:
        if cob is None or cob.tool_allowlist is None or not set(cob.tool_allowlist) <= set(pob.tool_allowlist):
            raise _scope_error("child tool allowlist is not a subset of the parent's")
    if pob is not None and pob.require_human_approval_above is not None:
        if (
            cob is None
            or cob.require_human_approval_above is None
            or cob.require_human_approval_above > pob.require_human_approval_above
        ):
            raise _scope_error("child raises the human-approval limit")


def _check_window(parent: AuthorizationEnvelope, child: AuthorizationEnvelope) -> None:
    pv, cv = parent.validity, child.validity
    if cv.expires_at is None or pv.expires_at is None:
        raise _scope_error("open-ended validity")
    if cv.issued_at < pv.issued_at or cv.expires_at > pv.expires_at:
        raise _scope_error("child validity window is not inside the parent's")


def attenuation_check(parent: AuthorizationEnvelope, child: AuthorizationEnvelope) -> None:
    """Raise unless ``child`` is a valid narrowing of ``parent``."""
    if child.parent_ref != parent.envelope_id:
        raise BrokenLink("child parentRef does not reference the parent")
    if child.validity.issuer != parent.validity.holder:
        raise BrokenLink("child must be issued by the parent's holder")
    if not parent.mandate.delegation.allowed:
        raise ParentForbidsDelegation("parent envelope does not allow delegation")
    if child.mandate.delegation.max_depth >= parent.mandate.delegation.max_depth:
        raise DepthExhausted(
            f"child maxDepth {child.mandate.delegation.max_depth} must be below "
            f"parent maxDepth {parent.mandate.delegation.max_depth}"
        )
    _check_actions(parent, child)
    _check_constraints(parent, child)
    _check_window(parent, child)


def verify_delegation_chain(
    chain: Sequence[AuthorizationEnvelope],
    resolver: Resolver,
    now: datetime,
    *,
    check: Callable[[AuthorizationEnvelope, AuthorizationEnvelope], None] = attenuation_check,
) -> None:
    """Verify a root-first chain; its length (root included) may not exceed 8."""
    if not chain:
        raise BrokenLink("empty chain")
    if len(chain) > MAX_DELEGATION_DEPTH:
        raise ChainTooDeep(f"chain depth {len(chain)} exceeds {MAX_DELEGATION_DEPTH}")
    if chain[0].parent_ref is not None:
        raise BrokenLink("root envelope must not reference a parent")
    for depth, env in enumerate(chain, start=1):
        violations = validate_envelope(env, resolver, now)
        if violations:
            raise InvalidEnvelope(f"envelope at depth {depth} is invalid: {violations}", violations)
    for parent, child in zip(chain, chain[1:]):
        check(parent, child)
