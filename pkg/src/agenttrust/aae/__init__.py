"""Agent Authorization Envelopes: MANDATE / CONSTRAINTS / VALIDITY blocks."""

from .delegation import attenuation_check, verify_delegation_chain
from .envelope import (
    MAX_DELEGATION_DEPTH,
    AuthorizationEnvelope,
    Constraints,
    Delegation,
    FinancialConstraints,
    Mandate,
    Obligations,
    TimeConstraints,
    Validity,
    Violation,
    sign_envelope,
    validate_envelope,
    verify_envelope_proof,
)
from .patterns import match_uri_pattern, pattern_covers, validate_pattern
from .policy import ActionRequest, Decision, DecisionKind, DenyReason, evaluate

__all__ = [
    "MAX_DELEGATION_DEPTH",
    "ActionRequest",
    "AuthorizationEnvelope",
    "Constraints",
    "Decision",
    "DecisionKind",
    "Delegation",
    "DenyReason",
    "FinancialConstraints",
    "Mandate",
    "Obligations",
    "TimeConstraints",
    "Validity",
    "Violation",
    "attenuation_check",
    "evaluate",
    "match_uri_pattern",
    "pattern_covers",
    "sign_envelope",
    "validate_envelope",
    "validate_pattern",
    "verify_delegation_chain",
    "verify_envelope_proof",
]
