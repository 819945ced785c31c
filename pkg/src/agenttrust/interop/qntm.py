"""Envelope to qntm ConstraintEvaluation facets, and APS trust grades."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Any

from ..aae import AuthorizationEnvelope
from ..errors import MissingFacetSource, OutOfRange

FACETS = ("scope", "spend", "time", "reputation", "reversible")


@dataclass(frozen=True)
class QntmConstraintEvaluation:
    scope: tuple[str, ...] | None
    spend: tuple[Decimal, str] | None
    time: int | None
    reputation: float | None
    reversible: bool | None
    purpose: str | None = None
    missing: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {}
        if self.scope is not None:
            data["scope"] = {"purpose": self.purpose, "patterns": list(self.scope)}
        if self.spend is not None:
            data["spend"] = {"amount": str(self.spend[0]), "currency": self.spend[1]}
        if self.time is not None:
            data["time"] = {"ttlSeconds": self.time}
        if self.reputation is not None:
            data["reputation"] = {"minScore": self.reputation}
        if self.reversible is not None:
            data["reversibility"] = {"reversible": self.reversible}
        if self.missing:
            data["missingFacets"] = list(self.missing)
        return data


def map_to_qntm(env: AuthorizationEnvelope, *, strict: bool = False) -> QntmConstraintEvaluation:
    """Map the five facets. Facets without a source are omitted and listed in ``missing``.

    With ``strict=True`` a missing source raises MissingFacetSource instead.
    """
    fin = env.constraints.financial
    spend = None
    if fin is not None and fin.autonomous_threshold is not None:
        spend = (fin.autonomous_threshold, fin.currency)
    result = QntmConstraintEvaluation(
        scope=tuple(env.mandate.allowed_actions),
        spend=spend,
        time=env.constraints.time.ttl_seconds,
        reputation=env.constraints.counterparty_min_score,
        # a non-delegable mandate is a non-reversible commitment
        reversible=env.mandate.delegation.allowed,
        purpose=env.mandate.purpose,
    )
    missing = tuple(f for f in FACETS if getattr(result, f) is None)
    if missing and strict:
        raise MissingFacetSource(f"envelope has no source for: {', '.join(missing)}")
    return QntmConstraintEvaluation(**{**result.__dict__, "missing": missing})


@dataclass(frozen=True)
class ApsGrade:
    grade: int
    source_score: float

    def to_dict(self) -> dict[str, Any]:
        return {"grade": self.grade, "sourceScore": self.source_score}


APS_BANDS = (25.0, 50.0, 75.0)


def aps_grade(score: float) -> ApsGrade:
    """Quantize a 0-100 score into grades 0-3; each band includes its lower edge."""
    if isinstance(score, bool) or not isinstance(score, (int, float)) or math.isnan(score):
        raise OutOfRange(f"not a score: {score!r}")
    if not 0 <= score <= 100:
        raise OutOfRange(f"score {score} is outside [0, 100]")
    grade = sum(1 for edge in APS_BANDS if score >= edge)
    return ApsGrade(grade, float(score))
