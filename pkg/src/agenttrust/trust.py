"""Reference reputation model.

    raw   = 0.6 * direct + 0.3 * propagated + 0.1 * cross_vertical_bonus + interaction_bonus
    final = clamp(raw - 20 * sybil_penalty + inactivity_penalty, 0, 100)
    seeds: final = max(final, base_score)

Endorsement weight depends on the endorser's own score, so scores are solved
as a fixed point over the whole graph (``score_all``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Iterable, Mapping

from . import crypto
from .credential import CREDENTIAL_TYPES
from .crypto import SigningKey
from .errors import BothEmpty, DuplicateDid, InvalidEndorsement, NotFound, PrincipalMismatch, UnknownAgent, UnknownKey
from .identity import Did, Resolver
from .timeutil import days_between, format_ts, parse_ts

ALPHA, BETA, GAMMA = 0.6, 0.3, 0.1
NATIVE_HALF_LIFE_DAYS = 90.0
IMPORT_HALF_LIFE_DAYS = 45.0
IMPORT_WEIGHT = 0.3
DIRECT_SATURATION = 150.0

SYBIL_MULTIPLIER = 20.0
JACCARD_THRESHOLD = 0.8
JACCARD_PENALTY_FACTOR = 0.5
GATE_PENALTY = 10.0
MIN_VERTICALS = 3
MIN_ENDORSERS = 3
PEER_MIN_ENDORSERS = 2

VERTICAL_BONUS_STEP = 10.0
VERTICAL_BONUS_CAP = 30.0
IPR_BONUS_SLOPE = 0.5
IPR_BONUS_CAP = 10.0

INACTIVITY_GRACE_DAYS = 90.0
INACTIVITY_SLOPE = 0.1
INACTIVITY_FLOOR = -20.0

FIXED_POINT_TOLERANCE = 0.01
FIXED_POINT_MAX_ITER = 20

ENDORSEMENT_VERTICALS = frozenset(
    {"core", "skill", "shopping", "travel", "prediction", "salesguard", "sports"}
)
CREDENTIAL_VERTICALS = CREDENTIAL_TYPES - {"CoreIdentity"}
VERTICALS = ENDORSEMENT_VERTICALS | CREDENTIAL_VERTICALS

SEED_FLOORS = {
    "TrustScout": 85.0,
    "MolTrust Ambassador": 80.0,
    "VCOne": 75.0,
    "seeded agent": 70.0,
    "AgentNexus": 60.0,
}


# -- records ----------------------------------------------------------------


@dataclass(frozen=True)
class AgentRecord:
    did: Did
    principal: Did
    registered_at: datetime
    last_activity_at: datetime
    is_seed: bool = False
    base_score: float | None = None
    verticals: frozenset[str] = frozenset()
    label: str | None = None

    def __post_init__(self) -> None:
        if self.is_seed != (self.base_score is not None):
            raise ValueError("base_score is required for seeds and forbidden otherwise")
        if self.base_score is not None and not 0 <= self.base_score <= 100:
            raise ValueError("base_score must lie in [0, 100]")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "did": str(self.did),
            "principal": str(self.principal),
            "registeredAt": format_ts(self.registered_at),
            "lastActivityAt": format_ts(self.last_activity_at),
            "isSeed": self.is_seed,
            "verticals": sorted(self.verticals),
        }
        if self.base_score is not None:
            data["baseScore"] = self.base_score
        if self.label is not None:
            data["label"] = self.label
        return data

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AgentRecord:
        return cls(
            did=Did.parse(d["did"]),
            principal=Did.parse(d["principal"]),
            registered_at=parse_ts(d["registeredAt"]),
            last_activity_at=parse_ts(d["lastActivityAt"]),
            is_seed=d.get("isSeed", False),
            base_score=d.get("baseScore"),
            verticals=frozenset(d.get("verticals", ())),
            label=d.get("label"),
        )


@dataclass(frozen=True)
class Endorsement:
    endorser: Did
    subject: Did
    vertical: str
    timestamp: datetime
    key_id: str = ""
    signature: bytes = b""

    def payload(self) -> dict[str, Any]:
        return {
            "endorser": str(self.endorser),
            "subject": str(self.subject),
            "vertical": self.vertical,
            "timestamp": format_ts(self.timestamp),
            "keyId": self.key_id,
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.payload(), "signature": crypto.encode_signature(self.signature)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Endorsement:
        return cls(
            endorser=Did.parse(d["endorser"]),
            subject=Did.parse(d["subject"]),
            vertical=d["vertical"],
            timestamp=parse_ts(d["timestamp"]),
            key_id=d.get("keyId", ""),
            signature=crypto.decode_signature(d.get("signature", "")),
        )


def sign_endorsement(
    key: SigningKey, endorser: Did, subject: Did, vertical: str, now: datetime, key_id: str | None = None
) -> Endorsement:
    e = Endorsement(endorser, subject, vertical, now, key_id or f"{endorser}#key-1")
    return replace(e, signature=crypto.sign(key, crypto.canonicalize(e.payload())))


def verify_endorsement(e: Endorsement, resolver: Resolver) -> bool:
    if e.endorser == e.subject or e.vertical not in VERTICALS:
        return False
    try:
        vm = resolver.resolve(e.endorser).method(e.key_id)
    except (NotFound, UnknownKey):
        return False
    return vm.valid_at(e.timestamp) and crypto.verify(
        vm.public_key, crypto.canonicalize(e.payload()), e.signature
    )


@dataclass(frozen=True)
class ImportedScore:
    subject: Did
    source: str
    score: float
    imported_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": str(self.subject),
            "source": self.source,
            "score": self.score,
            "importedAt": format_ts(self.imported_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ImportedScore:
        return cls(Did.parse(d["subject"]), d["source"], d["score"], parse_ts(d["importedAt"]))


@dataclass(frozen=True)
class TrustScoreBreakdown:
    direct_score: float
    propagated_score: float
    cross_vertical_bonus: float
    interaction_bonus: float
    sybil_penalty: float
    inactivity_penalty: float
    raw: float
    final: float
    withheld: bool
    seed_floor_applied: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "directScore": self.direct_score,
            "propagatedScore": self.propagated_score,
            "crossVerticalBonus": self.cross_vertical_bonus,
            "interactionBonus": self.interaction_bonus,
            "sybilPenalty": self.sybil_penalty,
            "inactivityPenalty": self.inactivity_penalty,
            "raw": self.raw,
            "final": self.final,
            "withheld": self.withheld,
            "seedFloorApplied": self.seed_floor_applied,
        }


# -- scalar components ------------------------------------------------------


def decay_factor(age_days: float, half_life_days: float) -> float:
    if age_days < 0:
        raise ValueError("age must be non-negative")
    if half_life_days <= 0:
        raise ValueError("half-life must be positive")
    return 2.0 ** (-age_days / half_life_days)


def jaccard(a: Iterable[Any], b: Iterable[Any]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        raise BothEmpty("Jaccard index is undefined for two empty sets")
    return len(a & b) / len(a | b)


def max_peer_similarity(endorser_set: set[Did], peers: Mapping[Did, set[Did]]) -> float:
    best = 0.0
    for peer_set in peers.values():
        if endorser_set or peer_set:
            best = max(best, jaccard(endorser_set, peer_set))
    return best


def sybil_penalty(
    agent: AgentRecord,
    endorser_set: set[Did],
    peers: Mapping[Did, set[Did]],
    endorsement_verticals: int,
) -> float:
    """Larger of the diversity-gate penalty and the endorser-overlap penalty."""
    gate = GATE_PENALTY if (not agent.is_seed and endorsement_verticals < MIN_VERTICALS) else 0.0
    similarity = max_peer_similarity(endorser_set, peers)
    overlap = similarity * len(endorser_set) * JACCARD_PENALTY_FACTOR if similarity > JACCARD_THRESHOLD else 0.0
    return max(gate, overlap)


def cross_vertical_bonus(unique_verticals: int) -> float:
    if unique_verticals < 0:
        raise ValueError("vertical count must be non-negative")
    return min(unique_verticals * VERTICAL_BONUS_STEP, VERTICAL_BONUS_CAP)


def interaction_bonus(verified_ipr_count: int) -> float:
    if verified_ipr_count < 0:
        raise ValueError("IPR count must be non-negative")
    return min(verified_ipr_count * IPR_BONUS_SLOPE, IPR_BONUS_CAP)


def inactivity_penalty(last_activity_at: datetime, now: datetime) -> float:
    idle = max(days_between(last_activity_at, now), 0.0)
    if idle <= INACTIVITY_GRACE_DAYS:
        return 0.0
    return max(-INACTIVITY_SLOPE * (idle - INACTIVITY_GRACE_DAYS), INACTIVITY_FLOOR)


def import_external_score(source_score: float, imported_at: datetime, now: datetime) -> float:
    """Contribution of an imported score to the direct-score mass."""
    if not 0 <= source_score <= 100:
        raise ValueError("imported scores must lie in [0, 100]")
    age = max(days_between(imported_at, now), 0.0)
    return IMPORT_WEIGHT * source_score * decay_factor(age, IMPORT_HALF_LIFE_DAYS)


def saturate(mass: float) -> float:
    if mass <= 0:
        return 0.0
    return min(100.0 * mass / (mass + DIRECT_SATURATION), 100.0)


def direct_score(
    subject: Did,
    endorsements: Iterable[Endorsement],
    endorser_scores: Mapping[Did, float],
    now: datetime,
    imports: Iterable[ImportedScore] = (),
) -> float:
    mass = 0.0
    for e in endorsements:
        if e.subject != subject or e.endorser == subject or e.timestamp > now:
            continue
        age = days_between(e.timestamp, now)
        mass += endorser_scores.get(e.endorser, 0.0) * decay_factor(age, NATIVE_HALF_LIFE_DAYS)
    for imp in imports:
        if imp.subject == subject and imp.imported_at <= now:
            mass += import_external_score(imp.score, imp.imported_at, now)
    return saturate(mass)


def propagated_score(
    subject: Did, endorsements: Iterable[Endorsement], direct_scores: Mapping[Did, float], now: datetime
) -> float:
    """Mean of the endorsers' direct scores, weighted by the decay of each endorser's latest endorsement."""
    latest: dict[Did, datetime] = {}
    for e in endorsements:
        if e.subject != subject or e.endorser == subject or e.timestamp > now:
            continue
        if e.endorser not in latest or e.timestamp > latest[e.endorser]:
            latest[e.endorser] = e.timestamp
    total_weight = 0.0
    acc = 0.0
    for endorser, ts in latest.items():
        w = decay_factor(days_between(ts, now), NATIVE_HALF_LIFE_DAYS)
        total_weight += w
        acc += w * direct_scores.get(endorser, 0.0)
    return acc / total_weight if total_weight > 0 else 0.0


def finalize(
    raw: float, sybil: float, inactivity: float, *, is_seed: bool = False, base_score: float | None = None
) -> tuple[float, bool]:
    """Apply penalties, clamp, and the seed floor. Returns (final, floor_applied)."""
    final = min(max(raw - sybil * SYBIL_MULTIPLIER + inactivity, 0.0), 100.0)
    if is_seed and base_score is not None and final < base_score:
        return base_score, True
    return final, False


# -- graph ------------------------------------------------------------------


@dataclass
class TrustGraph:
    agents: dict[Did, AgentRecord] = field(default_factory=dict)
    endorsements: list[Endorsement] = field(default_factory=list)
    imports: list[ImportedScore] = field(default_factory=list)
    ipr_counts: dict[Did, int] = field(default_factory=dict)

    def add_agent(self, record: AgentRecord) -> None:
        if record.did in self.agents:
            raise DuplicateDid(str(record.did))
        self.agents[record.did] = record

    def agent(self, did: Did) -> AgentRecord:
        try:
            return self.agents[did]
        except KeyError:
            raise UnknownAgent(str(did)) from None

    def principals(self) -> set[Did]:
        return {a.principal for a in self.agents.values()}

    def touch(self, did: Did, ts: datetime) -> None:
        rec = self.agents.get(did)
        if rec is not None and ts > rec.last_activity_at:
            self.agents[did] = replace(rec, last_activity_at=ts)

    def add_endorsement(self, e: Endorsement) -> None:
        if e.endorser == e.subject:
            raise InvalidEndorsement("self-endorsement")
        if e.vertical not in VERTICALS:
            raise InvalidEndorsement(f"unknown vertical {e.vertical!r}")
        self.agent(e.subject)
        self.endorsements.append(e)
        self.touch(e.subject, e.timestamp)
        self.touch(e.endorser, e.timestamp)

    def add_import(self, imp: ImportedScore) -> None:
        self.agent(imp.subject)
        if not 0 <= imp.score <= 100:
            raise ValueError("imported scores must lie in [0, 100]")
        self.imports.append(imp)

    def record_verified_ipr(self, a: Did, b: Did, ts: datetime) -> None:
        for did in (a, b):
            if did in self.agents:
                self.ipr_counts[did] = self.ipr_counts.get(did, 0) + 1
                self.touch(did, ts)

    def received(self, did: Did, now: datetime) -> list[Endorsement]:
        return [e for e in self.endorsements if e.subject == did and e.endorser != did and e.timestamp <= now]

    def endorser_set(self, did: Did, now: datetime) -> set[Did]:
        return {e.endorser for e in self.received(did, now)}

    def peers(self, did: Did, now: datetime) -> dict[Did, set[Did]]:
        out = {}
        for other, rec in self.agents.items():
            if other == did or rec.is_seed:
                continue
            endorsers = self.endorser_set(other, now)
            if len(endorsers) >= PEER_MIN_ENDORSERS:
                out[other] = endorsers
        return out


def _breakdown(
    graph: TrustGraph,
    rec: AgentRecord,
    direct: Mapping[Did, float],
    now: datetime,
    peer_cache: dict[Did, set[Did]],
) -> TrustScoreBreakdown:
    received = graph.received(rec.did, now)
    endorsers = {e.endorser for e in received}
    endorsement_verticals = {e.vertical for e in received}
    unique_verticals = len(endorsement_verticals | (rec.verticals & CREDENTIAL_VERTICALS))
    prop = propagated_score(rec.did, received, direct, now)
    cvb = cross_vertical_bonus(unique_verticals)
    ib = interaction_bonus(graph.ipr_counts.get(rec.did, 0))
    peers = {d: s for d, s in peer_cache.items() if d != rec.did}
    sp = sybil_penalty(rec, endorsers, peers, len(endorsement_verticals))
    ip = inactivity_penalty(rec.last_activity_at, now)
    raw = ALPHA * direct[rec.did] + BETA * prop + GAMMA * cvb + ib
    final, floored = finalize(raw, sp, ip, is_seed=rec.is_seed, base_score=rec.base_score)
    return TrustScoreBreakdown(
        direct_score=direct[rec.did],
        propagated_score=prop,
        cross_vertical_bonus=cvb,
        interaction_bonus=ib,
        sybil_penalty=sp,
        inactivity_penalty=ip,
        raw=raw,
        final=final,
        withheld=(not rec.is_seed and len(endorsers) < MIN_ENDORSERS),
        seed_floor_applied=floored,
    )


def score_all(
    graph: TrustGraph,
    now: datetime,
    *,
    tolerance: float = FIXED_POINT_TOLERANCE,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> dict[Did, TrustScoreBreakdown]:
    """Solve endorser-weighted scores by fixed-point iteration from seed base scores."""
    scores = {did: (rec.base_score if rec.is_seed else 0.0) for did, rec in graph.agents.items()}
    peer_cache = {}
    for did, rec in graph.agents.items():
        if not rec.is_seed:
            endorsers = graph.endorser_set(did, now)
            if len(endorsers) >= PEER_MIN_ENDORSERS:
                peer_cache[did] = endorsers
    received = {did: graph.received(did, now) for did in graph.agents}
    breakdowns: dict[Did, TrustScoreBreakdown] = {}
    for _ in range(max(max_iter, 1)):
        direct = {
            did: direct_score(did, received[did], scores, now, graph.imports) for did in graph.agents
        }
        breakdowns = {did: _breakdown(graph, rec, direct, now, peer_cache) for did, rec in graph.agents.items()}
        new_scores = {did: b.final for did, b in breakdowns.items()}
        delta = max((abs(new_scores[d] - scores[d]) for d in scores), default=0.0)
        scores = new_scores
        if delta < tolerance:
            break
    return breakdowns


def compute_score(agent: Did, graph: TrustGraph, now: datetime) -> TrustScoreBreakdown:
    graph.agent(agent)
    return score_all(graph, now)[agent]


def reregister_agent(
    graph: TrustGraph, principal: Did, old_agent: Did, new_agent: Did, now: datetime
) -> AgentRecord:
    """Register a replacement agent under the same principal; its trust starts from nothing."""
    old = graph.agent(old_agent)
    if old.principal != principal:
        raise PrincipalMismatch(f"{old_agent} is not operated by {principal}")
    record = AgentRecord(did=new_agent, principal=principal, registered_at=now, last_activity_at=now)
    graph.add_agent(record)
    return record
