"""Generated conformance document and its SHA-256 drift check."""

from __future__ import annotations

import hmac

from .. import crypto, trust
from ..aae import MAX_DELEGATION_DEPTH
from ..aae.envelope import PURPOSES
from ..aae.policy import DenyReason
from ..credential import CREDENTIAL_TYPES, STATUS_LIST_BITS
from .qntm import APS_BANDS, FACETS
from .vectors import VECTOR_DIR, VECTOR_IDS


def conformance_document() -> bytes:
    """Render the conformance document from the constants and fixtures in this package."""
    lines = [
        "# Conformance",
        "",
        "## Scoring parameters",
    ]
    for name in (
        "ALPHA", "BETA", "GAMMA", "NATIVE_HALF_LIFE_DAYS", "IMPORT_HALF_LIFE_DAYS", "IMPORT_WEIGHT",
        "DIRECT_SATURATION", "SYBIL_MULTIPLIER", "JACCARD_THRESHOLD", "JACCARD_PENALTY_FACTOR",
        "GATE_PENALTY", "MIN_VERTICALS", "MIN_ENDORSERS", "VERTICAL_BONUS_CAP", "IPR_BONUS_SLOPE",
        "IPR_BONUS_CAP", "INACTIVITY_GRACE_DAYS", "INACTIVITY_SLOPE", "INACTIVITY_FLOOR",
    ):
        lines.append(f"- {name}: {crypto.canonicalize(getattr(trust, name)).decode()}")
    lines += ["", "## Seed floors"]
    lines += [f"- {label}: {floor}" for label, floor in trust.SEED_FLOORS.items()]
    lines += ["", "## Verticals"]
    lines += [f"- {v}" for v in sorted(trust.VERTICALS)]
    lines += ["", "## Credential types"]
    lines += [f"- {t}" for t in sorted(CREDENTIAL_TYPES)]
    lines += [
        "",
        "## Envelope rules",
        f"- maximum delegation depth: {MAX_DELEGATION_DEPTH}",
        f"- purposes: {', '.join(sorted(PURPOSES))}",
        f"- deny reasons: {', '.join(r.value for r in DenyReason)}",
        f"- status list length: {STATUS_LIST_BITS}",
        "",
        "## Interop",
        f"- qntm facets: {', '.join(FACETS)}",
        f"- APS band edges: {', '.join(str(b) for b in APS_BANDS)}",
        "",
        "## Test vectors",
    ]
    for vid in VECTOR_IDS:
        data = (VECTOR_DIR / f"{vid}.json").read_bytes()
        lines.append(f"- {vid}: sha256 {crypto.digest(data).hex()}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def conformance_checksum(document: bytes) -> str:
    return crypto.digest(document).hex()


def verify_drift(expected: str, current: bytes) -> bool:
    """True when ``current`` still hashes to ``expected`` (no drift)."""
    return hmac.compare_digest(expected.strip().lower(), conformance_checksum(current))
