"""Cross-protocol mappings, kernel events and conformance vectors."""

from .conformance import conformance_checksum, conformance_document, verify_drift
from .kernel import (
    KernelViolationEvent,
    falco_line,
    ingest_kernel_event,
    ingest_ndjson,
    parse_kernel_event,
    parse_ndjson,
)
from .qntm import ApsGrade, QntmConstraintEvaluation, aps_grade, map_to_qntm
from .vectors import ConformanceReport, VectorResult, build_vectors, load_vectors, run_conformance_vectors

__all__ = [
    "ApsGrade",
    "ConformanceReport",
    "KernelViolationEvent",
    "QntmConstraintEvaluation",
    "VectorResult",
    "aps_grade",
    "build_vectors",
    "conformance_checksum",
    "conformance_document",
    "falco_line",
    "ingest_kernel_event",
    "ingest_ndjson",
    "load_vectors",
    "map_to_qntm",
    "parse_kernel_event",
    "parse_ndjson",
    "run_conformance_vectors",
    "verify_drift",
]
