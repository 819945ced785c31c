"""Registry service: event-sourced state, HTTP surface and configuration."""

from .config import RegistryConfig, load_config
from .log import EventLog, LogEntry, read_entries
from .service import (
    Registry,
    load_key_file,
    seed_designation,
    sign_request,
    verify_score_response,
    verify_signed_request,
    write_key_file,
)

__all__ = [
    "EventLog",
    "LogEntry",
    "Registry",
    "RegistryConfig",
    "load_config",
    "load_key_file",
    "read_entries",
    "seed_designation",
    "sign_request",
    "verify_score_response",
    "verify_signed_request",
    "write_key_file",
]
