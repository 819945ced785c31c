"""Append-only, hash-chained JSON-lines event log with snapshots.

Each line is the canonical JSON of ``{seq, type, payload, prev, hash}`` where
``hash`` is the SHA-256 of the canonical ``{seq, type, payload, prev}`` and
``prev`` is the previous entry's hash (64 zeros for the first entry).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .. import crypto
from ..errors import CorruptLog

GENESIS_PREV = "0" * 64
LOG_NAME = "events.jsonl"
SNAPSHOT_DIR = "snapshots"


@dataclass(frozen=True)
class LogEntry:
    seq: int
    type: str
    payload: dict[str, Any]
    prev: str
    hash: str

    @staticmethod
    def compute_hash(seq: int, type_: str, payload: dict[str, Any], prev: str) -> str:
        body = {"seq": seq, "type": type_, "payload": payload, "prev": prev}
        return crypto.digest(crypto.canonicalize(body)).hex()

    def to_line(self) -> bytes:
        data = {"seq": self.seq, "type": self.type, "payload": self.payload, "prev": self.prev, "hash": self.hash}
        return crypto.canonicalize(data) + b"\n"


def _parse_line(line: bytes, expected_seq: int, prev: str) -> LogEntry:
    try:
        data = crypto.parse_json(line)
        entry = LogEntry(data["seq"], data["type"], data["payload"], data["prev"], data["hash"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptLog(f"entry {expected_seq} is unreadable: {exc}") from exc
    if entry.seq != expected_seq or entry.prev != prev:
        raise CorruptLog(f"entry {expected_seq} breaks the chain")
    if LogEntry.compute_hash(entry.seq, entry.type, entry.payload, entry.prev) != entry.hash:
        raise CorruptLog(f"entry {expected_seq} fails its checksum")
    return entry


def read_entries(path: Path) -> list[LogEntry]:
    """Read and verify a log file.

    A final line without its newline is a torn write from a crash and is
    ignored; any other defect raises CorruptLog.
    """
    if not path.exists():
        return []
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    complete, tail = lines[:-1], lines[-1]
    entries: list[LogEntry] = []
    prev = GENESIS_PREV
    for i, line in enumerate(complete):
        entry = _parse_line(line, i, prev)
        entries.append(entry)
        prev = entry.hash
    del tail  # torn final write
    return entries


class EventLog:
    """Durable when given a directory, in-memory otherwise."""

    def __init__(self, directory: Path | None = None) -> None:
        self.directory = Path(directory) if directory is not None else None
        self.entries: list[LogEntry] = []
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self.entries = read_entries(self.path)
            self._truncate_torn_tail()

    @property
    def path(self) -> Path:
        assert self.directory is not None
        return self.directory / LOG_NAME

    def _truncate_torn_tail(self) -> None:
        size = sum(len(e.to_line()) for e in self.entries)
        if self.path.exists() and self.path.stat().st_size != size:
            with open(self.path, "r+b") as fh:
                fh.truncate(size)

    @property
    def head(self) -> str:
        return self.entries[-1].hash if self.entries else GENESIS_PREV

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.entries)

    def append(self, type_: str, payload: dict[str, Any]) -> LogEntry:
        seq = len(self.entries)
        # round-trip through canonical JSON so the stored payload equals what replay sees
        payload = crypto.parse_json(crypto.canonicalize(payload))
        entry = LogEntry(seq, type_, payload, self.head, LogEntry.compute_hash(seq, type_, payload, self.head))
        if self.directory is not None:
            with open(self.path, "ab") as fh:
                fh.write(entry.to_line())
                fh.flush()
                os.fsync(fh.fileno())
        self.entries.append(entry)
        return entry

    # -- snapshots ----------------------------------------------------------

    def write_snapshot(self, state: dict[str, Any]) -> Path | None:
        """Persist ``state`` as of the current head."""
        if self.directory is None:
            return None
        snap_dir = self.directory / SNAPSHOT_DIR
        snap_dir.mkdir(exist_ok=True)
        body = {"seq": len(self.entries), "head": self.head, "state": state}
        target = snap_dir / f"snapshot-{len(self.entries):010d}.json"
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(crypto.canonicalize(body))
        os.replace(tmp, target)
        return target

    def latest_snapshot(self) -> tuple[int, dict[str, Any]] | None:
        """Newest snapshot consistent with this log, as (entry count, state)."""
        if self.directory is None or not (self.directory / SNAPSHOT_DIR).exists():
            return None
        for snap in sorted((self.directory / SNAPSHOT_DIR).glob("snapshot-*.json"), reverse=True):
            try:
                body = json.loads(snap.read_bytes())
            except ValueError:
                continue
            n = body.get("seq")
            if not isinstance(n, int) or n > len(self.entries):
                continue
            head = self.entries[n - 1].hash if n else GENESIS_PREV
            if body.get("head") == head:
                return n, body["state"]
        return None
