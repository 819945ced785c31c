"""URI glob patterns for allowed/denied actions.

``*`` matches any run of characters inside one path segment and ``**`` (as a
whole segment) matches zero or more segments. Scheme and host compare
case-insensitively; the path is case-sensitive. Query and fragment of the
action are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from urllib.parse import urlsplit

from ..errors import MalformedPattern


@dataclass(frozen=True)
class _Parsed:
    origin: str
    segments: tuple[str, ...]


def _split(uri: str, *, pattern: bool) -> _Parsed:
    if not uri or uri != uri.strip():
        raise MalformedPattern(f"empty or padded URI: {uri!r}")
    if "://" in uri:
        parts = urlsplit(uri)
        if pattern and (parts.query or parts.fragment):
            raise MalformedPattern(f"patterns may not carry a query or fragment: {uri!r}")
        origin = f"{parts.scheme.lower()}://{parts.netloc.lower()}"
        path = parts.path
    else:
        scheme, sep, rest = uri.partition(":")
        if not sep:
            origin, path = "", uri
        else:
            origin = scheme.lower() + ":"
            path = rest.split("#", 1)[0].split("?", 1)[0] if not pattern else rest
    path = path.removeprefix("/")
    segments = tuple(path.split("/")) if path else ()
    if pattern:
        for seg in segments:
            if "**" in seg and seg != "**":
                raise MalformedPattern(f"'**' must be a whole segment in {uri!r}")
    return _Parsed(origin, segments)


@lru_cache(maxsize=4096)
def _parse_pattern(pattern: str) -> _Parsed:
    return _split(pattern, pattern=True)


@lru_cache(maxsize=4096)
def _segment_regex(seg: str) -> re.Pattern[str]:
    return re.compile("".join("[^/]*" if ch == "*" else re.escape(ch) for ch in seg))


def _segment_matches(pattern_seg: str, seg: str) -> bool:
    if "*" not in pattern_seg:
        return pattern_seg == seg
    return _segment_regex(pattern_seg).fullmatch(seg) is not None


def _match_segments(pat: tuple[str, ...], segs: tuple[str, ...], *, covering: bool = False) -> bool:
    # reachable[j]: pattern prefix consumed so far matches segs[:j]
    reachable = [True] + [False] * len(segs)
    for p in pat:
        nxt = [False] * (len(segs) + 1)
        if p == "**":
            seen = False
            for j in range(len(segs) + 1):
                seen = seen or reachable[j]
                nxt[j] = seen
        else:
            for j in range(len(segs)):
                if reachable[j]:
                    s = segs[j]
                    if covering and s == "**":
                        continue
                    if _segment_matches(p, s):
                        nxt[j + 1] = True
        reachable = nxt
    return reachable[len(segs)]


def validate_pattern(pattern: str) -> None:
    _parse_pattern(pattern)


def match_uri_pattern(pattern: str, action: str) -> bool:
    """True iff ``action`` falls under ``pattern``."""
    pat = _parse_pattern(pattern)
    try:
        act = _split(action, pattern=False)
    except MalformedPattern:
        return False
    return pat.origin == act.origin and _match_segments(pat.segments, act.segments)


def pattern_covers(parent: str, child: str) -> bool:
    """Conservative check that every action matched by ``child`` is matched by ``parent``.

    The child pattern is treated as a literal path in which its own ``*``
    characters can only be absorbed by wildcards of the parent, and a child
    ``**`` segment only by a parent ``**``. A True result is always sound; some
    genuine coverings (e.g. two globs that happen to be equivalent) are
    rejected.
    """
    p = _parse_pattern(parent)
    c = _parse_pattern(child)
    if p.origin != c.origin:
        return False
    return _match_segments(p.segments, c.segments, covering=True)


def any_match(patterns, action: str) -> str | None:
    for pattern in patterns:
        if match_uri_pattern(pattern, action):
            return pattern
    return None
