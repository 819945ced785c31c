"""Canonical JSON, Ed25519 signatures and SHA-256 digests.

Canonicalization follows the JSON Canonicalization Scheme (RFC 8785):
object members sorted by UTF-16 code units, no insignificant whitespace,
ECMAScript number formatting and minimal string escaping.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Any

import base58
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .errors import MalformedKey, NonCanonicalizable

MAX_SAFE_INTEGER = 2**53 - 1

# multicodec prefix for an ed25519 public key
_ED25519_PUB_CODEC = b"\xed\x01"

_ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


# -- canonicalization -------------------------------------------------------


def _serialize_string(s: str) -> str:
    out = ['"']
    for ch in s:
        esc = _ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def format_number(value: float) -> str:
    """Format a finite double the way ECMAScript ``Number.prototype.toString`` does."""
    if not math.isfinite(value):
        raise NonCanonicalizable(f"non-finite number: {value!r}")
    if value == 0:
        return "0"
    sign = "-" if value < 0 else ""
    # repr() yields the shortest round-tripping digits
    mantissa, _, exp = repr(abs(value)).partition("e")
    int_part, _, frac_part = mantissa.partition(".")
    digits = int_part + frac_part
    # value == 0.<digits> * 10**n
    n = len(int_part) + (int(exp) if exp else 0)
    stripped = digits.lstrip("0")
    n -= len(digits) - len(stripped)
    digits = stripped.rstrip("0")
    k = len(digits)
    if k <= n <= 21:
        return sign + digits + "0" * (n - k)
    if 0 < n <= 21:
        return sign + digits[:n] + "." + digits[n:]
    if -6 < n <= 0:
        return sign + "0." + "0" * (-n) + digits
    e = n - 1
    exp_str = f"e+{e}" if e >= 0 else f"e-{-e}"
    if k == 1:
        return sign + digits + exp_str
    return sign + digits[0] + "." + digits[1:] + exp_str


def _serialize(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        if abs(value) > MAX_SAFE_INTEGER:
            raise NonCanonicalizable(f"integer outside the interoperable range: {value}")
        out.append(str(value))
    elif isinstance(value, float):
        out.append(format_number(value))
    elif isinstance(value, str):
        out.append(_serialize_string(value))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _serialize(item, out)
        out.append("]")
    elif isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise NonCanonicalizable(f"object member name must be a string: {key!r}")
        out.append("{")
        for i, key in enumerate(sorted(value, key=lambda k: k.encode("utf-16-be"))):
            if i:
                out.append(",")
            out.append(_serialize_string(key))
            out.append(":")
            _serialize(value[key], out)
        out.append("}")
    else:
        raise NonCanonicalizable(f"unsupported type: {type(value).__name__}")


def canonicalize(value: Any) -> bytes:
    """Return the canonical UTF-8 bytes of a JSON-compatible value."""
    out: list[str] = []
    _serialize(value, out)
    return "".join(out).encode("utf-8")


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    obj: dict[str, Any] = {}
    for key, val in pairs:
        if key in obj:
            raise NonCanonicalizable(f"duplicate member name: {key!r}")
        obj[key] = val
    return obj


def _reject_constant(name: str) -> Any:
    raise NonCanonicalizable(f"non-finite number: {name}")


def _parse_int(text: str) -> int | float:
    value = int(text)
    # JSON numbers are IEEE doubles; out-of-range integers become floats
    return value if abs(value) <= MAX_SAFE_INTEGER else float(value)


def parse_json(text: str | bytes) -> Any:
    """Strict JSON parse: duplicate member names and NaN/Infinity are rejected."""
    try:
        return json.loads(
            text,
            object_pairs_hook=_reject_duplicates,
            parse_constant=_reject_constant,
            parse_int=_parse_int,
        )
    except json.JSONDecodeError as exc:
        raise NonCanonicalizable(str(exc)) from exc


def canonicalize_text(text: str | bytes) -> bytes:
    return canonicalize(parse_json(text))


# -- keys and signatures ----------------------------------------------------


@dataclass(frozen=True)
class VerifyingKey:
    raw: bytes

    def __post_init__(self) -> None:
        if len(self.raw) != 32:
            raise MalformedKey("Ed25519 public keys are 32 bytes")

    def to_multibase(self) -> str:
        return multibase_encode(_ED25519_PUB_CODEC + self.raw)

    @classmethod
    def from_multibase(cls, text: str) -> VerifyingKey:
        data = multibase_decode(text)
        if not data.startswith(_ED25519_PUB_CODEC):
            raise MalformedKey("missing ed25519-pub multicodec prefix")
        return cls(data[len(_ED25519_PUB_CODEC):])

    def verify(self, msg: bytes, sig: bytes) -> bool:
        return verify(self, msg, sig)


@dataclass(frozen=True)
class SigningKey:
    seed: bytes

    def __post_init__(self) -> None:
        if len(self.seed) != 32:
            raise MalformedKey("Ed25519 seeds are 32 bytes")

    def __repr__(self) -> str:
        return f"SigningKey(public={self.verifying_key.to_multibase()})"

    @classmethod
    def generate(cls) -> SigningKey:
        return cls(os.urandom(32))

    @property
    def verifying_key(self) -> VerifyingKey:
        pub = self._private().public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return VerifyingKey(pub)

    def _private(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.seed)

    def sign(self, msg: bytes) -> bytes:
        return sign(self, msg)


def sign(key: SigningKey, msg: bytes) -> bytes:
    return key._private().sign(bytes(msg))


def verify(key: VerifyingKey, msg: bytes, sig: bytes) -> bool:
    """True iff ``sig`` is a valid Ed25519 signature of ``msg`` under ``key``."""
    if len(sig) != 64:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(key.raw).verify(bytes(sig), bytes(msg))
    except (InvalidSignature, ValueError):
        return False
    return True


def digest(msg: bytes) -> bytes:
    return hashlib.sha256(msg).digest()


# -- encodings --------------------------------------------------------------


def multibase_encode(data: bytes) -> str:
    return "z" + base58.b58encode(data).decode("ascii")


def multibase_decode(text: str) -> bytes:
    if not text.startswith("z"):
        raise MalformedKey(f"unsupported multibase prefix in {text[:8]!r}")
    try:
        return base58.b58decode(text[1:])
    except ValueError as exc:
        raise MalformedKey(str(exc)) from exc


def encode_signature(sig: bytes) -> str:
    return multibase_encode(sig)


def decode_signature(text: str) -> bytes:
    """Decode a multibase signature; malformed text yields an empty (never valid) signature."""
    try:
        return multibase_decode(text)
    except MalformedKey:
        return b""
