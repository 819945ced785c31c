import json
import math
import struct

import pytest
import rfc8785
from hypothesis import given, settings
from hypothesis import strategies as st

from agenttrust import crypto
from agenttrust.crypto import SigningKey, VerifyingKey, canonicalize
from agenttrust.errors import NonCanonicalizable

# RFC 8785 appendix B: IEEE-754 bit patterns and their canonical text
JCS_NUMBERS = [
    ("0000000000000000", "0"),
    ("8000000000000000", "0"),
    ("0000000000000001", "5e-324"),
    ("8000000000000001", "-5e-324"),
    ("7fefffffffffffff", "1.7976931348623157e+308"),
    ("ffefffffffffffff", "-1.7976931348623157e+308"),
    ("4340000000000000", "9007199254740992"),
    ("c340000000000000", "-9007199254740992"),
    ("4430000000000000", "295147905179352830000"),
    ("44b52d02c7e14af5", "9.999999999999997e+22"),
    ("44b52d02c7e14af6", "1e+23"),
    ("44b52d02c7e14af7", "1.0000000000000001e+23"),
    ("444b1ae4d6e2ef4e", "999999999999999700000"),
    ("444b1ae4d6e2ef4f", "999999999999999900000"),
    ("444b1ae4d6e2ef50", "1e+21"),
    ("3eb0c6f7a0b5ed8c", "9.999999999999997e-7"),
    ("3eb0c6f7a0b5ed8d", "0.000001"),
    ("41b3de4355555553", "333333333.3333332"),
    ("41b3de4355555554", "333333333.33333325"),
    ("41b3de4355555555", "333333333.3333333"),
    ("41b3de4355555556", "333333333.3333334"),
    ("41b3de4355555557", "333333333.33333343"),
    ("becbf647612f3696", "-0.0000033333333333333333"),
    ("43143ff3c1cb0959", "1424953923781206.2"),
]

RFC8032_SEED = bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
RFC8032_PUB = bytes.fromhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
RFC8032_SIG_EMPTY = bytes.fromhex(
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)


@pytest.mark.parametrize("bits,expected", JCS_NUMBERS)
def test_number_formatting_matches_jcs_table(bits, expected):
    value = struct.unpack(">d", bytes.fromhex(bits))[0]
    assert canonicalize(value).decode() == expected


def test_empty_object():
    assert canonicalize({}) == b"{}"


def test_member_order():
    assert canonicalize({"b": 2, "a": 1}) == b'{"a":1,"b":2}'


def test_array_order_preserved():
    assert canonicalize({"x": [True, None]}) == b'{"x":[true,null]}'


def test_jcs_sample_document():
    text = (
        '{"numbers": [333333333.33333329, 1E30, 4.50, 2e-3, 0.000000000000000000000000001],'
        ' "string": "\\u20ac$\\u000F\\u000aA\'\\u0042\\u0022\\u005c\\\\\\"\\/",'
        ' "literals": [null, true, false]}'
    )
    expected = (
        '{"literals":[null,true,false],"numbers":[333333333.3333333,1e+30,4.5,0.002,1e-27],'
        '"string":"€$\\u000f\\nA\'B\\"\\\\\\\\\\"/"}'
    )
    assert crypto.canonicalize_text(text) == expected.encode("utf-8")


def test_jcs_utf16_sort_order():
    text = (
        '{"\\u20ac": "Euro Sign", "\\r": "Carriage Return", "\\ufb33": "Hebrew Letter Dalet With Dagesh",'
        ' "1": "One", "\\ud83d\\ude00": "Emoji: Grinning Face", "\\u0080": "Control",'
        ' "\\u00f6": "Latin Small Letter O With Diaeresis"}'
    )
    keys = list(json.loads(crypto.canonicalize_text(text)).keys())
    assert keys == ["\r", "1", "\u0080", "ö", "€", "\U0001f600", "דּ"]


@pytest.mark.parametrize("bad", ['{"a":1,"a":2}', '{"a":NaN}', '[Infinity]'])
def test_rejects_duplicates_and_non_finite(bad):
    with pytest.raises(NonCanonicalizable):
        crypto.canonicalize_text(bad)


@pytest.mark.parametrize("value", [math.nan, math.inf, -math.inf, 2**53, {1: "x"}, b"raw"])
def test_rejects_uncanonicalizable_values(value):
    with pytest.raises(NonCanonicalizable):
        canonicalize(value)


json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(min_value=-(2**53) + 1, max_value=2**53 - 1)
    | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(), children, max_size=4),
    max_leaves=20,
)


@settings(max_examples=300)
@given(json_values)
def test_agrees_with_independent_jcs_implementation(value):
    assert canonicalize(value) == rfc8785.dumps(value)


@settings(max_examples=300)
@given(json_values)
def test_roundtrip_through_parse(value):
    once = canonicalize(value)
    assert canonicalize(crypto.parse_json(once)) == once


@given(st.dictionaries(st.text(), st.integers(-1000, 1000), max_size=8), st.randoms())
def test_insertion_order_irrelevant(d, rnd):
    items = list(d.items())
    rnd.shuffle(items)
    assert canonicalize(dict(items)) == canonicalize(d)


def test_rfc8032_vector_one():
    key = SigningKey(RFC8032_SEED)
    assert key.verifying_key.raw == RFC8032_PUB
    assert crypto.sign(key, b"") == RFC8032_SIG_EMPTY
    assert crypto.verify(VerifyingKey(RFC8032_PUB), b"", RFC8032_SIG_EMPTY)


def test_sign_deterministic_and_roundtrip():
    key = SigningKey(RFC8032_SEED)
    assert crypto.sign(key, b"msg") == crypto.sign(key, b"msg")
    assert crypto.verify(key.verifying_key, b"msg", crypto.sign(key, b"msg"))


def test_verify_rejects_other_key_and_flipped_bit():
    a, b = SigningKey(b"\x01" * 32), SigningKey(b"\x02" * 32)
    sig = crypto.sign(a, b"hello")
    assert not crypto.verify(b.verifying_key, b"hello", sig)
    assert not crypto.verify(a.verifying_key, b"hellp", sig)
    assert not crypto.verify(a.verifying_key, b"hello", sig[:-1])


def _flip(data: bytes, bit: int) -> bytes:
    buf = bytearray(data)
    buf[bit // 8] ^= 1 << (bit % 8)
    return bytes(buf)


@settings(max_examples=1000, deadline=None)
@given(st.binary(min_size=32, max_size=32), st.binary(max_size=64), st.integers(min_value=0), st.sampled_from(["key", "msg", "sig"]))
def test_signature_soundness_under_single_mutation(seed, msg, pick, target):
    key = SigningKey(seed)
    sig = crypto.sign(key, msg)
    assert crypto.verify(key.verifying_key, msg, sig)
    pub = key.verifying_key.raw
    if target == "msg":
        msg = _flip(msg, pick % (8 * len(msg))) if msg else b"\x00"
    elif target == "sig":
        sig = _flip(sig, pick % 512)
    else:
        pub = _flip(pub, pick % 256)
    assert not crypto.verify(VerifyingKey(pub), msg, sig)


def test_sha256_vectors():
    assert crypto.digest(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert crypto.digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert crypto.digest(b"a") != crypto.digest(b"b")
    assert len(crypto.digest(b"x" * 1000)) == 32


def test_multibase_key_roundtrip():
    vk = SigningKey(RFC8032_SEED).verifying_key
    text = vk.to_multibase()
    assert text.startswith("z6Mk")
    assert VerifyingKey.from_multibase(text) == vk
