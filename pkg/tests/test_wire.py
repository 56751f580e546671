import io
import random

import pytest

from enclavon import wire
from enclavon.wire import (
    BIGINT,
    BOOL,
    F64,
    I64,
    TEXT,
    Call,
    CapabilityError,
    DecodeError,
    Digest,
    DigestAck,
    FrameTooLarge,
    FramingError,
    Opt,
    Record,
    Result,
    ResultStatus,
    Seq,
    decode_message,
    encode_frame,
    encode_message,
    read_frame,
    try_decode_frame,
)


# --- framing ----------------------------------------------------------------


def test_frame_vector_ab():
    assert encode_frame(b"AB") == bytes.fromhex("0000000241 42".replace(" ", ""))


def test_frame_roundtrip_random():
    rng = random.Random(0)
    for _ in range(200):
        payload = rng.randbytes(rng.randrange(0, 300))
        out = try_decode_frame(encode_frame(payload))
        assert out is not None and out == (payload, b"")


def test_frame_partial_input_needs_more():
    frame = encode_frame(b"hello")
    for cut in range(len(frame)):
        assert try_decode_frame(frame[:cut]) is None
    payload, rest = try_decode_frame(frame + b"xyz")
    assert payload == b"hello" and rest == b"xyz"


def test_frame_truncated_stream_is_framing_error():
    # declared length 5 but only 3 bytes follow
    stream = io.BytesIO(bytes([0, 0, 0, 5]) + b"abc")
    with pytest.raises(FramingError):
        read_frame(stream.read)


def test_frame_eof_at_boundary_is_clean():
    stream = io.BytesIO(encode_frame(b"ok"))
    assert read_frame(stream.read) == b"ok"
    assert read_frame(stream.read) is None


def test_frame_too_large():
    with pytest.raises(FrameTooLarge):
        try_decode_frame(bytes([0xFF, 0xFF, 0xFF, 0xFF]) + b"x")
    with pytest.raises(FrameTooLarge):
        encode_frame(b"\x00" * (wire.MAX_FRAME + 1))


# --- canonical values ---------------------------------------------------------


def test_i64_vector():
    assert I64.encode(1) == bytes.fromhex("0100000000000000")
    assert I64.encode(-1) == b"\xff" * 8
    assert I64.decode(I64.encode(-(2**63))) == -(2**63)
    with pytest.raises(ValueError):
        I64.encode(2**63)


def test_text_vector():
    assert TEXT.encode("hi") == bytes.fromhex("0200000068 69".replace(" ", ""))
    assert TEXT.decode(TEXT.encode("ünïcode")) == "ünïcode"
    with pytest.raises(DecodeError):
        TEXT.decode(bytes.fromhex("01000000ff"))


def test_bool_seq_vector():
    assert Seq(BOOL).encode([True, False]) == bytes.fromhex("020000000100")
    with pytest.raises(DecodeError):
        BOOL.decode(b"\x02")


def test_bigint_roundtrip_and_strictness():
    for v in (0, 1, -1, 255, 256, -(10**40), 10**100):
        assert BIGINT.decode(BIGINT.encode(v)) == v
    assert BIGINT.encode(0) == bytes.fromhex("0000000000")
    with pytest.raises(DecodeError):  # negative zero
        BIGINT.decode(bytes.fromhex("0100000000"))
    with pytest.raises(DecodeError):  # non-minimal magnitude
        BIGINT.decode(bytes.fromhex("010200000001 00".replace(" ", "")))


def test_optional_and_record():
    codec = Record(I64, Opt(TEXT))
    assert codec.decode(codec.encode((7, "x"))) == (7, "x")
    assert codec.decode(codec.encode((7, None))) == (7, None)
    with pytest.raises(DecodeError):
        Opt(I64).decode(b"\x02" + b"\x00" * 8)


def test_f64_bits_roundtrip():
    for v in (0.0, -0.0, 1.5, 3.141592653589793, 1e300, -2.5e-10):
        assert F64.decode(F64.encode(v)) == v


def test_trailing_bytes_rejected():
    with pytest.raises(DecodeError):
        I64.decode(I64.encode(1) + b"\x00")


def test_codec_injectivity_scan():
    rng = random.Random(1)
    seen: dict[bytes, int] = {}
    for _ in range(2000):
        v = rng.randrange(-(2**62), 2**62)
        enc = I64.encode(v)
        assert seen.setdefault(enc, v) == v
    texts: dict[bytes, str] = {}
    for _ in range(2000):
        s = "".join(rng.choice("abÅ∂c") for _ in range(rng.randrange(0, 8)))
        assert texts.setdefault(TEXT.encode(s), s) == s


# --- capability gate ----------------------------------------------------------


def test_unregistered_type_has_no_capability():
    class Opaque:
        pass

    assert not wire.has_capability(Opaque)
    with pytest.raises(CapabilityError):
        wire.codec_for(Opaque)


def test_encode_value_uses_registry():
    assert wire.encode_value(5) == I64.encode(5)
    assert wire.decode_value(str, TEXT.encode("ok")) == "ok"


# --- messages -----------------------------------------------------------------


def _random_message(rng: random.Random):
    kind = rng.randrange(4)
    if kind == 0:
        args = tuple(rng.randbytes(rng.randrange(0, 40)) for _ in range(rng.randrange(0, 9)))
        return Call(rng.randrange(0, 2**32), args)
    if kind == 1:
        return Result(ResultStatus(rng.randrange(5)), rng.randbytes(rng.randrange(0, 60)))
    if kind == 2:
        return Digest(rng.randbytes(32))
    return DigestAck(bool(rng.randrange(2)))


def test_message_roundtrip_property():
    rng = random.Random(42)
    for _ in range(3000):
        msg = _random_message(rng)
        assert decode_message(encode_message(msg)) == msg


def test_call_argc_limit():
    with pytest.raises(ValueError):
        encode_message(Call(0, tuple(b"x" for _ in range(9))))
    bad = bytes([wire.TAG_CALL]) + b"\x00" * 4 + bytes([9])
    with pytest.raises(DecodeError):
        decode_message(bad)


def test_unknown_tag_is_malformed():
    with pytest.raises(DecodeError):
        decode_message(b"\x7f\x00")
    with pytest.raises(DecodeError):
        decode_message(b"")


def test_message_trailing_bytes_rejected():
    raw = encode_message(Call(3, (b"a",))) + b"!"
    with pytest.raises(DecodeError):
        decode_message(raw)


def test_result_status_strict():
    raw = bytes([wire.TAG_RESULT, 9]) + b"\x00\x00\x00\x00"
    with pytest.raises(DecodeError):
        decode_message(raw)
