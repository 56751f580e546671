"""Byte-exact framing, messages, and canonical value encodings for the
client/enclave channel.

Frames are a 4-byte big-endian length prefix followed by the payload
(network convention for the prefix). All value encodings inside payloads are
little-endian and fixed, so two independent implementations interoperate.
The full layout, with test vectors, is documented in docs/wire.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAX_FRAME = 16 * 1024 * 1024
MAX_ARGC = 8
DIGEST_SIZE = 32

TAG_CALL = 0x01
TAG_RESULT = 0x02
TAG_DIGEST = 0x03
TAG_DIGEST_ACK = 0x04


class WireError(Exception):
    pass


class FrameTooLarge(WireError):
    pass


class FramingError(WireError):
    """Stream ended or desynchronised in the middle of a frame."""


class DecodeError(WireError):
    pass


class CapabilityError(TypeError):
    """The type has not opted in to wire serialization."""


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def encode_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise FrameTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_FRAME}")
    return struct.pack(">I", len(payload)) + payload


def try_decode_frame(buf: bytes) -> tuple[bytes, bytes] | None:
    """Split one frame off the front of ``buf``.

    Returns (payload, rest), or None if more input is needed.
    """
    if len(buf) < 4:
        return None
    (length,) = struct.unpack_from(">I", buf)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME}")
    if len(buf) < 4 + length:
        return None
    return buf[4 : 4 + length], buf[4 + length :]


def read_frame(read) -> bytes | None:
    """Read one frame from a ``read(n)`` callable.

    Returns None on EOF at a frame boundary; raises FramingError on EOF
    inside a frame.
    """
    header = _read_exact(read, 4, allow_eof=True)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME}")
    return _read_exact(read, length)


def _read_exact(read, n: int, allow_eof: bool = False) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = read(remaining)
        if not chunk:
            if allow_eof and remaining == n:
                return None
            raise FramingError(f"stream ended with {remaining} of {n} bytes missing")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


# ---------------------------------------------------------------------------
# Canonical value encoding
# ---------------------------------------------------------------------------

class Codec:
    """Encoder/decoder pair for one value kind."""

    def encode(self, value) -> bytes:
        raise NotImplementedError

    def read(self, buf: bytes, off: int):
        """Decode one value starting at ``off``; returns (value, new offset)."""
        raise NotImplementedError

    def decode(self, buf: bytes):
        value, off = self.read(buf, 0)
        if off != len(buf):
            raise DecodeError(f"{len(buf) - off} trailing bytes")
        return value


def _need(buf: bytes, off: int, n: int) -> None:
    if off + n > len(buf):
        raise DecodeError("truncated value")


class _I64(Codec):
    def encode(self, value) -> bytes:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"expected int, got {type(value).__name__}")
        try:
            return struct.pack("<q", value)
        except struct.error as exc:
            raise ValueError(f"integer out of 64-bit range: {value}") from exc

    def read(self, buf, off):
        _need(buf, off, 8)
        return struct.unpack_from("<q", buf, off)[0], off + 8


class _F64(Codec):
    def encode(self, value) -> bytes:
        return struct.pack("<d", float(value))

    def read(self, buf, off):
        _need(buf, off, 8)
        return struct.unpack_from("<d", buf, off)[0], off + 8


class _Bool(Codec):
    def encode(self, value) -> bytes:
        return b"\x01" if value else b"\x00"

    def read(self, buf, off):
        _need(buf, off, 1)
        b = buf[off]
        if b > 1:
            raise DecodeError(f"bad boolean byte {b:#x}")
        return bool(b), off + 1


class _Bytes(Codec):
    def encode(self, value) -> bytes:
        if len(value) > 0xFFFFFFFF:
            raise ValueError("byte string too long")
        return struct.pack("<I", len(value)) + bytes(value)

    def read(self, buf, off):
        _need(buf, off, 4)
        (length,) = struct.unpack_from("<I", buf, off)
        off += 4
        _need(buf, off, length)
        return bytes(buf[off : off + length]), off + length


class _Text(Codec):
    def encode(self, value) -> bytes:
        return BYTES.encode(value.encode("utf-8"))

    def read(self, buf, off):
        raw, off = BYTES.read(buf, off)
        try:
            return raw.decode("utf-8"), off
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid UTF-8 in text") from exc


class _BigInt(Codec):
    # sign byte (0 nonneg, 1 neg) + u32 length + magnitude, little-endian,
    # minimal (no trailing zero byte)
    def encode(self, value) -> bytes:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"expected int, got {type(value).__name__}")
        sign = 1 if value < 0 else 0
        mag = abs(value)
        raw = mag.to_bytes((mag.bit_length() + 7) // 8, "little")
        return bytes([sign]) + struct.pack("<I", len(raw)) + raw

    def read(self, buf, off):
        _need(buf, off, 5)
        sign = buf[off]
        if sign > 1:
            raise DecodeError(f"bad sign byte {sign:#x}")
        (length,) = struct.unpack_from("<I", buf, off + 1)
        off += 5
        _need(buf, off, length)
        raw = buf[off : off + length]
        if length and raw[-1] == 0:
            raise DecodeError("non-minimal big-integer magnitude")
        mag = int.from_bytes(raw, "little")
        if sign and mag == 0:
            raise DecodeError("negative zero")
        return -mag if sign else mag, off + length


class Seq(Codec):
    def __init__(self, element: Codec):
        self.element = element

    def encode(self, value) -> bytes:
        items = list(value)
        out = [struct.pack("<I", len(items))]
        out.extend(self.element.encode(v) for v in items)
        return b"".join(out)

    def read(self, buf, off):
        _need(buf, off, 4)
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        items = []
        for _ in range(count):
            v, off = self.element.read(buf, off)
            items.append(v)
        return tuple(items), off


class Opt(Codec):
    def __init__(self, inner: Codec):
        self.inner = inner

    def encode(self, value) -> bytes:
        if value is None:
            return b"\x00"
        return b"\x01" + self.inner.encode(value)

    def read(self, buf, off):
        _need(buf, off, 1)
        flag = buf[off]
        if flag > 1:
            raise DecodeError(f"bad optional flag {flag:#x}")
        off += 1
        if not flag:
            return None, off
        return self.inner.read(buf, off)


class Record(Codec):
    """Fixed field order, straight concatenation."""

    def __init__(self, *fields: Codec):
        self.fields = fields

    def encode(self, value) -> bytes:
        if len(value) != len(self.fields):
            raise ValueError(f"expected {len(self.fields)} fields, got {len(value)}")
        return b"".join(c.encode(v) for c, v in zip(self.fields, value))

    def read(self, buf, off):
        out = []
        for c in self.fields:
            v, off = c.read(buf, off)
            out.append(v)
        return tuple(out), off


class Mapped(Codec):
    """Adapt a codec to a wrapper type via pack/unpack callables."""

    def __init__(self, inner: Codec, pack, unpack):
        self.inner = inner
        self.pack = pack
        self.unpack = unpack

    def encode(self, value) -> bytes:
        return self.inner.encode(self.pack(value))

    def read(self, buf, off):
        raw, off = self.inner.read(buf, off)
        return self.unpack(raw), off


I64 = _I64()
F64 = _F64()
BOOL = _Bool()
BYTES = _Bytes()
TEXT = _Text()
BIGINT = _BigInt()


# ---------------------------------------------------------------------------
# Serialization capability
#
# Only types registered here may cross the gateway. Registration is the
# explicit per-type opt-in; sensitive types (private keys, wallets, plaintext
# user records) are simply never registered.
# ---------------------------------------------------------------------------

_CAPABILITIES: dict[type, Codec] = {int: I64, float: F64, bool: BOOL, bytes: BYTES, str: TEXT}


def grant_capability(py_type: type, codec: Codec) -> None:
    _CAPABILITIES[py_type] = codec


def has_capability(py_type: type) -> bool:
    return py_type in _CAPABILITIES


def codec_for(py_type: type) -> Codec:
    try:
        return _CAPABILITIES[py_type]
    except KeyError:
        raise CapabilityError(
            f"{py_type.__name__} has no serialization capability and cannot cross the gateway"
        ) from None


def encode_value(value) -> bytes:
    return codec_for(type(value)).encode(value)


def decode_value(py_type: type, data: bytes):
    return codec_for(py_type).decode(data)


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------

class ResultStatus(IntEnum):
    OK = 0
    UNKNOWN_CALL = 1
    BAD_ARGUMENT = 2
    HANDLER_FAILED = 3
    MALFORMED = 4


@dataclass(frozen=True)
class Call:
    call_id: int
    args: tuple[bytes, ...]


@dataclass(frozen=True)
class Result:
    status: ResultStatus
    body: bytes


@dataclass(frozen=True)
class Digest:
    digest: bytes


@dataclass(frozen=True)
class DigestAck:
    ok: bool


Message = Call | Result | Digest | DigestAck


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, Call):
        if len(msg.args) > MAX_ARGC:
            raise ValueError(f"argc {len(msg.args)} exceeds {MAX_ARGC}")
        out = [bytes([TAG_CALL]), struct.pack("<I", msg.call_id), bytes([len(msg.args)])]
        for arg in msg.args:
            out.append(struct.pack("<I", len(arg)))
            out.append(arg)
        return b"".join(out)
    if isinstance(msg, Result):
        return (
            bytes([TAG_RESULT, int(msg.status)])
            + struct.pack("<I", len(msg.body))
            + msg.body
        )
    if isinstance(msg, Digest):
        if len(msg.digest) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes")
        return bytes([TAG_DIGEST]) + msg.digest
    if isinstance(msg, DigestAck):
        return bytes([TAG_DIGEST_ACK, 1 if msg.ok else 0])
    raise TypeError(f"not a message: {msg!r}")


def decode_message(data: bytes) -> Message:
    if not data:
        raise DecodeError("empty message")
    tag = data[0]
    if tag == TAG_CALL:
        _need(data, 1, 5)
        (call_id,) = struct.unpack_from("<I", data, 1)
        argc = data[5]
        if argc > MAX_ARGC:
            raise DecodeError(f"argc {argc} exceeds {MAX_ARGC}")
        off = 6
        args = []
        for _ in range(argc):
            _need(data, off, 4)
            (length,) = struct.unpack_from("<I", data, off)
            off += 4
            _need(data, off, length)
            args.append(bytes(data[off : off + length]))
            off += length
        if off != len(data):
            raise DecodeError(f"{len(data) - off} trailing bytes in CALL")
        return Call(call_id, tuple(args))
    if tag == TAG_RESULT:
        _need(data, 1, 5)
        status_byte = data[1]
        try:
            status = ResultStatus(status_byte)
        except ValueError:
            raise DecodeError(f"bad result status {status_byte}") from None
        (length,) = struct.unpack_from("<I", data, 2)
        _need(data, 6, length)
        if 6 + length != len(data):
            raise DecodeError("trailing bytes in RESULT")
        return Result(status, bytes(data[6 : 6 + length]))
    if tag == TAG_DIGEST:
        if len(data) != 1 + DIGEST_SIZE:
            raise DecodeError("DIGEST must carry exactly 32 bytes")
        return Digest(bytes(data[1:]))
    if tag == TAG_DIGEST_ACK:
        if len(data) != 2 or data[1] > 1:
            raise DecodeError("bad DIGEST_ACK")
        return DigestAck(bool(data[1]))
    raise DecodeError(f"unknown message tag {tag:#x}")
