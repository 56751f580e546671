"""Client/enclave partition runtime.

One program describes both sides: a build function registers enclave
functions, constants, and refs against an :class:`App`, then returns the
client computation. The process role, chosen once at startup, decides which
half becomes real — the enclave keeps handlers and state, the client keeps
only call identifiers. The two sides talk over a framed byte stream
(request/response, one call in flight) and verify at connect time that they
registered the same interface, by exchanging a digest of the registration
order.
"""

from __future__ import annotations

import hashlib
import socket
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable

from . import wire
from .wire import (
    Call,
    Codec,
    DecodeError,
    Digest,
    DigestAck,
    Result,
    ResultStatus,
)

MAX_ARITY = 8
DEFAULT_TIMEOUT_MS = 30_000


class Role(Enum):
    CLIENT = "client"
    ENCLAVE = "enclave"
    LOCAL = "local"


class UsageError(Exception):
    """API misuse: wrong role, wrong phase, or bad registration."""


class ArityError(UsageError):
    pass


class TransportError(Exception):
    pass


class ConnectError(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


class RegistryMismatch(TransportError):
    """The two roles did not register the same interface in the same order."""


class RemoteError(Exception):
    """The enclave reported a failure for a call."""


class UnknownCall(RemoteError):
    pass


class BadArgument(RemoteError):
    pass


class HandlerFailed(RemoteError):
    pass


class BadResult(RemoteError):
    """The result bytes did not decode to the expected type."""


_STATUS_ERRORS = {
    ResultStatus.UNKNOWN_CALL: UnknownCall,
    ResultStatus.BAD_ARGUMENT: BadArgument,
    ResultStatus.HANDLER_FAILED: HandlerFailed,
    ResultStatus.MALFORMED: RemoteError,
}


# ---------------------------------------------------------------------------
# Handles, refs, constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SecureHandle:
    """Client-side name for an enclave function plus its pending arguments.

    Immutable: ``apply`` returns a new handle, so partially applied handles
    can be shared and reused safely.
    """

    call_id: int
    name: str
    arity: int
    arg_codecs: tuple[Codec, ...]
    result_codec: Codec
    pending: tuple[bytes, ...] = ()

    def apply(self, value) -> "SecureHandle":
        if len(self.pending) >= self.arity:
            raise ArityError(f"{self.name} takes {self.arity} argument(s)")
        codec = self.arg_codecs[len(self.pending)]
        return replace(self, pending=self.pending + (codec.encode(value),))


class EnclaveRef:
    """Mutable cell living in enclave memory; persists across gateway calls."""

    def __init__(self, app: "App", slot: int):
        self._app = app
        self._slot = slot

    def read(self):
        return self._app._ref_cell(self._slot)[0]

    def write(self, value) -> None:
        self._app._ref_cell(self._slot)[0] = value


class EnclaveConstant:
    """Value pinned inside the enclave; the client holds an opaque token."""

    def __init__(self, app: "App", slot: int):
        self._app = app
        self._slot = slot

    def get(self):
        return self._app._const_value(self._slot)


@dataclass
class _Entry:
    call_id: int
    name: str
    arity: int
    handler: Callable | None
    arg_codecs: tuple[Codec, ...]
    result_codec: Codec


# ---------------------------------------------------------------------------
# App description
# ---------------------------------------------------------------------------

class App:
    """Registration surface for one role of the program."""

    def __init__(self, role: Role):
        if role is Role.LOCAL:
            raise UsageError("LOCAL spawns a CLIENT and an ENCLAVE app; pick one")
        self.role = role
        self._entries: list[_Entry] = []
        self._cells: list[list] = []
        self._consts: list = []
        self._sealed = False

    # -- registration phase --

    def _check_open(self) -> None:
        if self._sealed:
            raise UsageError("registration after startup phase")

    def register_function(
        self,
        name: str,
        handler: Callable,
        *,
        arg_codecs: tuple[Codec, ...] = (),
        result_codec: Codec,
    ) -> SecureHandle:
        self._check_open()
        arity = len(arg_codecs)
        if arity > MAX_ARITY:
            raise UsageError(f"arity {arity} exceeds {MAX_ARITY}")
        call_id = len(self._entries)
        kept = handler if self.role is Role.ENCLAVE else None
        self._entries.append(
            _Entry(call_id, name, arity, kept, tuple(arg_codecs), result_codec)
        )
        return SecureHandle(call_id, name, arity, tuple(arg_codecs), result_codec)

    def register_constant(self, value) -> EnclaveConstant:
        self._check_open()
        slot = len(self._consts)
        self._consts.append(value if self.role is Role.ENCLAVE else None)
        return EnclaveConstant(self, slot)

    def new_ref(self, initial) -> EnclaveRef:
        self._check_open()
        slot = len(self._cells)
        self._cells.append([initial] if self.role is Role.ENCLAVE else None)
        return EnclaveRef(self, slot)

    def seal(self) -> None:
        self._sealed = True

    # -- enclave-side access --

    def _ref_cell(self, slot: int) -> list:
        if self.role is not Role.ENCLAVE:
            raise UsageError("refs are only dereferenceable in the enclave role")
        return self._cells[slot]

    def _const_value(self, slot: int):
        if self.role is not Role.ENCLAVE:
            raise UsageError("enclave constants are not readable in the client role")
        return self._consts[slot]

    def registry_digest(self) -> bytes:
        """Hash of the ordered (call id, name, arity) triples."""
        h = hashlib.sha256()
        entry_codec = wire.Record(wire.I64, wire.TEXT, wire.I64)
        for e in self._entries:
            h.update(entry_codec.encode((e.call_id, e.name, e.arity)))
        return h.digest()


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------

class WireCapture:
    """Records every frame payload with its direction, for audit tests."""

    C2E = "client->enclave"
    E2C = "enclave->client"

    def __init__(self):
        self.frames: list[tuple[str, bytes]] = []

    def record(self, direction: str, payload: bytes) -> None:
        self.frames.append((direction, payload))

    def bytes_toward(self, direction: str) -> bytes:
        return b"".join(p for d, p in self.frames if d == direction)

    def all_bytes(self) -> bytes:
        return b"".join(p for _, p in self.frames)


class Channel:
    """Framed duplex byte stream over a socket."""

    def __init__(self, sock: socket.socket, *, capture: WireCapture | None = None,
                 sent_direction: str = WireCapture.C2E):
        self._sock = sock
        self._capture = capture
        self._sent_direction = sent_direction
        self._recv_direction = (
            WireCapture.E2C if sent_direction == WireCapture.C2E else WireCapture.C2E
        )

    def set_timeout(self, timeout_ms: int | None) -> None:
        self._sock.settimeout(timeout_ms / 1000 if timeout_ms else None)

    def send(self, payload: bytes) -> None:
        if self._capture is not None:
            self._capture.record(self._sent_direction, payload)
        try:
            self._sock.sendall(wire.encode_frame(payload))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv(self) -> bytes | None:
        try:
            payload = wire.read_frame(self._sock.recv)
        except socket.timeout as exc:
            raise TransportTimeout("timed out waiting for the peer") from exc
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if payload is not None and self._capture is not None:
            self._capture.record(self._recv_direction, payload)
        return payload

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Enclave side
# ---------------------------------------------------------------------------

def enclave_handshake(app: App, channel: Channel) -> None:
    payload = channel.recv()
    if payload is None:
        raise TransportError("client disconnected before handshake")
    try:
        msg = wire.decode_message(payload)
    except DecodeError as exc:
        raise RegistryMismatch(f"bad handshake message: {exc}") from exc
    if not isinstance(msg, Digest):
        raise RegistryMismatch("expected a registry digest")
    ok = msg.digest == app.registry_digest()
    channel.send(wire.encode_message(DigestAck(ok)))
    if not ok:
        raise RegistryMismatch("registry digests differ between roles")


def serve_loop(app: App, channel: Channel) -> None:
    """Answer CALL messages strictly in order until the client disconnects."""
    table = {e.call_id: e for e in app._entries}
    while True:
        try:
            payload = channel.recv()
        except wire.WireError as exc:
            # framing is broken, so the stream cannot be resynchronised;
            # flag it to the peer if possible and stop serving
            try:
                channel.send(
                    wire.encode_message(Result(ResultStatus.MALFORMED, str(exc).encode()))
                )
            except TransportError:
                pass
            return
        if payload is None:
            return
        channel.send(wire.encode_message(_handle_call(table, payload)))


def _handle_call(table: dict[int, _Entry], payload: bytes) -> Result:
    try:
        msg = wire.decode_message(payload)
    except DecodeError as exc:
        return Result(ResultStatus.MALFORMED, str(exc).encode())
    if not isinstance(msg, Call):
        return Result(ResultStatus.MALFORMED, b"expected CALL")
    entry = table.get(msg.call_id)
    if entry is None:
        return Result(ResultStatus.UNKNOWN_CALL, f"no call {msg.call_id}".encode())
    if len(msg.args) != entry.arity:
        return Result(
            ResultStatus.BAD_ARGUMENT,
            f"{entry.name} takes {entry.arity} argument(s)".encode(),
        )
    try:
        values = [c.decode(raw) for c, raw in zip(entry.arg_codecs, msg.args)]
    except DecodeError as exc:
        return Result(ResultStatus.BAD_ARGUMENT, str(exc).encode())
    try:
        out = entry.handler(*values)
        body = entry.result_codec.encode(out)
    except Exception as exc:  # noqa: BLE001 - handler faults become replies
        return Result(ResultStatus.HANDLER_FAILED, f"{type(exc).__name__}: {exc}".encode())
    return Result(ResultStatus.OK, body)


# ---------------------------------------------------------------------------
# Client side
# ---------------------------------------------------------------------------

class Gateway:
    """Client-side caller: ships arguments to the enclave, blocks for the
    result, and decodes a deep copy of it."""

    def __init__(self, channel: Channel):
        self._channel = channel
        self._lock = threading.Lock()  # one call in flight per connection

    def handshake(self, app: App) -> None:
        self._channel.send(wire.encode_message(Digest(app.registry_digest())))
        payload = self._channel.recv()
        if payload is None:
            raise RegistryMismatch("enclave closed during handshake")
        msg = wire.decode_message(payload)
        if not isinstance(msg, DigestAck) or not msg.ok:
            raise RegistryMismatch("registry digests differ between roles")

    def call(self, handle: SecureHandle, *args) -> Any:
        for a in args:
            handle = handle.apply(a)
        if len(handle.pending) != handle.arity:
            raise ArityError(
                f"{handle.name} takes {handle.arity} argument(s), "
                f"{len(handle.pending)} supplied"
            )
        with self._lock:
            self._channel.send(wire.encode_message(Call(handle.call_id, handle.pending)))
            payload = self._channel.recv()
        if payload is None:
            raise TransportError("enclave closed the connection mid-call")
        msg = wire.decode_message(payload)
        if not isinstance(msg, Result):
            raise TransportError("expected RESULT")
        if msg.status is not ResultStatus.OK:
            raise _STATUS_ERRORS[msg.status](msg.body.decode("utf-8", "replace"))
        try:
            return handle.result_codec.decode(msg.body)
        except DecodeError as exc:
            raise BadResult(str(exc)) from exc


# ---------------------------------------------------------------------------
# Running an app
# ---------------------------------------------------------------------------

BuildFn = Callable[[App], Callable[[Gateway], Any]]


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"bad address {addr!r}, expected HOST:PORT")
    return host or "127.0.0.1", int(port)


def run_app(
    build: BuildFn,
    role: Role,
    addr: str | None = None,
    *,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    capture: WireCapture | None = None,
) -> Any:
    """Run one role of the program; LOCAL runs both over an in-memory pair.

    Returns the client computation's result (None in the enclave role).
    Transport and handshake failures raise; the CLI maps them to exit codes.
    """
    if role is Role.LOCAL:
        return run_local(build, timeout_ms=timeout_ms, capture=capture)
    if addr is None:
        raise UsageError("client and enclave roles need --addr HOST:PORT")
    host, port = parse_addr(addr)

    if role is Role.ENCLAVE:
        app = App(Role.ENCLAVE)
        build(app)
        app.seal()
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host, port))
            listener.listen(1)
            conn, _ = listener.accept()
        channel = Channel(conn, sent_direction=WireCapture.E2C)
        try:
            enclave_handshake(app, channel)
            serve_loop(app, channel)
        finally:
            channel.close()
        return None

    app = App(Role.CLIENT)
    client_main = build(app)
    app.seal()
    try:
        sock = socket.create_connection((host, port), timeout=timeout_ms / 1000)
    except OSError as exc:
        raise ConnectError(f"cannot reach enclave at {addr}: {exc}") from exc
    channel = Channel(sock, capture=capture)
    channel.set_timeout(timeout_ms)
    try:
        gw = Gateway(channel)
        gw.handshake(app)
        return client_main(gw)
    finally:
        channel.close()


def run_local(
    build: BuildFn,
    *,
    build_enclave: BuildFn | None = None,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    capture: WireCapture | None = None,
) -> Any:
    """Run client and enclave in one process over a socket pair.

    ``build_enclave`` lets tests deliberately build a mismatched enclave.
    """
    client_app = App(Role.CLIENT)
    client_main = build(client_app)
    client_app.seal()

    enclave_app = App(Role.ENCLAVE)
    (build_enclave or build)(enclave_app)
    enclave_app.seal()

    c_sock, e_sock = socket.socketpair()
    client_channel = Channel(c_sock, capture=capture)
    client_channel.set_timeout(timeout_ms)
    # the serve loop blocks on recv for as long as the client lives
    enclave_channel = Channel(e_sock, sent_direction=WireCapture.E2C)

    enclave_error: list[BaseException] = []

    def serve() -> None:
        try:
            enclave_handshake(enclave_app, enclave_channel)
            serve_loop(enclave_app, enclave_channel)
        except RegistryMismatch as exc:
            enclave_error.append(exc)
        except TransportError:
            pass  # client went away; local shutdown
        finally:
            enclave_channel.close()

    thread = threading.Thread(target=serve, name="enclave", daemon=True)
    thread.start()
    try:
        gw = Gateway(client_channel)
        gw.handshake(client_app)
        return client_main(gw)
    finally:
        client_channel.close()
        thread.join(timeout=5)
