"""Endorsement, sealed persistence, and capability-scoped entropy.

Data entering the enclave from the outside world arrives wrapped in
:class:`Untrusted` and must be explicitly endorsed through :func:`trust`,
which leaves an audit line. Data leaving for untrusted media is sealed:
authenticated-encrypted under a root seal key that simulates the per-chip
key of real hardware (cipher: AES-128-GCM; the blob layout is normative,
see docs/wire.md). A tampered or wrongly-keyed blob fails with a single
uninformative IntegrityError so the failure mode leaks nothing.
"""

from __future__ import annotations

import os
import random
import re
import secrets
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Generic, TypeVar

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

RSK_ENV = "HASTEE_RSK"
SECURE_DIR_ENV = "HASTEE_SECURE_DIR"
AUDIT_LOG_ENV = "HASTEE_AUDIT_LOG"
DEFAULT_SECURE_DIR = "secure_store"

MAGIC = b"HSTE"
VERSION = 1
KEY_SIZE = 16  # 128-bit
NONCE_SIZE = 12  # 96-bit
TAG_SIZE = 16
HEADER_SIZE = len(MAGIC) + 1 + NONCE_SIZE
_AAD = MAGIC + bytes([VERSION])  # header is authenticated, not just checked

T = TypeVar("T")


class IntegrityError(Exception):
    """Unsealing failed. Deliberately carries no detail."""

    def __init__(self):
        super().__init__("sealed data failed integrity verification")


class SealingUsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Endorsement
# ---------------------------------------------------------------------------

class Untrusted(Generic[T]):
    """Opaque wrapper around unendorsed data; only trust() can open it."""

    __slots__ = ("__payload",)

    def __init__(self, payload: T):
        self.__payload = payload

    def __repr__(self) -> str:
        return "Untrusted(...)"


class AuditLog:
    """One line per endorsement, optionally mirrored to a file."""

    def __init__(self, path: str | None = None):
        self.path = path
        self.lines: list[str] = []

    def record(self, label: str) -> None:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
        line = f"{stamp} endorse {label}"
        self.lines.append(line)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def count(self) -> int:
        return len(self.lines)


_audit = AuditLog(os.environ.get(AUDIT_LOG_ENV))


def audit_log() -> AuditLog:
    return _audit


def reset_audit_log(path: str | None = None) -> AuditLog:
    global _audit
    _audit = AuditLog(path)
    return _audit


def trust(untrusted: Untrusted[T], label: str | None = None) -> T:
    """Endorse untrusted data, extracting the payload and logging the act."""
    if label is None:
        frame = sys._getframe(1)
        label = f"{Path(frame.f_code.co_filename).name}:{frame.f_lineno}"
    _audit.record(label)
    return untrusted._Untrusted__payload  # type: ignore[attr-defined]


def untrusted_read_file(path: str | os.PathLike) -> Untrusted[str]:
    """Read a file from the untrusted host; the contents stay unendorsed."""
    with open(path, "r", encoding="utf-8") as fh:
        return Untrusted(fh.read())


# ---------------------------------------------------------------------------
# Entropy capability
# ---------------------------------------------------------------------------

class EntropySource:
    """Explicit randomness capability; the only way code here draws entropy."""

    def randbits(self, k: int) -> int:
        raise NotImplementedError

    def randbytes(self, n: int) -> bytes:
        return self.randbits(n * 8).to_bytes(n, "big")


class OsEntropy(EntropySource):
    def randbits(self, k: int) -> int:
        return secrets.randbits(k)

    def randbytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)


class SeededEntropy(EntropySource):
    """Deterministic source for tests; same seed, same sequence."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def randbits(self, k: int) -> int:
        return self._rng.getrandbits(k)


class StubEntropy(EntropySource):
    """Replays a fixed queue of randbits results; for pinned-value tests."""

    def __init__(self, values: list[int]):
        self._values = list(values)

    def randbits(self, k: int) -> int:
        return self._values.pop(0)


def random_in_range(source: EntropySource, lo: int, hi: int) -> int:
    """Uniform integer on the inclusive range [lo, hi] (rejection sampled)."""
    if lo > hi:
        raise SealingUsageError(f"empty range [{lo}, {hi}]")
    span = hi - lo + 1
    bits = span.bit_length()
    while True:
        r = source.randbits(bits)
        if r < span:
            return lo + r


# ---------------------------------------------------------------------------
# Sealing
# ---------------------------------------------------------------------------

class RootSealKey:
    """128-bit symmetric key standing in for the hardware seal key.

    Never serialized and never printed; the only consumers are seal/unseal.
    """

    __slots__ = ("__key",)

    def __init__(self, key: bytes):
        if len(key) != KEY_SIZE:
            raise SealingUsageError(f"root seal key must be {KEY_SIZE} bytes")
        self.__key = bytes(key)

    @classmethod
    def from_env(cls) -> "RootSealKey":
        raw = os.environ.get(RSK_ENV)
        if raw is None:
            raise SealingUsageError(
                f"sealing requires {RSK_ENV} (32 hex characters) in the environment"
            )
        if not re.fullmatch(r"[0-9a-fA-F]{32}", raw):
            raise SealingUsageError(f"{RSK_ENV} must be exactly 32 hex characters")
        return cls(bytes.fromhex(raw))

    def _key_bytes(self) -> bytes:
        return self.__key

    def __repr__(self) -> str:
        return "RootSealKey(<hidden>)"


@dataclass(frozen=True)
class SealedBlob:
    version: int
    nonce: bytes
    ciphertext: bytes  # AEAD output, tag included

    def to_bytes(self) -> bytes:
        return MAGIC + bytes([self.version]) + self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        if (
            len(data) < HEADER_SIZE + TAG_SIZE
            or data[: len(MAGIC)] != MAGIC
            or data[len(MAGIC)] != VERSION
        ):
            raise IntegrityError()
        nonce = data[len(MAGIC) + 1 : HEADER_SIZE]
        return cls(VERSION, nonce, data[HEADER_SIZE:])


def seal_with_key(key: bytes, plaintext: bytes, entropy: EntropySource | None = None) -> bytes:
    """AEAD-seal plaintext under a raw 128-bit key; returns blob bytes."""
    nonce = (entropy or OsEntropy()).randbytes(NONCE_SIZE)
    ciphertext = AESGCM(key).encrypt(nonce, plaintext, _AAD)
    return SealedBlob(VERSION, nonce, ciphertext).to_bytes()


def unseal_with_key(key: bytes, data: bytes) -> bytes:
    blob = SealedBlob.from_bytes(data)
    try:
        return AESGCM(key).decrypt(blob.nonce, blob.ciphertext, _AAD)
    except InvalidTag:
        raise IntegrityError() from None


def seal(plaintext: bytes, rsk: RootSealKey, entropy: EntropySource | None = None) -> bytes:
    return seal_with_key(rsk._key_bytes(), plaintext, entropy)


def unseal(data: bytes, rsk: RootSealKey) -> bytes:
    return unseal_with_key(rsk._key_bytes(), data)


# ---------------------------------------------------------------------------
# Secure files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SecurePath:
    """A bare file name inside the secure store; no traversal allowed."""

    name: str

    def __post_init__(self):
        if (
            not self.name
            or "/" in self.name
            or "\\" in self.name
            or ".." in self.name
            or "\x00" in self.name
        ):
            raise SealingUsageError(f"bad secure file name {self.name!r}")


def secure_file(name: str) -> SecurePath:
    return SecurePath(name)


class SecureStore:
    """Sealed files under one directory, owned by a single enclave process."""

    def __init__(self, rsk: RootSealKey, directory: str | os.PathLike | None = None):
        self.rsk = rsk
        self.directory = Path(
            directory or os.environ.get(SECURE_DIR_ENV, DEFAULT_SECURE_DIR)
        )

    @classmethod
    def from_env(cls, directory: str | os.PathLike | None = None) -> "SecureStore":
        return cls(RootSealKey.from_env(), directory)

    def _file(self, path: SecurePath) -> Path:
        return self.directory / path.name

    def write_secure(self, path: SecurePath, text: str) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        blob = seal(text.encode("utf-8"), self.rsk)
        tmp = self._file(path).with_name(path.name + ".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, self._file(path))  # atomic swap-in

    def read_secure(self, path: SecurePath) -> str:
        # a missing file is not an integrity failure: deleting the file is
        # the one thing an attacker can always do
        data = self._file(path).read_bytes()
        return unseal(data, self.rsk).decode("utf-8")

    def does_secure_file_exist(self, path: SecurePath) -> bool:
        return self._file(path).exists()

    def delete(self, path: SecurePath) -> None:
        self._file(path).unlink(missing_ok=True)
