"""Password wallet kept sealed on disk and unlocked only inside the enclave.

The wallet structure itself has no wire capability, so it can never cross
the gateway whole; the single intended declassification is the one password
returned by a successful get. Every mutation verifies the master password
with a constant-time comparison, applies the change, and reseals the file,
so wallet contents survive enclave restarts.

On-disk (before sealing) the wallet is a line-oriented text format with a
version header; tabs and newlines inside fields are backslash-escaped.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, replace
from enum import IntEnum

from .sealing import SecurePath, SecureStore, secure_file

WALLET_FILE = secure_file("wallet.seal")
FORMAT_HEADER = "enclavon-wallet/1"


class ReturnCode(IntEnum):
    SUCCESS = 0
    AUTH_FAILURE = 1
    NOT_FOUND = 2
    DUPLICATE_ENTRY = 3
    IO_FAILURE = 4


@dataclass(frozen=True)
class Item:
    title: str
    username: str
    password: str


@dataclass(frozen=True)
class Wallet:
    """No wire capability: never serialized across the gateway."""

    items: tuple[Item, ...] = ()
    size: int = 0
    master_password: str = ""


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            out.append({"t": "\t", "n": "\n", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def serialize_wallet(wallet: Wallet) -> str:
    lines = [FORMAT_HEADER, f"master\t{_escape(wallet.master_password)}"]
    lines.extend(
        f"item\t{_escape(i.title)}\t{_escape(i.username)}\t{_escape(i.password)}"
        for i in wallet.items
    )
    return "\n".join(lines) + "\n"


def parse_wallet(text: str) -> Wallet | None:
    """Parse the stable text format; any malformation yields None."""
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        return None
    master = None
    items: list[Item] = []
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "master" and len(parts) == 2 and master is None:
            master = _unescape(parts[1])
        elif parts[0] == "item" and len(parts) == 4:
            items.append(Item(*(_unescape(p) for p in parts[1:])))
        else:
            return None
    if master is None:
        return None
    return Wallet(tuple(items), len(items), master)


def _master_matches(wallet: Wallet, supplied: str) -> bool:
    # constant-time over the stored digest length
    return hmac.compare_digest(wallet.master_password.encode(), supplied.encode())


def wallet_load(store: SecureStore, path: SecurePath = WALLET_FILE) -> Wallet | None:
    """None when the file is absent or unparseable; tampering still raises."""
    if not store.does_secure_file_exist(path):
        return None
    return parse_wallet(store.read_secure(path))


def wallet_save(store: SecureStore, wallet: Wallet, path: SecurePath = WALLET_FILE) -> ReturnCode:
    try:
        store.write_secure(path, serialize_wallet(wallet))
    except OSError:
        return ReturnCode.IO_FAILURE
    return ReturnCode.SUCCESS


def wallet_add(
    store: SecureStore, master: str, title: str, username: str, password: str
) -> ReturnCode:
    wallet = wallet_load(store)
    if wallet is None:
        # first-ever add bootstraps the wallet and fixes the master password
        wallet = Wallet(master_password=master)
    if not _master_matches(wallet, master):
        return ReturnCode.AUTH_FAILURE
    if any(i.title == title for i in wallet.items):
        return ReturnCode.DUPLICATE_ENTRY
    updated = replace(
        wallet, items=wallet.items + (Item(title, username, password),), size=wallet.size + 1
    )
    return wallet_save(store, updated)


def wallet_get(store: SecureStore, master: str, title: str) -> tuple[ReturnCode, str | None]:
    wallet = wallet_load(store)
    if wallet is None:
        return ReturnCode.NOT_FOUND, None
    if not _master_matches(wallet, master):
        return ReturnCode.AUTH_FAILURE, None
    for item in wallet.items:
        if item.title == title:
            return ReturnCode.SUCCESS, item.password
    return ReturnCode.NOT_FOUND, None


def wallet_delete(store: SecureStore, master: str, title: str) -> ReturnCode:
    wallet = wallet_load(store)
    if wallet is None:
        return ReturnCode.NOT_FOUND
    if not _master_matches(wallet, master):
        return ReturnCode.AUTH_FAILURE
    kept = tuple(i for i in wallet.items if i.title != title)
    if len(kept) == len(wallet.items):
        return ReturnCode.NOT_FOUND
    return wallet_save(store, replace(wallet, items=kept, size=len(kept)))


def wallet_change_master(store: SecureStore, old: str, new: str) -> ReturnCode:
    wallet = wallet_load(store)
    if wallet is None:
        return ReturnCode.NOT_FOUND
    if not _master_matches(wallet, old):
        return ReturnCode.AUTH_FAILURE
    return wallet_save(store, replace(wallet, master_password=new))


class WalletModel:
    """In-memory reference model for state-machine testing."""

    def __init__(self):
        self.items: dict[str, tuple[str, str]] = {}
        self.order: list[str] = []
        self.master: str | None = None

    def add(self, master, title, username, password) -> ReturnCode:
        if self.master is None:
            self.master = master
        if master != self.master:
            return ReturnCode.AUTH_FAILURE
        if title in self.items:
            return ReturnCode.DUPLICATE_ENTRY
        self.items[title] = (username, password)
        self.order.append(title)
        return ReturnCode.SUCCESS

    def get(self, master, title) -> tuple[ReturnCode, str | None]:
        if self.master is None:
            return ReturnCode.NOT_FOUND, None
        if master != self.master:
            return ReturnCode.AUTH_FAILURE, None
        if title not in self.items:
            return ReturnCode.NOT_FOUND, None
        return ReturnCode.SUCCESS, self.items[title][1]

    def delete(self, master, title) -> ReturnCode:
        if self.master is None:
            return ReturnCode.NOT_FOUND
        if master != self.master:
            return ReturnCode.AUTH_FAILURE
        if title not in self.items:
            return ReturnCode.NOT_FOUND
        del self.items[title]
        self.order.remove(title)
        return ReturnCode.SUCCESS

    def change_master(self, old, new) -> ReturnCode:
        if self.master is None:
            return ReturnCode.NOT_FOUND
        if old != self.master:
            return ReturnCode.AUTH_FAILURE
        self.master = new
        return ReturnCode.SUCCESS

    def size(self) -> int:
        return len(self.items)
