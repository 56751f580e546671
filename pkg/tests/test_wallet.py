import random

import pytest

from enclavon import wire
from enclavon.sealing import IntegrityError, RootSealKey, SecureStore
from enclavon.wallet import (
    Item,
    ReturnCode,
    Wallet,
    WalletModel,
    parse_wallet,
    serialize_wallet,
    wallet_add,
    wallet_change_master,
    wallet_delete,
    wallet_get,
    wallet_load,
    wallet_save,
)

KEY = RootSealKey(bytes.fromhex("00112233445566778899aabbccddeeff"))


@pytest.fixture()
def store(tmp_path):
    return SecureStore(KEY, tmp_path / "store")


def test_serialize_parse_roundtrip():
    wallet = Wallet(
        items=(Item("gmail", "bob", "pw123"), Item("with\ttab", "a\nb", "c\\d")),
        size=2,
        master_password="m\tster",
    )
    assert parse_wallet(serialize_wallet(wallet)) == wallet


@pytest.mark.parametrize(
    "text",
    ["", "not-a-wallet\n", "enclavon-wallet/1\n", "enclavon-wallet/1\nitem\tonly\ttwo\n"],
)
def test_parse_rejects_malformed(text):
    assert parse_wallet(text) is None


def test_load_fresh_store_is_absent(store):
    assert wallet_load(store) is None


def test_save_load_roundtrip(store):
    wallet = Wallet((Item("t", "u", "p"),), 1, "master")
    assert wallet_save(store, wallet) is ReturnCode.SUCCESS
    assert wallet_load(store) == wallet
    assert (store.directory / "wallet.seal").exists()


def test_first_add_bootstraps(store):
    assert wallet_add(store, "master", "gmail", "bob", "pw123") is ReturnCode.SUCCESS
    wallet = wallet_load(store)
    assert wallet.size == 1 and wallet.master_password == "master"


def test_get_returns_password(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    assert wallet_get(store, "m", "gmail") == (ReturnCode.SUCCESS, "pw123")


def test_wrong_master_rejected_everywhere(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    assert wallet_add(store, "bad", "other", "x", "y") is ReturnCode.AUTH_FAILURE
    assert wallet_get(store, "bad", "gmail") == (ReturnCode.AUTH_FAILURE, None)
    assert wallet_delete(store, "bad", "gmail") is ReturnCode.AUTH_FAILURE
    assert wallet_change_master(store, "bad", "new") is ReturnCode.AUTH_FAILURE
    assert wallet_load(store).size == 1  # unchanged


def test_duplicate_title(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    assert wallet_add(store, "m", "gmail", "eve", "zzz") is ReturnCode.DUPLICATE_ENTRY
    assert wallet_get(store, "m", "gmail") == (ReturnCode.SUCCESS, "pw123")


def test_unknown_title(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    assert wallet_get(store, "m", "nope") == (ReturnCode.NOT_FOUND, None)
    assert wallet_delete(store, "m", "nope") is ReturnCode.NOT_FOUND


def test_delete_then_get(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    assert wallet_delete(store, "m", "gmail") is ReturnCode.SUCCESS
    assert wallet_get(store, "m", "gmail") == (ReturnCode.NOT_FOUND, None)
    assert wallet_load(store).size == 0


def test_change_master_invalidates_old(store):
    wallet_add(store, "old", "gmail", "bob", "pw123")
    assert wallet_change_master(store, "old", "new") is ReturnCode.SUCCESS
    assert wallet_get(store, "old", "gmail") == (ReturnCode.AUTH_FAILURE, None)
    assert wallet_get(store, "new", "gmail") == (ReturnCode.SUCCESS, "pw123")


def test_ops_on_absent_wallet(store):
    assert wallet_get(store, "m", "t") == (ReturnCode.NOT_FOUND, None)
    assert wallet_delete(store, "m", "t") is ReturnCode.NOT_FOUND
    assert wallet_change_master(store, "m", "n") is ReturnCode.NOT_FOUND


def test_tampered_wallet_is_integrity_error(store):
    wallet_add(store, "m", "gmail", "bob", "pw123")
    path = store.directory / "wallet.seal"
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(IntegrityError):
        wallet_load(store)


def test_on_disk_secrecy(store):
    sentinel = "sentinel-password-xyzzy"
    wallet_add(store, "m", "gmail", "bob", sentinel)
    assert sentinel.encode() not in (store.directory / "wallet.seal").read_bytes()


def test_wallet_has_no_wire_capability():
    assert not wire.has_capability(Wallet)
    with pytest.raises(wire.CapabilityError):
        wire.codec_for(Wallet)


def test_persistence_across_store_reopen(tmp_path):
    first = SecureStore(KEY, tmp_path / "p")
    wallet_add(first, "m", "gmail", "bob", "pw123")
    reopened = SecureStore(KEY, tmp_path / "p")
    assert wallet_get(reopened, "m", "gmail") == (ReturnCode.SUCCESS, "pw123")


def _random_op(rng: random.Random):
    op = rng.choice(["add", "get", "delete", "change", "add", "get"])
    title = rng.choice(["mail", "bank", "forum", "vpn", "wiki"])
    master = rng.choice(["hunter2", "wrong", "hunter2", "hunter2"])
    if op == "add":
        return ("add", master, title, f"user{rng.randrange(5)}", f"pw{rng.randrange(100)}")
    if op == "change":
        return ("change", master, rng.choice(["hunter2", "next1", "next2"]))
    return (op, master, title)


def test_model_based_random_sequence(store):
    rng = random.Random(2718)
    model = WalletModel()
    for step in range(200):
        op = _random_op(rng)
        if op[0] == "add":
            _, master, title, user, pw = op
            assert wallet_add(store, master, title, user, pw) == model.add(
                master, title, user, pw
            ), f"step {step}: {op}"
        elif op[0] == "get":
            _, master, title = op
            assert wallet_get(store, master, title) == model.get(master, title), (
                f"step {step}: {op}"
            )
        elif op[0] == "delete":
            _, master, title = op
            assert wallet_delete(store, master, title) == model.delete(master, title)
        else:
            _, old, new = op
            assert wallet_change_master(store, old, new) == model.change_master(old, new)
        loaded = wallet_load(store)
        assert (loaded.size if loaded else 0) == model.size()
