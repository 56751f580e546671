"""Case-study applications wired onto the partition runtime.

Each builder registers the enclave surface and returns the client
computation, exactly once per role; the runtime decides which half is real.
Output goes through an injectable writer so the CLI prints and tests
collect.
"""

from __future__ import annotations

import random
from typing import Callable

from . import cleanroom as cr
from . import fedagg as fa
from .paillier import CIPHERTEXT_CODEC, HYBRID_CODEC, PUBLIC_KEY_CODEC
from .runtime import App, Gateway
from .sealing import (
    EntropySource,
    OsEntropy,
    SecureStore,
    SeededEntropy,
    trust,
    untrusted_read_file,
)
from .wallet import (
    ReturnCode,
    wallet_add,
    wallet_change_master,
    wallet_delete,
    wallet_get,
    WALLET_FILE,
)
from .wire import BOOL, F64, I64, TEXT, Opt, Record, Seq

Println = Callable[[str], None]


def _entropy(seed: int | None, salt: int = 0) -> EntropySource:
    return SeededEntropy(seed + salt) if seed is not None else OsEntropy()


# ---------------------------------------------------------------------------
# Secure counter
# ---------------------------------------------------------------------------

def build_counter(out: Println = print, rounds: int = 3):
    def build(app: App):
        ref = app.new_ref(0)

        def count() -> int:
            v = ref.read()
            ref.write(v + 1)
            return v

        handle = app.register_function("count", count, result_codec=I64)

        def client(gw: Gateway):
            values = []
            for _ in range(rounds):
                v = gw.call(handle)
                out(f"Counter's #{v}")
                values.append(v)
            return values

        return client

    return build


# ---------------------------------------------------------------------------
# Password checker
# ---------------------------------------------------------------------------

def build_pwdcheck(read_line: Callable[[], str] = input, out: Println = print):
    def build(app: App):
        passwd = app.register_constant("secret")
        handle = app.register_function(
            "pwd_chkr",
            lambda guess: guess == passwd.get(),
            arg_codecs=(TEXT,),
            result_codec=BOOL,
        )

        def client(gw: Gateway):
            out("Enter your password")
            guess = read_line().rstrip("\n")
            res = gw.call(handle, guess)
            out(f"Login returned {res}")
            return res

        return client

    return build


# ---------------------------------------------------------------------------
# Password wallet
# ---------------------------------------------------------------------------

WALLET_RESULT = Record(I64, Opt(TEXT))


def register_wallet_functions(app: App, store_dir=None) -> dict:
    """Register the five wallet operations; returns handles keyed by op name.

    The secure store opens lazily from the environment, which only ever
    happens enclave-side (handlers run nowhere else).
    """
    box: dict[str, SecureStore] = {}

    def store() -> SecureStore:
        if "s" not in box:
            box["s"] = SecureStore.from_env(store_dir)
        return box["s"]

    return {
        "add": app.register_function(
            "wallet_add",
            lambda m, t, u, p: int(wallet_add(store(), m, t, u, p)),
            arg_codecs=(TEXT, TEXT, TEXT, TEXT),
            result_codec=I64,
        ),
        "get": app.register_function(
            "wallet_get",
            lambda m, t: tuple(wallet_get(store(), m, t)),
            arg_codecs=(TEXT, TEXT),
            result_codec=WALLET_RESULT,
        ),
        "delete": app.register_function(
            "wallet_delete",
            lambda m, t: int(wallet_delete(store(), m, t)),
            arg_codecs=(TEXT, TEXT),
            result_codec=I64,
        ),
        "change-master": app.register_function(
            "wallet_change_master",
            lambda old, new: int(wallet_change_master(store(), old, new)),
            arg_codecs=(TEXT, TEXT),
            result_codec=I64,
        ),
        "exists": app.register_function(
            "wallet_exists",
            lambda: store().does_secure_file_exist(WALLET_FILE),
            result_codec=BOOL,
        ),
    }


def build_wallet(op: tuple | None, out: Println = print, store_dir=None):
    """Wallet app. ``op`` drives the client side: ("add", master, title,
    username, password) | ("get", master, title) | ("delete", master, title)
    | ("change-master", old, new) | ("exists",). None serves only."""

    def build(app: App):
        handles = register_wallet_functions(app, store_dir)
        h_add = handles["add"]
        h_get = handles["get"]
        h_delete = handles["delete"]
        h_change = handles["change-master"]
        h_exists = handles["exists"]

        def client(gw: Gateway):
            if op is None:
                return None
            name = op[0]
            if name == "add":
                code = ReturnCode(gw.call(h_add, *op[1:]))
                out(f"add: {code.name}")
                return code
            if name == "get":
                raw_code, password = gw.call(h_get, *op[1:])
                code = ReturnCode(raw_code)
                out(f"get: {code.name}" + (f" {password}" if password is not None else ""))
                return code, password
            if name == "delete":
                code = ReturnCode(gw.call(h_delete, *op[1:]))
                out(f"delete: {code.name}")
                return code
            if name == "change-master":
                code = ReturnCode(gw.call(h_change, *op[1:]))
                out(f"change-master: {code.name}")
                return code
            if name == "exists":
                exists = gw.call(h_exists)
                out(f"exists: {exists}")
                return exists
            raise ValueError(f"unknown wallet op {name!r}")

        return client

    return build


# ---------------------------------------------------------------------------
# Data clean room
# ---------------------------------------------------------------------------

def build_cleanroom(
    *,
    epsilon: float = cr.DEFAULT_EPSILON,
    seed: int | None = None,
    n_users: int = 500,
    lo: int = 10_000,
    hi: int = 50_000,
    repeats: int = 1,
    out: Println = print,
    state_box: dict | None = None,
):
    """The Listing-10-shaped flow: init, fetch key, provision, query.

    ``state_box`` (tests only) receives the enclave-side state under "state".
    """

    def build(app: App):
        ref = app.new_ref(None)
        enclave_entropy = _entropy(seed, salt=1)

        def do_init() -> bool:
            state = cr.init_clean_room(epsilon, enclave_entropy)
            ref.write(state)
            if state_box is not None:
                state_box["state"] = state
            return True

        def require_state() -> cr.CleanRoomState:
            state = ref.read()
            if state is None:
                raise RuntimeError("clean room not initialised")
            return state

        h_init = app.register_function("init", do_init, result_codec=BOOL)
        h_pkey = app.register_function(
            "get_public_key", lambda: require_state().pk, result_codec=PUBLIC_KEY_CODEC
        )
        h_prov = app.register_function(
            "provision_user",
            lambda hc: cr.provision_user(require_state(), hc),
            arg_codecs=(HYBRID_CODEC,),
            result_codec=BOOL,
        )
        h_query = app.register_function(
            "laplace_mechanism",
            lambda lo_, hi_: cr.laplace_mechanism(require_state(), cr.salary_within(lo_, hi_)),
            arg_codecs=(I64, I64),
            result_codec=F64,
        )

        def client(gw: Gateway):
            client_entropy = _entropy(seed, salt=2)
            gw.call(h_init)
            key = gw.call(h_pkey)
            dataset = cr.gen_users(seed if seed is not None else 0, n_users)
            for user in dataset:
                accepted = gw.call(h_prov, cr.encrypt_user(key, user, client_entropy))
                if not accepted:
                    raise RuntimeError("provisioning rejected a freshly encrypted user")
            results = [gw.call(h_query, lo, hi) for _ in range(repeats)]
            for result in results:
                out(f"res: {result}")
            return results if repeats > 1 else results[0]

        return client

    return build


# ---------------------------------------------------------------------------
# Federated aggregation
# ---------------------------------------------------------------------------

def build_fedsum(
    *,
    num_clients: int = 3,
    epochs: int = 2,
    dim: int = 4,
    seed: int | None = None,
    test_data_path: str | None = None,
    out: Println = print,
    state_box: dict | None = None,
):
    """Simulates the client fleet sequentially over one connection: every
    client submits, then the stragglers poll the finished epoch average.

    ``test_data_path`` names a host file the enclave loads at startup. The
    read lands untrusted and must be explicitly endorsed (one audit line)
    before the enclave keeps anything from it.
    """

    def build(app: App):
        ref = app.new_ref(None)
        enclave_entropy = _entropy(seed, salt=3)

        def require_state() -> fa.AggregatorState:
            state = ref.read()
            if state is None:
                state = fa.init_aggregator(num_clients, enclave_entropy)
                if test_data_path is not None:
                    wrapped = untrusted_read_file(test_data_path)
                    rows = trust(wrapped, label="fedsum test data").splitlines()
                    state.test_rows = len(rows)
                ref.write(state)
                if state_box is not None:
                    state_box["state"] = state
            return state

        h_pkey = app.register_function(
            "get_public_key", lambda: require_state().pk, result_codec=PUBLIC_KEY_CODEC
        )
        h_agg = app.register_function(
            "aggregate_model",
            lambda epoch, vec: fa.aggregate_model(require_state(), epoch, vec),
            arg_codecs=(I64, Seq(CIPHERTEXT_CODEC)),
            result_codec=Opt(Seq(CIPHERTEXT_CODEC)),
        )
        h_reenc = app.register_function(
            "re_encrypt",
            lambda ct: fa.re_encrypt_ct(require_state(), ct),
            arg_codecs=(CIPHERTEXT_CODEC,),
            result_codec=CIPHERTEXT_CODEC,
        )
        if state_box is not None:
            state_box["handles"] = {"get_public_key": h_pkey,
                                    "aggregate_model": h_agg,
                                    "re_encrypt": h_reenc}

        def client(gw: Gateway):
            client_entropy = _entropy(seed, salt=4)
            rng = random.Random(seed if seed is not None else 0)
            key = gw.call(h_pkey)
            fleet = [
                [rng.uniform(-10, 10) for _ in range(dim)] for _ in range(num_clients)
            ]
            expected = None
            for epoch in range(epochs):
                submitted = [
                    fa.encrypt_weights(key, weights, client_entropy) for weights in fleet
                ]
                pending = []
                for i, vec in enumerate(submitted):
                    got = gw.call(h_agg, epoch, list(vec))
                    pending.append((i, vec, got))
                    out(
                        f"epoch {epoch}: client {i} submitted"
                        + (" (average ready)" if got is not None else " (pending)")
                    )
                for i, vec, got in pending:
                    if got is None:
                        got = fa.client_round(
                            lambda ep, v: gw.call(h_agg, ep, list(v)), epoch, vec
                        )
                expected = [sum(col) / num_clients for col in zip(*fleet)]
                out(f"epoch {epoch}: encrypted average received ({dim} elements)")
                out(f"epoch {epoch}: expected plaintext mean {expected}")
            return expected

        return client

    return build
