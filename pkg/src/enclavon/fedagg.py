"""Federated aggregation over encrypted weight vectors.

Clients submit Paillier-encrypted weights per epoch; the enclave sums them
homomorphically and releases the (re-encrypted) average only once every
client has reported, so the fleet moves in lock step. Division happens on
the decrypted sum inside the enclave, the one place the private key exists.

Submissions are polled by resubmission: an identical vector for an
incomplete epoch is treated as a poll and never double-counted, and any
submission for a completed epoch just fetches the cached average.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .paillier import (
    Ciphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    decode_fixed,
    decrypt,
    encode_fixed,
    encrypt,
    generate_keypair,
    hom_add,
    re_encrypt,
)
from .sealing import EntropySource

Vector = tuple[Ciphertext, ...]


class SubmissionError(ValueError):
    pass


class PollTimeout(RuntimeError):
    pass


@dataclass
class AggregatorState:
    pk: PaillierPublicKey
    sk: PaillierPrivateKey
    num_clients: int
    entropy: EntropySource
    upd_wts: list[float] = field(default_factory=list)  # plaintext, enclave-only
    wts_dict: dict[int, list[Vector]] = field(default_factory=dict)
    completed: dict[int, Vector] = field(default_factory=dict)
    test_rows: int | None = None  # endorsed host data, when configured


def init_aggregator(
    num_clients: int, entropy: EntropySource, key_bits: int = 512
) -> AggregatorState:
    if num_clients < 1:
        raise SubmissionError("need at least one client")
    pk, sk = generate_keypair(key_bits, entropy)
    return AggregatorState(pk, sk, num_clients, entropy)


def aggregate_model(state: AggregatorState, epoch: int, weights: Vector) -> Vector | None:
    """Record one submission; return the encrypted average once the epoch is
    complete, None while submissions are still outstanding."""
    if epoch in state.completed:
        return state.completed[epoch]
    received = state.wts_dict.setdefault(epoch, [])
    if received and len(weights) != len(received[0]):
        raise SubmissionError(
            f"vector length {len(weights)} != epoch length {len(received[0])}"
        )
    if weights in received:
        return None  # identical resubmission: a poll, not a new client
    received.append(weights)
    if len(received) < state.num_clients:
        return None

    sums = received[0]
    for vec in received[1:]:
        sums = tuple(hom_add(state.pk, a, b) for a, b in zip(sums, vec))
    totals = [decode_fixed(state.pk, decrypt(state.sk, state.pk, c)) for c in sums]
    state.upd_wts = [t / state.num_clients for t in totals]
    average = tuple(
        encrypt(state.pk, encode_fixed(state.pk, w), state.entropy) for w in state.upd_wts
    )
    state.completed[epoch] = average
    return average


def encrypt_weights(
    pk: PaillierPublicKey, weights: list[float], entropy: EntropySource
) -> Vector:
    return tuple(encrypt(pk, encode_fixed(pk, w), entropy) for w in weights)


def re_encrypt_ct(state: AggregatorState, ct: Ciphertext) -> Ciphertext:
    """Gateway-exposed noise removal: fresh randomness, same plaintext."""
    return re_encrypt(state.sk, state.pk, ct, state.entropy)


def client_round(
    submit,
    epoch: int,
    encrypted_weights: Vector,
    *,
    max_polls: int = 100,
    delay_s: float = 0.01,
) -> Vector:
    """Submit an already-encrypted vector and poll (by resubmitting it) until
    the epoch average arrives. ``submit(epoch, vector)`` is either the local
    aggregate_model or a gateway call. The result stays encrypted."""
    result = submit(epoch, encrypted_weights)
    polls = 0
    while result is None:
        polls += 1
        if polls > max_polls:
            raise PollTimeout(f"epoch {epoch}: no average after {max_polls} polls")
        if delay_s:
            time.sleep(delay_s)
        result = submit(epoch, encrypted_weights)
    return result
