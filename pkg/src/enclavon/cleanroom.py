"""Differentially private data clean room.

User records are provisioned hybrid-encrypted and only ever decrypted inside
the enclave role. The one query surface exposed through the gateway is the
noised counting query; the exact count stays internal. Noise comes from a
two-draw Laplace sampler: a fair sign flip and u = 1000/k for k uniform on
[1, 1000], giving (2z-1) * b * ln(u). The 1000-point discretisation bounds
every sample by b*ln(1000) and pulls the mean |noise| slightly below the
continuous value of b (to ~0.9956*b); tests pin the discrete law, not the
continuous one.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from . import wire
from .paillier import (
    HybridCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    generate_keypair,
    hybrid_decrypt_record,
    hybrid_encrypt_record,
)
from .sealing import EntropySource, IntegrityError, random_in_range

DEFAULT_EPSILON = 0.1
NOISE_DRAW_STEPS = 1000


class CleanRoomUsageError(ValueError):
    pass


@dataclass(frozen=True)
class User:
    """A plaintext record. Deliberately has no wire capability: it crosses
    the gateway only in hybrid-encrypted form."""

    name: str
    occupation: str
    salary: int  # currency units, non-negative
    gender: str
    age: int


# local serialization for hybrid encryption; NOT a wire capability
_USER_RECORD = wire.Record(wire.TEXT, wire.TEXT, wire.I64, wire.TEXT, wire.I64)


def user_to_bytes(user: User) -> bytes:
    return _USER_RECORD.encode((user.name, user.occupation, user.salary, user.gender, user.age))


def user_from_bytes(data: bytes) -> User:
    return User(*_USER_RECORD.decode(data))


def encrypt_user(pk: PaillierPublicKey, user: User, entropy: EntropySource) -> HybridCiphertext:
    return hybrid_encrypt_record(pk, user_to_bytes(user), entropy)


@dataclass
class CleanRoomState:
    epsilon: float
    pk: PaillierPublicKey
    sk: PaillierPrivateKey
    entropy: EntropySource
    users: list[User] = field(default_factory=list)


def init_clean_room(
    epsilon: float, entropy: EntropySource, key_bits: int = 512
) -> CleanRoomState:
    if epsilon <= 0:
        raise CleanRoomUsageError("epsilon must be positive")
    pk, sk = generate_keypair(key_bits, entropy)
    return CleanRoomState(epsilon, pk, sk, entropy)


def get_public_key(state: CleanRoomState) -> PaillierPublicKey:
    return state.pk


def provision_user(state: CleanRoomState, hc: HybridCiphertext) -> bool:
    """Decrypt and append one record; a bad ciphertext leaves state untouched."""
    try:
        user = user_from_bytes(hybrid_decrypt_record(state.sk, state.pk, hc))
    except (IntegrityError, wire.DecodeError):
        return False
    state.users.append(user)
    return True


def counting_query(state: CleanRoomState, predicate: Callable[[User], bool]) -> int:
    """Exact count of matching users. Internal only; never gateway-exposed."""
    return sum(1 for u in state.users if predicate(u))


def salary_within(lo: int, hi: int) -> Callable[[User], bool]:
    if lo > hi:
        raise CleanRoomUsageError("empty salary range")
    return lambda user: lo <= user.salary <= hi


def laplace_sample(entropy: EntropySource, b: float) -> float:
    """One draw of discretised Laplace noise with scale b.

    Support is exactly [-b*ln(1000), b*ln(1000)].
    """
    if b < 0:
        raise CleanRoomUsageError("scale must be non-negative")
    z = random_in_range(entropy, 0, 1)
    u = NOISE_DRAW_STEPS / random_in_range(entropy, 1, NOISE_DRAW_STEPS)
    return (2 * z - 1) * (b * math.log(u))


def laplace_mechanism(state: CleanRoomState, predicate: Callable[[User], bool]) -> float:
    """The only query result the gateway exposes: count plus noise at
    scale 1/epsilon."""
    true_count = counting_query(state, predicate)
    return true_count + laplace_sample(state.entropy, 1 / state.epsilon)


def noise_bound(epsilon: float) -> float:
    """Hard bound on |noised - true| implied by the discretised sampler."""
    return (1 / epsilon) * math.log(NOISE_DRAW_STEPS)


# ---------------------------------------------------------------------------
# Seeded test-data generation. Field distributions: names and occupations
# cycle through fixed pools with a numeric suffix, salary is uniform on
# [1000, 200000], age uniform on [18, 90], gender drawn from a fixed pool.
# ---------------------------------------------------------------------------

_NAMES = ["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi"]
_OCCUPATIONS = ["nurse", "teacher", "engineer", "clerk", "chef", "analyst"]
_GENDERS = ["female", "male", "nonbinary"]


def gen_users(seed: int, count: int) -> list[User]:
    rng = random.Random(seed)
    return [
        User(
            name=f"{rng.choice(_NAMES)}{i}",
            occupation=rng.choice(_OCCUPATIONS),
            salary=rng.randint(1000, 200_000),
            gender=rng.choice(_GENDERS),
            age=rng.randint(18, 90),
        )
        for i in range(count)
    ]
