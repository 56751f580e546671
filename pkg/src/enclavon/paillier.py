"""Additively homomorphic public-key encryption (Paillier), plus the glue the
demos need: fixed-point encoding of real-valued weights and a hybrid scheme
for shipping whole records.

Multiplying two ciphertexts yields a ciphertext of the *sum* of the
plaintexts, and raising a ciphertext to an integer power multiplies the
plaintext by that integer. That is all the enclave-hosted aggregation needs:
clients submit encrypted weight vectors, the server combines them without
seeing the plaintexts, and only the enclave holds the private key.

Key material deliberately splits along the trust boundary:

* :class:`PaillierPublicKey` and :class:`Ciphertext` carry the wire
  serialization capability and may cross the gateway.
* :class:`PaillierPrivateKey` does not. There is no codec for it, so the
  runtime cannot ship it even by accident.

All randomness is drawn through an explicit :class:`~.sealing.EntropySource`
capability; nothing here touches ambient RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import wire
from .sealing import EntropySource, IntegrityError, seal_with_key, unseal_with_key

KEY_SIZES = (512, 1024, 2048)
MILLER_RABIN_ROUNDS = 40

# fixed-point scale for real-valued plaintexts; negatives map to n - |m|
FIXED_SCALE = 10**6
FIXED_MAX_ABS = 10**9


class PaillierUsageError(ValueError):
    pass


@dataclass(frozen=True)
class PaillierPublicKey:
    """Public half of a keypair; uses the common g = n + 1 simplification."""

    n: int
    g: int
    n_sq: int

    @classmethod
    def from_n(cls, n: int) -> "PaillierPublicKey":
        return cls(n, n + 1, n * n)

    def __repr__(self) -> str:
        return f"PaillierPublicKey(bits={self.n.bit_length()})"


@dataclass(frozen=True)
class PaillierPrivateKey:
    """Private half; lambda = lcm(p-1, q-1), mu = L(g^lambda mod n^2)^-1 mod n.

    Carries no serialization capability and never leaves the enclave role.
    """

    lam: int
    mu: int

    def __repr__(self) -> str:
        return "PaillierPrivateKey(<hidden>)"


@dataclass(frozen=True)
class Ciphertext:
    c: int

    def __post_init__(self):
        if self.c < 0:
            raise PaillierUsageError("ciphertext must be non-negative")


def _is_probable_prime(n: int, entropy: EntropySource, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin with random bases drawn from the entropy capability."""
    if n < 4:
        return n in (2, 3)
    if n % 2 == 0:
        return False
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = 2 + entropy.randbits(n.bit_length()) % (n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


_SMALL_PRIMES = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]


def _random_prime(bits: int, entropy: EntropySource) -> int:
    while True:
        candidate = entropy.randbits(bits)
        candidate |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1  # size + odd
        if any(candidate % p == 0 for p in _SMALL_PRIMES):
            continue
        if _is_probable_prime(candidate, entropy):
            return candidate


def generate_keypair(
    bits: int, entropy: EntropySource
) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a keypair with an n of exactly ``bits`` bits.

    ``bits`` must be one of 512, 1024 or 2048 (each prime is bits/2). The
    512-bit size is for desk-scale runs and tests, not for protecting
    anything.
    """
    if bits not in KEY_SIZES:
        raise PaillierUsageError(f"key size must be one of {KEY_SIZES}")
    half = bits // 2
    while True:
        p = _random_prime(half, entropy)
        q = _random_prime(half, entropy)
        if p == q:
            continue
        n = p * q
        if n.bit_length() == bits:
            break
    pk = PaillierPublicKey.from_n(n)
    lam = math.lcm(p - 1, q - 1)
    mu = pow(_bigl(pow(pk.g, lam, pk.n_sq), n), -1, n)
    return pk, PaillierPrivateKey(lam, mu)


def _bigl(x: int, n: int) -> int:
    return (x - 1) // n


def encrypt(pk: PaillierPublicKey, m: int, entropy: EntropySource) -> Ciphertext:
    """Encrypt m in Z_n as g^m * r^n mod n^2 with fresh random r.

    Encryption is probabilistic: two encryptions of the same plaintext give
    different ciphertexts.
    """
    if not 0 <= m < pk.n:
        raise PaillierUsageError("plaintext out of range [0, n)")
    r = _random_unit(pk.n, entropy)
    # g = n + 1, so g^m collapses to 1 + m*n (mod n^2)
    return Ciphertext((1 + m * pk.n) * pow(r, pk.n, pk.n_sq) % pk.n_sq)


def _random_unit(n: int, entropy: EntropySource) -> int:
    while True:
        r = entropy.randbits(n.bit_length()) % n
        if r > 0 and math.gcd(r, n) == 1:
            return r


def decrypt(sk: PaillierPrivateKey, pk: PaillierPublicKey, ct: Ciphertext) -> int:
    return _bigl(pow(ct.c, sk.lam, pk.n_sq), pk.n) * sk.mu % pk.n


def hom_add(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext of (plain(a) + plain(b)) mod n."""
    return Ciphertext(a.c * b.c % pk.n_sq)


def scalar_mul(pk: PaillierPublicKey, ct: Ciphertext, k: int) -> Ciphertext:
    """Ciphertext of (k * plain(ct)) mod n, for k >= 0."""
    if k < 0:
        raise PaillierUsageError("scalar must be non-negative")
    return Ciphertext(pow(ct.c, k, pk.n_sq))


def re_encrypt(
    sk: PaillierPrivateKey, pk: PaillierPublicKey, ct: Ciphertext, entropy: EntropySource
) -> Ciphertext:
    """Decrypt-then-encrypt with fresh randomness, shedding accumulated
    homomorphic noise; only callable where the private key lives."""
    return encrypt(pk, decrypt(sk, pk, ct), entropy)


# ---------------------------------------------------------------------------
# Fixed-point encoding
# ---------------------------------------------------------------------------

def encode_fixed(pk: PaillierPublicKey, x: float) -> int:
    """Map a real to Z_n as round(x * 10^6), negatives as n - |.|."""
    if abs(x) > FIXED_MAX_ABS:
        raise PaillierUsageError(f"|x| must be <= {FIXED_MAX_ABS}")
    m = round(x * FIXED_SCALE)
    if abs(m) >= pk.n // 2:
        raise PaillierUsageError("fixed-point magnitude exceeds n/2")
    return m % pk.n


def decode_fixed(pk: PaillierPublicKey, m: int) -> float:
    if m > pk.n // 2:
        m -= pk.n
    return m / FIXED_SCALE


# ---------------------------------------------------------------------------
# Hybrid record encryption
#
# Records are serialized with the canonical wire encoding *locally*, then
# AEAD-encrypted under a fresh 128-bit key which travels Paillier-encrypted
# alongside (key encapsulation). The plaintext record never crosses any
# boundary.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HybridCiphertext:
    key_ct: Ciphertext
    body: bytes  # sealed-blob container under the encapsulated key


def hybrid_encrypt_record(
    pk: PaillierPublicKey, record: bytes, entropy: EntropySource
) -> HybridCiphertext:
    key_int = entropy.randbits(128)
    if key_int >= pk.n:
        raise PaillierUsageError("key size too small for key encapsulation")
    body = seal_with_key(key_int.to_bytes(16, "big"), record, entropy)
    return HybridCiphertext(encrypt(pk, key_int, entropy), body)


def hybrid_decrypt_record(
    sk: PaillierPrivateKey, pk: PaillierPublicKey, hc: HybridCiphertext
) -> bytes:
    key_int = decrypt(sk, pk, hc.key_ct)
    if key_int >= 1 << 128:
        raise IntegrityError()
    return unseal_with_key(key_int.to_bytes(16, "big"), hc.body)


# ---------------------------------------------------------------------------
# Wire capabilities (the private key pointedly gets none)
# ---------------------------------------------------------------------------

CIPHERTEXT_CODEC = wire.Mapped(wire.BIGINT, lambda ct: ct.c, Ciphertext)
PUBLIC_KEY_CODEC = wire.Mapped(wire.BIGINT, lambda pk: pk.n, PaillierPublicKey.from_n)
HYBRID_CODEC = wire.Mapped(
    wire.Record(wire.BIGINT, wire.BYTES),
    lambda hc: (hc.key_ct.c, hc.body),
    lambda pair: HybridCiphertext(Ciphertext(pair[0]), pair[1]),
)

wire.grant_capability(Ciphertext, CIPHERTEXT_CODEC)
wire.grant_capability(PaillierPublicKey, PUBLIC_KEY_CODEC)
wire.grant_capability(HybridCiphertext, HYBRID_CODEC)
