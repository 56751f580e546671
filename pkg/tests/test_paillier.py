import random

import pytest

from enclavon import wire
from enclavon.paillier import (
    FIXED_SCALE,
    Ciphertext,
    HybridCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    PaillierUsageError,
    decode_fixed,
    decrypt,
    encode_fixed,
    encrypt,
    generate_keypair,
    hom_add,
    hybrid_decrypt_record,
    hybrid_encrypt_record,
    re_encrypt,
    scalar_mul,
)
from enclavon.sealing import IntegrityError, SeededEntropy


@pytest.fixture(scope="module")
def keys():
    return generate_keypair(512, SeededEntropy(1234))


@pytest.fixture(scope="module")
def entropy():
    return SeededEntropy(99)


def test_keygen_shape(keys):
    pk, sk = keys
    assert pk.n.bit_length() == 512
    assert pk.g == pk.n + 1
    assert pk.n_sq == pk.n * pk.n


def test_keygen_rejects_other_sizes():
    with pytest.raises(PaillierUsageError):
        generate_keypair(384, SeededEntropy(0))


def test_two_keygens_distinct():
    pk1, _ = generate_keypair(512, SeededEntropy(1))
    pk2, _ = generate_keypair(512, SeededEntropy(2))
    assert pk1.n != pk2.n


def test_roundtrip_known_value(keys, entropy):
    pk, sk = keys
    assert decrypt(sk, pk, encrypt(pk, 123456789, entropy)) == 123456789
    assert decrypt(sk, pk, encrypt(pk, 0, entropy)) == 0


def test_roundtrip_random_values(keys, entropy):
    pk, sk = keys
    rng = random.Random(5)
    for _ in range(50):
        m = rng.randrange(pk.n)
        assert decrypt(sk, pk, encrypt(pk, m, entropy)) == m


def test_out_of_range_plaintext(keys, entropy):
    pk, _ = keys
    with pytest.raises(PaillierUsageError):
        encrypt(pk, -1, entropy)
    with pytest.raises(PaillierUsageError):
        encrypt(pk, pk.n, entropy)


def test_encryption_is_probabilistic(keys, entropy):
    pk, _ = keys
    cts = {encrypt(pk, 42, entropy).c for _ in range(100)}
    assert len(cts) == 100


def test_homomorphic_addition(keys, entropy):
    pk, sk = keys
    rng = random.Random(7)
    assert decrypt(sk, pk, hom_add(pk, encrypt(pk, 3, entropy), encrypt(pk, 4, entropy))) == 7
    for _ in range(50):
        a, b = rng.randrange(pk.n), rng.randrange(pk.n)
        got = decrypt(sk, pk, hom_add(pk, encrypt(pk, a, entropy), encrypt(pk, b, entropy)))
        assert got == (a + b) % pk.n


def test_additive_identity(keys, entropy):
    pk, sk = keys
    a = 91919
    assert decrypt(sk, pk, hom_add(pk, encrypt(pk, a, entropy), encrypt(pk, 0, entropy))) == a


def test_scalar_multiplication(keys, entropy):
    pk, sk = keys
    assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, 3, entropy), 5)) == 15
    rng = random.Random(11)
    for k in (0, 1, 2, 17):
        a = rng.randrange(pk.n)
        assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, a, entropy), k)) == k * a % pk.n
    with pytest.raises(PaillierUsageError):
        scalar_mul(pk, encrypt(pk, 1, entropy), -1)


def test_re_encrypt(keys, entropy):
    pk, sk = keys
    for _ in range(20):
        ct = encrypt(pk, 777, entropy)
        ct2 = re_encrypt(sk, pk, ct, entropy)
        assert ct2.c != ct.c
        assert decrypt(sk, pk, ct2) == 777


# --- fixed point ---------------------------------------------------------------


def test_fixed_point_zero(keys):
    pk, _ = keys
    assert encode_fixed(pk, 0.0) == 0
    assert decode_fixed(pk, 0) == 0.0


def test_fixed_point_exact_encoding(keys):
    pk, _ = keys
    assert decode_fixed(pk, encode_fixed(pk, 1.5)) == 1.5
    assert decode_fixed(pk, encode_fixed(pk, -2.25)) == -2.25


def test_fixed_point_modular_negative_addition(keys):
    pk, _ = keys
    total = (encode_fixed(pk, -2.25) + encode_fixed(pk, 3.25)) % pk.n
    assert decode_fixed(pk, total) == 1.0


def test_fixed_point_quantisation(keys):
    pk, _ = keys
    x = 0.1234567891
    assert decode_fixed(pk, encode_fixed(pk, x)) == round(x * FIXED_SCALE) / FIXED_SCALE


def test_fixed_point_magnitude_guard(keys):
    pk, _ = keys
    with pytest.raises(PaillierUsageError):
        encode_fixed(pk, 10**9 + 1.0)


def test_fixed_point_sums_survive_encryption(keys, entropy):
    pk, sk = keys
    rng = random.Random(3)
    xs = [rng.uniform(-100, 100) for _ in range(20)]
    acc = encrypt(pk, encode_fixed(pk, 0.0), entropy)
    for x in xs:
        acc = hom_add(pk, acc, encrypt(pk, encode_fixed(pk, x), entropy))
    want = sum(round(x * FIXED_SCALE) for x in xs) / FIXED_SCALE
    assert abs(decode_fixed(pk, decrypt(sk, pk, acc)) - want) < 1e-9


# --- hybrid records --------------------------------------------------------------


def test_hybrid_roundtrip(keys, entropy):
    pk, sk = keys
    record = b"\x05name occupation 31337 payloads"
    hc = hybrid_encrypt_record(pk, record, entropy)
    assert hybrid_decrypt_record(sk, pk, hc) == record
    assert record not in hc.body


def test_hybrid_tamper_rejected(keys, entropy):
    pk, sk = keys
    hc = hybrid_encrypt_record(pk, b"record bytes", entropy)
    bad = HybridCiphertext(hc.key_ct, hc.body[:-1] + bytes([hc.body[-1] ^ 1]))
    with pytest.raises(IntegrityError):
        hybrid_decrypt_record(sk, pk, bad)


def test_hybrid_wrong_key_ct_rejected(keys, entropy):
    pk, sk = keys
    hc = hybrid_encrypt_record(pk, b"record bytes", entropy)
    # substituting a key ciphertext of an over-long key must fail closed
    bad = HybridCiphertext(encrypt(pk, 1 << 200, entropy), hc.body)
    with pytest.raises(IntegrityError):
        hybrid_decrypt_record(sk, pk, bad)


# --- capabilities -----------------------------------------------------------------


def test_public_key_and_ciphertext_have_capability(keys, entropy):
    pk, _ = keys
    codec = wire.codec_for(PaillierPublicKey)
    assert codec.decode(codec.encode(pk)) == pk
    ct = encrypt(pk, 5, entropy)
    codec = wire.codec_for(Ciphertext)
    assert codec.decode(codec.encode(ct)) == ct
    hc = hybrid_encrypt_record(pk, b"r", entropy)
    codec = wire.codec_for(HybridCiphertext)
    assert codec.decode(codec.encode(hc)) == hc


def test_private_key_has_no_capability():
    assert not wire.has_capability(PaillierPrivateKey)
    with pytest.raises(wire.CapabilityError):
        wire.codec_for(PaillierPrivateKey)


def test_private_key_repr_hides_material(keys):
    _, sk = keys
    assert str(sk.lam) not in repr(sk)
    assert str(sk.mu) not in repr(sk)
