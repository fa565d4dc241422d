import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmpswhe import fixtures
from cmpswhe.cipher import (
    Ciphertext,
    decrypt,
    decrypt_raw,
    decrypt_with_template,
    draw_below,
    encrypt_private,
    encrypt_public,
    parse_ciphertext,
    round_quotient,
    serialize_ciphertext,
)
from cmpswhe.errors import CapacityError, FormatError, ModulusMismatchError
from cmpswhe.keys import Envelope, KeyParams, PrivateKey, PublicKey, derive_keys
from cmpswhe.modmath import ModulusSet, gen_prime_pool
from cmpswhe.ops import blind_add, blind_mul, blind_sub

from .conftest import USER_KEY


def correct_slots(ct, template):
    m = ct.matrix()
    return tuple(int(m[i, s]) for i, s in enumerate(template))


def test_worked_encryption_correct_slots(worked):
    _, sk = worked
    ct = encrypt_private(fixtures.X, sk, random.Random(0), eta=fixtures.ETA_X)
    assert correct_slots(ct, sk.template) == (12, 21, 22)
    # the published matrix agrees on the correct slots
    fig_x, _ = fixtures.figure_ciphertexts(sk.pk)
    assert correct_slots(fig_x, sk.template) == (12, 21, 22)


def test_zero_with_zero_noise(worked):
    _, sk = worked
    ct = encrypt_private(0, sk, random.Random(0), eta=0)
    assert correct_slots(ct, sk.template) == (0, 0, 0)


def test_public_encryption_is_slot_uniform(worked):
    pk, sk = worked
    ct = encrypt_public(2, pk)
    assert ct.slot_uniform
    m = ct.matrix()
    assert list(m[0]) == [66 % 19] * 3 == [9, 9, 9]
    assert m.shape == (3, 3)
    assert np.all(encrypt_public(0, pk).matrix() == 0)


def test_worked_sum_floor_and_raw(worked):
    pk, sk = worked
    x, y = fixtures.figure_ciphertexts(pk)
    s = blind_add(x, y)
    assert correct_slots(s, sk.template) == (9, 21, 30)
    assert decrypt(s, sk, "floor") == 146
    assert decrypt_raw(s, sk) == Fraction(4835, 33)
    assert f"{float(decrypt_raw(s, sk)):.6f}" == "146.515152"


def test_blind_difference_rounding(worked):
    _, sk = worked
    rng = random.Random(1)
    x = encrypt_private(78, sk, rng, eta=7)
    y = encrypt_private(68, sk, rng, eta=10)
    d = blind_sub(x, y)
    assert decrypt(d, sk, "nearest") == 10
    assert decrypt(d, sk, "floor") == 9


def test_decrypt_raw_of_product_matches_rational_oracle():
    mset = ModulusSet(gen_prime_pool(16, 4))
    pk = PublicKey(1000, mset, 2, Envelope(100, 2, 1))
    sk = PrivateKey(pk, (0, 1, 1, 0), 10)
    x = encrypt_private(4, sk, random.Random(0), eta=3)
    y = encrypt_private(5, sk, random.Random(1), eta=7)
    raw = decrypt_raw(blind_mul(x, y), sk)
    assert raw == Fraction(4003 * 5007, 1000**2) == Fraction("20.043021")


@pytest.mark.parametrize("p", [5, 7, -3, 0, 65535])
def test_public_decrypts_exactly(sk, p):
    ct = encrypt_public(p, sk.pk)
    assert decrypt(ct, sk, "floor") == decrypt(ct, sk, "nearest") == p
    assert decrypt_raw(ct, sk) == p


def test_roundtrip_1000_bytes(sk):
    rng = random.Random(99)
    values = [rng.randrange(256) for _ in range(1000)]
    ct = encrypt_private(values, sk, rng)
    assert ct.shape == (1000,)
    assert list(decrypt(ct, sk)) == values
    assert list(decrypt(ct, sk, "floor")) == values


@given(p=st.integers(-65535, 65535), seed=st.integers(0, 2**32))
def test_roundtrip_property(sk, p, seed):
    ct = encrypt_private(p, sk, random.Random(seed))
    assert decrypt(ct, sk, "nearest") == p
    # noise lies in [0, a), so floor is exact for fresh ciphertexts
    assert decrypt(ct, sk, "floor") == p


@given(p=st.integers(0, 65535), eta=st.integers(0, 2**62 - 1))
def test_correct_slot_consistency(sk, p, eta):
    ct = encrypt_private(p, sk, random.Random(0), eta=eta)
    expected = tuple((sk.a * p + eta) % b for b in sk.mset.moduli)
    assert correct_slots(ct, sk.template) == expected


def test_residues_lie_below_moduli(sk):
    ct = encrypt_private(np.arange(50), sk, random.Random(3))
    m = ct.matrix()
    for i, b in enumerate(sk.mset.moduli):
        assert all(0 <= int(v) < b for v in m[:, i, :].flat)


def test_decoy_slots_differ_across_a_row(sk):
    ct = encrypt_private(17, sk, random.Random(5))
    m = ct.matrix()
    for row in m:
        assert len(set(int(v) for v in row)) == sk.m_slots


def test_int64_path_matches_object_path():
    _, sk = derive_keys(USER_KEY, 7, KeyParams(start_bits=31))
    assert sk.mset.dtype == np.int64
    rng = random.Random(4)
    values = [rng.randrange(-65535, 65536) for _ in range(300)]
    ct = encrypt_private(values, sk, rng)
    assert ct.residues.dtype == np.int64
    assert list(decrypt(ct, sk)) == values


def test_envelope_rejects_large_plaintext(sk):
    with pytest.raises(CapacityError):
        encrypt_private(65536, sk, random.Random(0))
    with pytest.raises(CapacityError):
        encrypt_public(-65536, sk.pk)


def test_key_mismatch_is_detected(sk, fast_keys):
    ct = encrypt_private(3, sk, random.Random(0))
    with pytest.raises(ModulusMismatchError):
        decrypt(ct, fast_keys[1])


@pytest.mark.parametrize(
    "num, den, floor, nearest",
    [(327, 33, 9, 10), (-327, 33, -10, -10), (33, 66, 0, 1), (-33, 66, -1, 0), (10, 5, 2, 2)],
)
def test_round_quotient(num, den, floor, nearest):
    assert round_quotient(num, den, "floor") == floor
    assert round_quotient(num, den, "nearest") == nearest
    assert nearest == (Fraction(num, den) + Fraction(1, 2)).__floor__()


def test_draw_below_is_in_range():
    rng = random.Random(0)
    for n in (1, 2, 7, 2**40, 2**62, 2**63 + 5, 2**100):
        out = draw_below(rng, n, (200,))
        assert all(0 <= int(v) < n for v in out)


def test_draw_below_is_reproducible():
    a = draw_below(random.Random(5), 1000, (50,))
    b = draw_below(random.Random(5), 1000, (50,))
    assert np.array_equal(a, b)


def test_key_sensitivity_on_worked_sum(worked):
    pk, sk = worked
    x, y = fixtures.figure_ciphertexts(pk)
    s = blind_add(x, y)
    m = s.matrix()
    for i in range(3):
        for slot in range(3):
            if slot == sk.template[i]:
                continue
            wrong = list(sk.template)
            wrong[i] = slot
            if m[i, slot] != m[i, sk.template[i]]:
                assert decrypt_with_template(s, sk, wrong, "floor") != 146


def test_key_sensitivity_random_trials(sk):
    rng = random.Random(11)
    values = [rng.randrange(256) for _ in range(1000)]
    ct = encrypt_private(values, sk, rng)
    mismatches = 0
    for k, v in enumerate(values):
        wrong = list(sk.template)
        i = rng.randrange(sk.pk.N)
        wrong[i] = rng.choice([j for j in range(sk.m_slots) if j != sk.template[i]])
        mismatches += decrypt_with_template(ct[k], sk, wrong) != v
    assert mismatches >= 990


def test_redundancy_enumeration_finds_true_template(worked):
    _, sk = worked
    ct = encrypt_private(fixtures.X, sk, random.Random(8), eta=fixtures.ETA_X)
    hits = [t for t in itertools.product(range(3), repeat=3)
            if decrypt_with_template(ct, sk, t, "floor") == fixtures.X]
    assert sk.template in hits


def test_ciphertext_file_roundtrip(sk, worked):
    ct = encrypt_private(1234, sk, random.Random(0))
    text = serialize_ciphertext(ct)
    assert parse_ciphertext(text, sk.pk) == ct
    assert serialize_ciphertext(parse_ciphertext(text, sk.pk)) == text
    pub = encrypt_public(9, worked[0])
    assert parse_ciphertext(serialize_ciphertext(pub), worked[0]) == pub


def test_ciphertext_file_errors(sk, fast_keys):
    text = serialize_ciphertext(encrypt_private(1, sk, random.Random(0)))
    with pytest.raises(ModulusMismatchError):
        parse_ciphertext(text, fast_keys[0])
    with pytest.raises(FormatError):
        parse_ciphertext(text.replace("cmpswhe-ct", "other"), sk.pk)
    with pytest.raises(FormatError):
        parse_ciphertext("\n".join(text.splitlines()[:-1]), sk.pk)
    first_row = text.splitlines()[1]
    big = str(sk.mset.moduli[0])
    with pytest.raises(FormatError):
        parse_ciphertext(text.replace(first_row, " ".join([big] * sk.m_slots)), sk.pk)


def test_getitem_and_stack(sk):
    rng = random.Random(2)
    ct = encrypt_private([[1, 2, 3], [4, 5, 6]], sk, rng)
    assert ct.shape == (2, 3)
    assert decrypt(ct[1, 2], sk) == 6
    assert list(decrypt(ct[:, 0], sk)) == [1, 4]
    both = Ciphertext.stack([ct[0], ct[1]])
    assert both == ct
    assert list(decrypt(ct.reshape(6), sk)) == [1, 2, 3, 4, 5, 6]
