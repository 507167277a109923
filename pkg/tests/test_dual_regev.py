import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from certdel import dual_regev as dr
from certdel import modq
from certdel.errors import ParameterError

import oracles

SANDBOX = dr.PkeParams(1, 29, 2, 1 / 8, mode="sandbox")
STRICT = dr.PkeParams(2, 521, 40, math.sqrt(8 * 41) / 521)


@pytest.fixture(scope="module")
def keys():
    return dr.keygen(SANDBOX, np.random.default_rng(11))


# -- parameters ------------------------------------------------------------------


def test_strict_window_enforced():
    with pytest.raises(ParameterError):
        dr.PkeParams(1, 29, 2, 1 / 8)
    assert STRICT.window_violations() == []


def test_sandbox_reports_but_allows_violations():
    assert SANDBOX.window_violations()


def test_norm_bound():
    assert SANDBOX.norm_bound == pytest.approx(math.sqrt(3) * 8 / math.sqrt(2))


@pytest.mark.parametrize("bad", [dict(n=0), dict(alpha=0.0), dict(mode="fast")])
def test_invalid_params(bad):
    kw = dict(n=1, q=29, m=2, alpha=1 / 8, mode="sandbox")
    kw.update(bad)
    with pytest.raises(ParameterError):
        dr.PkeParams(**kw)


# -- keys -------------------------------------------------------------------------


def test_trapdoor_annihilates_public_key(keys):
    assert np.all(modq.mat_vec(keys.pk, keys.sk, SANDBOX.q) == 0)
    assert keys.sk[-1] == 1
    assert set(np.unique(keys.x_bar)) <= {0, 1}


def test_last_column_is_subset_sum(keys):
    A = keys.pk
    col = oracles.matvec(A[:, :-1].tolist(), keys.x_bar.tolist(), SANDBOX.q)
    assert tuple(A[:, -1]) == col


def test_keygen_full_rank_and_seeded():
    a = dr.keygen(STRICT, np.random.default_rng(4))
    b = dr.keygen(STRICT, np.random.default_rng(4))
    assert np.array_equal(a.pk, b.pk)
    assert modq.generates_full_group(a.pk, STRICT.q)


# -- decoding ---------------------------------------------------------------------


@pytest.mark.parametrize("q", [2, 3, 5, 29, 521])
def test_decode_bit_matches_circular_rule(q):
    half = q // 2
    for v in range(q):
        d0 = min(v, q - v)
        d1 = min((v - half) % q, (half - v) % q)
        assert dr.decode_bit(v, q) == (0 if d0 < d1 else 1)


def test_decode_ties_go_to_one():
    # at q = 4, v = 1 is equidistant from 0 and 2
    assert dr.decode_bit(1, 4) == 1
    assert dr.decode_bit(0, 4) == 0


# -- quantum scheme ---------------------------------------------------------------------


@pytest.mark.parametrize("b", [0, 1])
def test_decrypt_distribution_is_nearly_deterministic(keys, b):
    rng = np.random.default_rng(b)
    _, ct = dr.encrypt(keys.pk, b, SANDBOX, rng)
    dist = dr.decrypt_distribution(keys.sk, ct)
    assert dist[b] > 0.99


def test_quantum_roundtrip(keys):
    rng = np.random.default_rng(2)
    ok = 0
    for i in range(40):
        b = i % 2
        _, ct = dr.encrypt(keys.pk, b, SANDBOX, rng)
        ok += dr.decrypt(keys.sk, ct, rng) == b
    assert ok >= 39


def test_certificates_verify(keys):
    rng = np.random.default_rng(3)
    acc = 0
    for i in range(30):
        vk, ct = dr.encrypt(keys.pk, i % 2, SANDBOX, rng)
        acc += dr.verify(vk, dr.delete(ct, rng))
    assert acc >= 29


def test_certificate_law_independent_of_plaintext(keys):
    vk0, ct0 = dr.encrypt(keys.pk, 0, SANDBOX, np.random.default_rng(9))
    vk1, ct1 = dr.encrypt(keys.pk, 1, SANDBOX, np.random.default_rng(9))
    assert np.array_equal(vk0.y, vk1.y)
    d0 = dr.certificate_distribution(ct0)
    d1 = dr.certificate_distribution(ct1)
    assert oracles.tv(d0, d1) <= 1e-9


def test_certificate_support_solves_syndrome(keys):
    vk, ct = dr.encrypt(keys.pk, 1, SANDBOX, np.random.default_rng(1))
    for pi, p in dr.certificate_distribution(ct).items():
        if p > 1e-6:
            assert np.array_equal(modq.mat_vec(vk.A, pi, SANDBOX.q), modq.centered(vk.y, SANDBOX.q))


def test_acceptance_probability(keys):
    vk, ct = dr.encrypt(keys.pk, 0, SANDBOX, np.random.default_rng(8))
    assert dr.verify_acceptance_probability(vk, ct) > 0.99


def test_verify_rejects_wrong_syndrome_and_long(keys):
    vk, ct = dr.encrypt(keys.pk, 0, SANDBOX, np.random.default_rng(5))
    pi = dr.delete(ct, np.random.default_rng(5)).pi
    assert dr.verify(vk, pi)
    wrong = pi.copy()
    # shifting by a kernel-free unit vector changes A pi unless that column is zero
    j = int(np.flatnonzero(np.any(vk.A % SANDBOX.q != 0, axis=0))[0])
    wrong[j] += 1
    assert not dr.verify(vk, wrong)
    # sk spans a kernel direction, so pi + k sk has the right syndrome but is long
    longs = [modq.centered(pi + k * keys.sk, SANDBOX.q) for k in range(1, SANDBOX.q)]
    longs = [v for v in longs if np.linalg.norm(v) > SANDBOX.norm_bound]
    assert longs
    assert not any(dr.verify(vk, v) for v in longs)
    assert not dr.verify(vk, pi[:-1])


def test_verify_accepts_reduced_representatives(keys):
    vk, ct = dr.encrypt(keys.pk, 0, SANDBOX, np.random.default_rng(5))
    pi = dr.delete(ct, np.random.default_rng(5)).pi
    assert dr.verify(vk, pi + SANDBOX.q)


def test_encrypt_rejects_non_bits(keys):
    with pytest.raises(ValueError):
        dr.encrypt(keys.pk, 2, SANDBOX, np.random.default_rng(0))


# -- classical twin --------------------------------------------------------------------------


def test_classical_zero_noise_form():
    kp = dr.keygen(STRICT, np.random.default_rng(0))
    for b in (0, 1):
        c = dr.classical_encrypt(kp.pk, b, STRICT, np.random.default_rng(1), zero_noise=True)
        assert int(modq.matmul_mod(c, kp.sk, STRICT.q)) == modq.centered(b * (STRICT.q // 2), STRICT.q)


def test_classical_strict_correctness():
    kp = dr.keygen(STRICT, np.random.default_rng(1))
    rng = np.random.default_rng(2)
    errs = 0
    for i in range(400):
        b = i % 2
        errs += dr.classical_decrypt(kp.sk, dr.classical_encrypt(kp.pk, b, STRICT, rng), STRICT.q) != b
    assert errs == 0


@given(st.integers(0, 2**31), st.integers(0, 1))
def test_classical_roundtrip_property(seed, b):
    rng = np.random.default_rng(seed)
    kp = dr.keygen(STRICT, rng)
    c = dr.classical_encrypt(kp.pk, b, STRICT, rng)
    assert dr.classical_decrypt(kp.sk, c, STRICT.q) == b


# -- serialisation ------------------------------------------------------------------------------


def test_keypair_json_roundtrip(keys):
    back = dr.keypair_from_json(dr.keypair_to_json(keys))
    assert np.array_equal(back.pk, keys.pk) and np.array_equal(back.sk, keys.sk)
    assert back.params == SANDBOX


def test_vk_and_certificate_json_roundtrip(keys):
    vk, ct = dr.encrypt(keys.pk, 0, SANDBOX, np.random.default_rng(5))
    cert = dr.delete(ct, np.random.default_rng(5))
    vk2 = dr.vk_from_json(dr.vk_to_json(vk))
    cert2 = dr.certificate_from_json(dr.certificate_to_json(cert, SANDBOX))
    assert dr.verify(vk2, cert2)
