import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from certdel import qudit
from certdel.errors import BudgetExceeded, DimensionError
from certdel.qudit import DensityOp, RegisterLayout, SparseState

import oracles


def _layout(q, w, name="X"):
    return RegisterLayout.single(q, name, w)


def _random_state(rng, q, w, name="X"):
    lay = _layout(q, w, name)
    v = rng.normal(size=lay.dim) + 1j * rng.normal(size=lay.dim)
    return SparseState.from_dense(lay, v / np.linalg.norm(v))


# -- Fourier transform examples ----------------------------------------------


def test_qft_of_zero_is_uniform():
    for q, m in [(2, 1), (3, 1), (5, 2)]:
        st0 = SparseState.zero(_layout(q, m))
        out = qudit.qft(st0, "X")
        assert len(out) == q**m
        assert np.allclose(np.abs(out.amps), q ** (-m / 2))


def test_qft_of_one_has_root_of_unity_phases():
    q = 5
    st1 = SparseState.basis(_layout(q, 1), {"X": [1]})
    got = qudit.qft(st1, "X").to_dict()
    for y in oracles.residues(q):
        assert got[(y,)] == pytest.approx(oracles.omega(y, q) / math.sqrt(q))


@pytest.mark.parametrize("q,m", [(2, 1), (3, 1), (3, 2), (5, 1), (5, 2)])
def test_qft_matrix_matches_oracle(q, m):
    F = qudit.qft_matrix(q, m)
    assert np.allclose(F, np.array(oracles.dft_matrix(q, m)))
    assert np.allclose(F @ F.conj().T, np.eye(q**m))


@pytest.mark.parametrize("q,m", [(3, 1), (5, 2), (7, 1)])
def test_sparse_qft_agrees_with_dense_matrix(q, m, rng):
    s = _random_state(rng, q, m)
    F = qudit.qft_matrix(q, m)
    assert np.allclose(qudit.qft(s, "X").to_dense(), F @ s.to_dense())
    assert np.allclose(qudit.inverse_qft(s, "X").to_dense(), F.conj().T @ s.to_dense())


@given(st.sampled_from([2, 3, 5, 7]), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_qft_roundtrip_and_norm(q, m, seed):
    s = _random_state(np.random.default_rng(seed), q, m)
    f = qudit.qft(s, "X")
    assert f.norm() == pytest.approx(1.0)
    back = qudit.inverse_qft(f, "X")
    assert np.allclose(back.to_dense(), s.to_dense(), atol=1e-12)


def test_qft_acts_on_one_register_only(rng):
    q = 3
    a = _random_state(rng, q, 1, "A")
    b = _random_state(rng, q, 2, "B")
    joint = qudit.tensor(a, b)
    got = qudit.qft(joint, "B").to_dense()
    want = np.kron(a.to_dense(), qudit.qft_matrix(q, 2) @ b.to_dense())
    assert np.allclose(got, want)


def test_qft_budget_enforced():
    s = SparseState.zero(_layout(7, 3))
    with pytest.raises(BudgetExceeded):
        qudit.qft(s, "X", budget=100)


# -- Paulis --------------------------------------------------------------------


@pytest.mark.parametrize("q,b", [(3, (1,)), (5, (2,)), (3, (1, -1)), (5, (0, 2))])
def test_pauli_matrices_match_oracle(q, b):
    assert np.allclose(qudit.pauli_x_matrix(q, b), np.array(oracles.shift_matrix(q, b)))
    assert np.allclose(qudit.pauli_z_matrix(q, b), np.array(oracles.phase_matrix(q, b)))


@pytest.mark.parametrize("q,b", [(2, (1,)), (3, (1,)), (5, (2,)), (3, (1, -1)), (5, (2, 1))])
def test_fourier_conjugates_x_to_z(q, b):
    F = np.array(oracles.dft_matrix(q, len(b)))
    X = np.array(oracles.shift_matrix(q, b))
    Z = np.array(oracles.phase_matrix(q, b))
    assert np.allclose(F @ X @ F.conj().T, Z)
    assert np.allclose(F.conj().T @ Z @ F, X)


def test_sparse_paulis_match_matrices(rng):
    q = 5
    s = _random_state(rng, q, 2)
    b = np.array([2, -1])
    assert np.allclose(qudit.pauli_x(s, "X", b).to_dense(), qudit.pauli_x_matrix(q, b) @ s.to_dense())
    assert np.allclose(qudit.pauli_z(s, "X", b).to_dense(), qudit.pauli_z_matrix(q, b) @ s.to_dense())


def test_pauli_x_wraps_around():
    s = SparseState.basis(_layout(5, 1), {"X": [2]})
    assert qudit.pauli_x(s, "X", [1]).to_dict() == {(-2,): pytest.approx(1)}


def test_pauli_length_mismatch():
    s = SparseState.zero(_layout(3, 2))
    with pytest.raises(DimensionError):
        qudit.pauli_x(s, "X", [1])


def test_permute_labels_rejects_non_injective():
    s = SparseState.from_dense(_layout(3, 1), np.ones(3) / math.sqrt(3))
    with pytest.raises(ValueError):
        qudit.permute_labels(s, lambda L: L * 0)


# -- measurement -----------------------------------------------------------------


def test_born_rule_frequencies():
    q = 3
    amps = np.array([math.sqrt(0.2), math.sqrt(0.5), math.sqrt(0.3)])
    s = SparseState.from_dense(_layout(q, 1), amps)
    rng = np.random.default_rng(7)
    counts = {}
    n = 20000
    for _ in range(n):
        out, post = qudit.measure_computational(s, "X", rng)
        counts[int(out[0])] = counts.get(int(out[0]), 0) + 1
        assert len(post) == 1 and post.norm() == pytest.approx(1)
    for lab, p in zip(oracles.residues(q), [0.2, 0.5, 0.3]):
        assert abs(counts[lab] / n - p) < 0.015


def test_measure_partial_register_collapses_partner(rng):
    q = 3
    lay = RegisterLayout(q, (("A", 1), ("B", 1)))
    bell = SparseState.from_dict(lay, {(x, x): 1 / math.sqrt(3) for x in oracles.residues(q)})
    out, post = qudit.measure_computational(bell, "A", rng)
    assert np.array_equal(post.register("B")[0], out)


def test_fourier_distribution_matches_oracle(rng):
    q, m = 5, 2
    s = _random_state(rng, q, m)
    got = qudit.fourier_distribution(s, "X")
    amps = {k: complex(v) for k, v in s.to_dict().items()}
    want = oracles.fourier_probs(amps, q, m)
    assert oracles.tv(got, want) < 1e-12


def test_fourier_distribution_is_shift_invariant(rng):
    q, m = 5, 2
    s = _random_state(rng, q, m)
    base = qudit.fourier_distribution(s, "X")
    shifted = qudit.fourier_distribution(qudit.pauli_x(s, "X", [1, 3]), "X")
    assert oracles.tv(base, shifted) < 1e-12


def test_measure_fourier_outcome_is_in_support(rng):
    q = 5
    s = _random_state(rng, q, 1)
    dist = qudit.fourier_distribution(s, "X")
    for _ in range(20):
        w, post = qudit.measure_fourier(s, "X", rng)
        assert dist[tuple(int(v) for v in w)] > 0
        assert post.norm() == pytest.approx(1)
        # post-state is a Fourier basis vector: its transform is a point mass at w
        f = qudit.qft(post, "X").to_dict()
        assert abs(f[tuple(int(v) for v in w)]) == pytest.approx(1)


def test_project_is_unnormalised():
    s = SparseState.from_dense(_layout(3, 1), np.ones(3) / math.sqrt(3))
    p = qudit.project(s, "X", lambda v: v[:, 0] >= 0)
    assert p.norm() ** 2 == pytest.approx(2 / 3)


# -- distances ----------------------------------------------------------------------


def test_pure_trace_distance_matches_dense(rng):
    q = 3
    a = _random_state(rng, q, 2)
    b = _random_state(rng, q, 2)
    got = qudit.trace_distance(a, b)
    da, db = DensityOp.from_state(a), DensityOp.from_state(b)
    ev = np.linalg.eigvalsh(da.matrix - db.matrix)
    assert got == pytest.approx(0.5 * np.abs(ev).sum(), abs=1e-10)
    assert qudit.trace_distance(a, da) == pytest.approx(0.0, abs=1e-7)


def test_ensemble_trace_distance_matches_dense(rng):
    q = 3
    ens_a = [_random_state(rng, q, 1).scaled(math.sqrt(w)) for w in (0.3, 0.7)]
    ens_b = [_random_state(rng, q, 1).scaled(math.sqrt(w)) for w in (0.5, 0.5)]
    ra = sum(np.outer(v.to_dense(), v.to_dense().conj()) for v in ens_a)
    rb = sum(np.outer(v.to_dense(), v.to_dense().conj()) for v in ens_b)
    want = 0.5 * np.abs(np.linalg.eigvalsh(ra - rb)).sum()
    assert qudit.ensemble_trace_distance(ens_a, ens_b) == pytest.approx(want, abs=1e-10)


def test_inner_layout_mismatch():
    with pytest.raises(DimensionError):
        qudit.inner(SparseState.zero(_layout(3, 1)), SparseState.zero(_layout(3, 1, "Y")))


# -- density operators and dephasing ---------------------------------------------------


def test_uniform_dephasing_equals_full_twirl(rng):
    q = 3
    rho = DensityOp.from_state(_random_state(rng, q, 2))
    weights = {z: 1 / q**2 for z in oracles.vectors(q, 2)}
    a = qudit.dephase_uniform(rho, "X")
    b = qudit.twirl_explicit(rho, "X", weights)
    assert np.allclose(a.matrix, b.matrix)
    assert a.max_offdiag() < 1e-12


def test_characteristic_matches_explicit_twirl(rng):
    q = 5
    rho = DensityOp.from_state(_random_state(rng, q, 1))
    w = rng.random(q)
    weights = {(z,): float(p) for z, p in zip(oracles.residues(q), w / w.sum())}
    a = qudit.dephase_characteristic(rho, "X", weights)
    b = qudit.twirl_explicit(rho, "X", weights)
    assert np.allclose(a.matrix, b.matrix)
    assert a.is_valid()


def test_dephasing_on_one_register_of_two(rng):
    q = 3
    lay = RegisterLayout(q, (("A", 1), ("B", 1)))
    v = rng.normal(size=9) + 1j * rng.normal(size=9)
    rho = DensityOp.from_state(SparseState.from_dense(lay, v / np.linalg.norm(v)))
    out = qudit.dephase_uniform(rho, "A")
    labels = out.basis_labels()
    for i in range(9):
        for j in range(9):
            if labels[i, 0] != labels[j, 0]:
                assert abs(out.matrix[i, j]) < 1e-12
            else:
                assert out.matrix[i, j] == pytest.approx(rho.matrix[i, j])


def test_lwe_phase_distribution_normalised_and_full_rank_uniformity():
    q = 5
    A = np.array([[1, 2]])
    dist = qudit.lwe_phase_distribution(A, 0.05, q)
    assert sum(dist.values()) == pytest.approx(1.0)
    # with tiny error width the support is the row space of A (plus small errors)
    assert max(dist.values()) <= 1.0


def test_dephase_lwe_is_cptp_and_mixes_with_wide_error(rng):
    q = 3
    A = np.array([[1, 1]])
    rho = DensityOp.from_state(_random_state(rng, q, 2))
    narrow = qudit.dephase_lwe(rho, A, 0.01)
    assert narrow.is_valid()
    # a wide error makes z close to uniform, which kills every coherence
    wide = qudit.dephase_lwe(rho, A, 10.0)
    assert wide.is_valid()
    assert wide.max_offdiag() < 0.05


def test_reduced_density_of_product(rng):
    q = 3
    a = _random_state(rng, q, 1, "A")
    b = _random_state(rng, q, 1, "B")
    red = qudit.reduced_density(qudit.tensor(a, b), ["A"])
    v = a.to_dense()
    assert np.allclose(red, np.outer(v, v.conj()))


def test_density_budget():
    with pytest.raises(BudgetExceeded):
        DensityOp.maximally_mixed(_layout(7, 5))


def test_maximally_mixed_is_valid():
    assert DensityOp.maximally_mixed(_layout(3, 2)).is_valid()


# -- registers and snapshots -------------------------------------------------------------


def test_add_and_drop_register(rng):
    s = _random_state(rng, 3, 1)
    t = qudit.add_register(s, "Y", 2)
    assert t.layout.names == ["X", "Y"]
    back = qudit.drop_register(t, "Y")
    assert np.allclose(back.to_dense(), s.to_dense())


def test_drop_entangled_register_fails():
    lay = RegisterLayout(3, (("A", 1), ("B", 1)))
    bell = SparseState.from_dict(lay, {(0, 0): 1, (1, 1): 1})
    with pytest.raises(ValueError):
        qudit.drop_register(bell, "B")


def test_snapshot_roundtrip_exact(rng):
    lay = RegisterLayout(5, (("A", 1), ("B", 2)))
    v = rng.normal(size=lay.dim) + 1j * rng.normal(size=lay.dim)
    s = SparseState.from_dense(lay, v / np.linalg.norm(v))
    text = qudit.to_snapshot(s)
    back = qudit.from_snapshot(text)
    assert back.layout == s.layout
    assert np.array_equal(back.labels, s.labels)
    assert np.array_equal(back.amps, s.amps)
    assert qudit.to_snapshot(back) == text


def test_snapshot_rejects_garbage():
    with pytest.raises(ValueError):
        qudit.from_snapshot("hello\n")


def test_state_is_immutable():
    s = SparseState.zero(_layout(3, 1))
    with pytest.raises(AttributeError):
        s.amps = None
