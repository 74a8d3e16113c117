import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qres.errors import DimensionError, DomainError
from qres.operators import (HermitianOperator, choi_teleportation, heisenberg_weyl, hw_bell_povm, identity,
                            kron, linear_map_apply, max_entangled, partial_trace, partial_transpose,
                            permute_systems, transpose_trick, transpose_trick_direct)
from qres.sampling import random_hermitian, random_povm, random_state

from helpers import bipartite_identity_deviation

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
seeds = st.integers(0, 2**32 - 1)


def ket(i, d):
    v = np.zeros(d)
    v[i] = 1
    return v


class TestKron:
    def test_identities(self):
        out = kron(identity(2), identity(2))
        assert out.dims == (2, 2)
        assert np.array_equal(out.matrix, np.eye(4))

    def test_spectrum_with_identity(self):
        ev = np.sort(np.linalg.eigvalsh(kron(Z, np.eye(2))))
        assert np.allclose(ev, [-1, -1, 1, 1])

    def test_basis_projectors(self):
        p0, p1 = np.diag([1.0, 0]), np.diag([0, 1.0])
        v = np.kron(ket(0, 2), ket(1, 2))
        assert np.array_equal(kron(p0, p1), np.outer(v, v))


class TestPartialTrace:
    def test_product_state(self, rng):
        rho, sig = random_state(2, rng), random_state(3, rng)
        assert np.allclose(partial_trace(np.kron(rho, 2 * sig), [1], (2, 3)), 2 * rho, atol=1e-13)

    def test_phi_plus_marginal(self):
        out = partial_trace(max_entangled(2), [0])
        assert out.dims == (2,)
        assert np.allclose(out.matrix, np.eye(2) / 2)

    def test_full_trace_is_scalar_one(self, rng):
        out = partial_trace(random_state(6, rng), [0, 1], (2, 3))
        assert out.shape == (1, 1) and abs(out[0, 0] - 1) < 1e-12

    def test_keeps_order_of_remaining_systems(self, rng):
        a, b, c = random_state(2, rng), random_state(3, rng), random_state(2, rng)
        out = partial_trace(np.kron(np.kron(a, b), c), [1], (2, 3, 2))
        assert np.allclose(out, np.kron(a, c))

    @pytest.mark.parametrize("over", [[2], [-1], []])
    def test_bad_index(self, over):
        with pytest.raises(IndexError):
            partial_trace(np.eye(4), over, (2, 2))

    def test_dims_mismatch(self):
        with pytest.raises(DimensionError):
            partial_trace(np.eye(4), [0], (2, 3))


class TestPartialTranspose:
    def test_product(self, rng):
        rho, sig = random_state(2, rng), random_state(2, rng)
        assert np.allclose(partial_transpose(np.kron(rho, sig), 1, (2, 2)), np.kron(rho, sig.T))

    def test_phi_plus_min_eig(self):
        pt = partial_transpose(max_entangled(2), 1)
        assert abs(np.linalg.eigvalsh(pt.matrix)[0] + 0.5) < 1e-14

    def test_full_transpose_is_composition(self, rng):
        m = random_hermitian(6, rng)
        assert np.array_equal(partial_transpose(m, [0, 1], (2, 3)), m.T)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            partial_transpose(np.eye(4), 2, (2, 2))

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_involution(self, seed):
        m = random_hermitian(6, np.random.default_rng(seed))
        twice = partial_transpose(partial_transpose(m, 0, (2, 3)), 0, (2, 3))
        assert np.array_equal(twice, m)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_commutes_with_trace_on_other_system(self, seed):
        m = random_hermitian(12, np.random.default_rng(seed))
        dims = (2, 3, 2)
        a = partial_trace(partial_transpose(m, 0, dims), [2], dims)
        b = partial_transpose(partial_trace(m, [2], dims), 0, (2, 3))
        assert np.allclose(a, b, atol=1e-13)


def test_permute_systems_swaps_factors(rng):
    a, b = random_state(2, rng), random_state(3, rng)
    out = permute_systems(np.kron(a, b), [1, 0], (2, 3))
    assert np.allclose(out, np.kron(b, a))


class TestMaxEntangled:
    def test_qubit_entries(self):
        m = max_entangled(2).matrix
        expected = np.zeros((4, 4))
        for i in (0, 3):
            for j in (0, 3):
                expected[i, j] = 0.5
        assert np.abs(m - expected).max() <= 1e-15

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_pure_with_mixed_marginals(self, d):
        m = max_entangled(d)
        assert abs(np.trace(m.matrix @ m.matrix) - 1) < 1e-13
        assert np.allclose(partial_trace(m, [1]).matrix, np.eye(d) / d)

    @pytest.mark.parametrize("d", [0, 1])
    def test_domain(self, d):
        with pytest.raises(DomainError):
            max_entangled(d)


class TestTransposeTrick:
    def test_off_diagonal(self):
        o = np.outer(ket(0, 2), ket(1, 2))
        assert np.array_equal(transpose_trick(o, 2), np.outer(ket(1, 2), ket(0, 2)) / 2)

    @pytest.mark.parametrize("d", [2, 3])
    def test_identity(self, d):
        assert np.allclose(transpose_trick(np.eye(d), d), np.eye(d) / d)

    def test_operator_in_operator_out(self, rng):
        o = HermitianOperator(random_hermitian(3, rng))
        assert isinstance(transpose_trick(o, 3), HermitianOperator)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            transpose_trick(HermitianOperator(np.eye(2)), 3)

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(2, 4))
    def test_matches_partial_trace(self, seed, d):
        o = random_hermitian(d, np.random.default_rng(seed))
        assert np.abs(transpose_trick(o, d) - transpose_trick_direct(o, d)).max() <= 1e-12


class TestHeisenbergWeyl:
    def test_qubit_set(self):
        us = heisenberg_weyl(2)
        for u, ref in zip(us, [np.eye(2), Z, X, X @ Z]):
            assert np.allclose(u, ref)

    def test_orthogonal_basis_d3(self):
        us = heisenberg_weyl(3)
        gram = np.array([[np.trace(u.conj().T @ v) for v in us] for u in us])
        assert np.abs(gram - 3 * np.eye(9)).max() < 1e-12

    @pytest.mark.parametrize("d", [2, 3])
    def test_twirl(self, d, rng):
        rho = 2.5 * random_state(d, rng)
        tw = sum(u @ rho @ u.conj().T for u in heisenberg_weyl(d))
        assert np.allclose(tw, d * np.trace(rho) * np.eye(d))

    def test_domain(self):
        with pytest.raises(DomainError):
            heisenberg_weyl(1)

    def test_bell_povm_complete(self):
        els = hw_bell_povm(3)
        assert len(els) == 9
        assert np.allclose(sum(e.matrix for e in els), np.eye(9))


class TestChoi:
    def test_trivial_povm(self, rng):
        rho = random_state(4, rng)
        (J,) = choi_teleportation([np.eye(4)], rho, dims_ma=(2, 2), dims_rho=(2, 2))
        assert np.allclose(J.matrix, np.kron(np.eye(2) / 2, partial_trace(rho, [0], (2, 2))))

    def test_product_state_factorises(self, rng):
        ra, rb = random_state(2, rng), random_state(2, rng)
        Ma = random_povm(4, 3, rng)
        for J, m in zip(choi_teleportation(Ma, np.kron(ra, rb), (2, 2), (2, 2)), Ma):
            # tr_{VA}[(1 (x) M (x) 1)(phi+ (x) ra (x) rb)] = (1/d) tr_A[M (1 (x) ra)]^T (x) rb
            x = partial_trace(m @ np.kron(np.eye(2), ra), [1], (2, 2)).T / 2
            assert np.allclose(J.matrix, np.kron(x, rb), atol=1e-13)

    def test_bell_measurement_on_phi_plus(self):
        Ma = [e.matrix for e in hw_bell_povm(2)]
        for J, u in zip(choi_teleportation(Ma, max_entangled(2).matrix, (2, 2), (2, 2)), heisenberg_weyl(2)):
            # teleportation with correction u: the Choi state is the rotated phi+, weighted 1/4
            k = np.kron(np.eye(2), u.conj())
            assert np.allclose(J.matrix, k @ max_entangled(2).matrix @ k.conj().T / 4, atol=1e-13)

    def test_marginal(self, rng):
        rho = random_state(6, rng)
        J = choi_teleportation(random_povm(4, 3, rng), rho, (2, 2), (2, 3))
        ref = np.kron(np.eye(2) / 2, partial_trace(rho, [0], (2, 3)))
        assert np.abs(sum(j.matrix for j in J) - ref).max() < 1e-10
        assert min(j.min_eig() for j in J) > -1e-10

    def test_bad_dims(self, rng):
        with pytest.raises(DimensionError):
            choi_teleportation(random_povm(4, 2, rng), random_state(6, rng), (2, 2), (3, 2))


class TestLinearMap:
    def test_identity_element(self, rng):
        J = random_hermitian(4, rng)
        out = linear_map_apply(J, np.eye(4), (2, 2), (2, 2))
        assert np.allclose(out, np.kron(partial_trace(J, [1], (2, 2)), np.eye(2)))

    def test_product(self, rng):
        s, r = random_state(2, rng), random_state(2, rng)
        mb = random_povm(4, 2, rng)[0]
        out = linear_map_apply(np.kron(s, r), mb, (2, 2), (2, 2))
        assert np.allclose(out, np.kron(s, partial_trace(mb @ np.kron(r, np.eye(2)), [0], (2, 2))))

    def test_linearity(self, rng):
        j1, j2, mb = random_hermitian(4, rng), random_hermitian(4, rng), random_hermitian(4, rng)
        lhs = linear_map_apply(j1 + j2, mb, (2, 2), (2, 2))
        rhs = linear_map_apply(j1, mb, (2, 2), (2, 2)) + linear_map_apply(j2, mb, (2, 2), (2, 2))
        assert np.abs(lhs - rhs).max() <= 1e-12

    def test_positive_inputs_give_positive_output(self, rng):
        out = linear_map_apply(random_state(4, rng), random_povm(4, 2, rng)[1], (2, 2), (2, 2))
        assert np.linalg.eigvalsh((out + out.conj().T) / 2)[0] > -1e-12

    def test_dims(self):
        with pytest.raises(DimensionError):
            linear_map_apply(np.eye(4), np.eye(6), (2, 2), (3, 2))


class TestHermitianOperator:
    def test_symmetrises_and_warns(self):
        with pytest.warns(UserWarning):
            h = HermitianOperator(np.array([[1, 1e-6], [0, 1]]))
        assert np.allclose(h.matrix, h.matrix.conj().T)

    def test_dims_must_match(self):
        with pytest.raises(DimensionError):
            HermitianOperator(np.eye(4), (2, 3))


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([2, 3]))
def test_bipartite_trace_identity(seed, d):
    assert bipartite_identity_deviation(np.random.default_rng(seed), d) <= 1e-10
