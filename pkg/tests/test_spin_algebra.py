import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from zefoz.spin_algebra import (HermiticityError, InvalidSpinError, eigensystem, fix_phases,
                                make_spin_system)


@pytest.mark.parametrize("two_i", range(1, 16))
def test_commutators_and_casimir(two_i):
    s = make_spin_system(two_i)
    assert s.dim == two_i + 1
    for a, b, c in ((s.ix, s.iy, s.iz), (s.iy, s.iz, s.ix), (s.iz, s.ix, s.iy)):
        np.testing.assert_allclose(a @ b - b @ a, 1j * c, atol=1e-12)
    for op in s.ops:
        np.testing.assert_allclose(op, op.conj().T, atol=0)
    i = two_i / 2
    cas = s.ix @ s.ix + s.iy @ s.iy + s.iz @ s.iz
    np.testing.assert_allclose(cas, i * (i + 1) * np.eye(s.dim), atol=1e-12)


def test_spin_half_is_half_pauli():
    s = make_spin_system(1)
    np.testing.assert_allclose(s.iz, np.diag([-0.5, 0.5]))
    np.testing.assert_allclose(s.ix, 0.5 * np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(s.iy, 0.5 * np.array([[0, 1j], [-1j, 0]]))


def test_spin_five_halves(spin52):
    np.testing.assert_allclose(np.diag(spin52.iz).real, np.arange(-2.5, 3.0))
    cas = sum(op @ op for op in spin52.ops)
    np.testing.assert_allclose(cas, 8.75 * np.eye(6), atol=1e-12)


@pytest.mark.parametrize("bad", [0, -1, 16])
def test_invalid_spin(bad):
    with pytest.raises(InvalidSpinError):
        make_spin_system(bad)


def test_diagonal_input():
    es = eigensystem(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(es.values, [1, 2, 3])


def test_zero_matrix_gives_identity_vectors():
    es = eigensystem(np.zeros((4, 4), dtype=complex))
    np.testing.assert_allclose(es.values, 0)
    np.testing.assert_allclose(es.vectors, np.eye(4))


def test_rejects_non_hermitian():
    h = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(HermiticityError):
        eigensystem(h)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 16), st.integers(0, 2**32 - 1))
def test_reconstruction_from_random_unitary(dim, seed):
    rng = np.random.default_rng(seed)
    v = unitary_group.rvs(dim, random_state=rng)
    lam = np.sort(rng.normal(size=dim) * 10)
    h = v @ np.diag(lam) @ v.conj().T
    es = eigensystem(h)
    np.testing.assert_allclose(es.values, lam, atol=1e-9)
    np.testing.assert_allclose(es.vectors.conj().T @ es.vectors, np.eye(dim), atol=1e-10)
    np.testing.assert_allclose(es.reconstruct(), h, atol=1e-9 * np.linalg.norm(h))


def test_phase_convention_is_deterministic():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = a + a.conj().T
    e1, e2 = eigensystem(h), eigensystem(h.copy())
    np.testing.assert_array_equal(e1.vectors, e2.vectors)
    # the largest component of every column is real and positive
    v = e1.vectors
    k = np.argmax(np.abs(v), axis=0)
    big = v[k, np.arange(6)]
    assert np.all(big.real > 0) and np.allclose(big.imag, 0)
    # a global phase on the input vectors is removed
    np.testing.assert_allclose(fix_phases(v * np.exp(0.7j)), v, atol=1e-14)


def test_conjugate_has_same_spectrum():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = a + a.conj().T
    np.testing.assert_allclose(eigensystem(h).values, eigensystem(h.conj()).values, atol=1e-12)
