import numpy as np
import pytest

from zefoz.derivatives import (DegenerateLevelError, finite_difference_gradient,
                               finite_difference_hessian, frequency_function, level_derivatives,
                               sensitivity, zeeman_gradient, zeeman_hessian)
from zefoz.hamiltonian import TransitionDescriptor
from zefoz.tensors import subsite_transform

from conftest import G_ISO, random_tensors


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


def random_instance(rng, spin52):
    t = random_tensors(rng)
    direction = rng.normal(size=3)
    b = direction / np.linalg.norm(direction) * rng.uniform(20, 1500)
    lo, hi = sorted(rng.choice(6, 2, replace=False))
    return t, b, TransitionDescriptor(int(lo), int(hi))


def test_isotropic_gradient_and_hessian(spin52, isotropic):
    tr = TransitionDescriptor(0, 1)
    b = (100.0, 0.0, 0.0)
    np.testing.assert_allclose(zeeman_gradient(spin52, isotropic, b, tr), [G_ISO, 0, 0], atol=1e-15)
    h = zeeman_hessian(spin52, isotropic, b, tr)
    np.testing.assert_allclose(h, np.diag([0, 1e-5, 1e-5]), atol=1e-15)


def test_isotropic_hessian_generic_direction(spin52, isotropic):
    b = np.array([30.0, -80.0, 55.0])
    n = b / np.linalg.norm(b)
    expect = G_ISO / np.linalg.norm(b) * (np.eye(3) - np.outer(n, n))
    h = zeeman_hessian(spin52, isotropic, b, TransitionDescriptor(2, 3))
    np.testing.assert_allclose(h, expect, atol=1e-14)


def richardson(fd, fun, b, step):
    """Central differences with one Richardson step; error O(step^4)."""
    return (4.0 * fd(fun, b, step / 2) - fd(fun, b, step)) / 3.0


def test_gradient_matches_finite_differences(spin52):
    rng = np.random.default_rng(20)
    for _ in range(200):
        t, b, tr = random_instance(rng, spin52)
        s = sensitivity(spin52, t, b, tr)
        fd = richardson(finite_difference_gradient, frequency_function(spin52, t, tr), b, 0.002)
        assert rel_err(s.gradient, fd) < 1e-7


def test_hessian_matches_finite_differences(spin52):
    rng = np.random.default_rng(21)
    for _ in range(200):
        t, b, tr = random_instance(rng, spin52)
        s = sensitivity(spin52, t, b, tr)
        fd = richardson(finite_difference_hessian, frequency_function(spin52, t, tr), b, 0.4)
        assert rel_err(s.hessian, fd) < 1e-4


def test_fixed_step_oracles_away_from_crossings(spin52, site1):
    # with the levels well separated the plain 0.01 G / 0.1 G differences suffice
    rng = np.random.default_rng(25)
    checked = 0
    for _ in range(100):
        _, b, tr = random_instance(rng, spin52)
        s = sensitivity(spin52, site1, b, tr)
        if s.min_gap < 0.5:
            continue
        f = frequency_function(spin52, site1, tr)
        assert rel_err(s.gradient, finite_difference_gradient(f, b, 0.01)) < 1e-6
        assert rel_err(s.hessian, finite_difference_hessian(f, b, 0.1)) < 1e-4
        checked += 1
    assert checked > 50


def test_hessian_matches_gradient_differences(spin52):
    rng = np.random.default_rng(22)
    for _ in range(100):
        t, b, tr = random_instance(rng, spin52)
        s = sensitivity(spin52, t, b, tr)
        if s.degeneracy_flag:
            continue
        step = 1e-3
        rows = [(zeeman_gradient(spin52, t, b + step * e, tr) - zeeman_gradient(spin52, t, b - step * e, tr))
                / (2 * step) for e in np.eye(3)]
        assert rel_err(s.hessian, np.array(rows)) < 1e-6


def test_hessian_symmetric(spin52):
    rng = np.random.default_rng(23)
    for _ in range(50):
        t, b, tr = random_instance(rng, spin52)
        h = zeeman_hessian(spin52, t, b, tr)
        assert np.max(np.abs(h - h.T)) <= 1e-10 * np.max(np.abs(h))


def test_level_gradient_sum_rule(spin52):
    rng = np.random.default_rng(24)
    fields = rng.uniform(-1500, 1500, (300, 3))
    ld = level_derivatives(spin52, random_tensors(rng), fields)
    assert np.max(np.abs(ld.gradients.sum(axis=1))) < 1e-10


def test_transition_gradient_is_level_difference(spin52, site1):
    b = np.array([210.0, -460.0, 90.0])
    ld = level_derivatives(spin52, site1, b)
    for lo in range(6):
        for hi in range(lo + 1, 6):
            g = zeeman_gradient(spin52, site1, b, TransitionDescriptor(lo, hi))
            np.testing.assert_allclose(g, ld.gradients[0, hi] - ld.gradients[0, lo], atol=1e-15)
            level_fd = [finite_difference_gradient(lambda x, k=k: np.linalg.eigvalsh(
                __import__("zefoz").build_hamiltonian(spin52, site1, x))[k], b) for k in (lo, hi)]
            np.testing.assert_allclose(ld.gradients[0, lo], level_fd[0], rtol=1e-6, atol=1e-11)
            np.testing.assert_allclose(ld.gradients[0, hi], level_fd[1], rtol=1e-6, atol=1e-11)


def test_degenerate_level_raises_at_zero_field(spin52, site1):
    with pytest.raises(DegenerateLevelError, match="finite-difference"):
        zeeman_gradient(spin52, site1, (0, 0, 0), TransitionDescriptor(1, 2))


def test_sensitivity_at_zero_field_falls_back(spin52, site1):
    s = sensitivity(spin52, site1, (0, 0, 0), TransitionDescriptor(1, 2))
    assert s.degeneracy_flag and s.fallback_used
    assert s.gradient_norm < 1e-9  # f is even in B
    assert np.all(np.isfinite(s.hessian))


@pytest.mark.parametrize("pair", [(0, 2), (1, 2), (1, 3), (2, 4), (3, 5), (0, 5)])
def test_flag_near_zero_field(spin52, site1, pair):
    s = sensitivity(spin52, site1, (0, 0, 0.01), TransitionDescriptor(*pair))
    assert s.degeneracy_flag


def test_no_flag_at_moderate_field(spin52, site1):
    s = sensitivity(spin52, site1, (300, 200, -100), TransitionDescriptor(1, 2))
    assert not s.degeneracy_flag and not s.fallback_used


def test_fallback_hessian_when_neighbour_is_close(spin52, site1):
    # a floor above the doublet splitting forces the finite-difference branch
    b = np.array([0.0, 0.0, 20.0])  # doublet split by about 0.19 MHz
    tr = TransitionDescriptor(1, 2)
    h, used = zeeman_hessian(spin52, site1, b, tr, gap_floor=0.5, fd_step=0.1, return_flag=True)
    assert used
    analytic = zeeman_hessian(spin52, site1, b, tr, gap_floor=1e-9)
    assert rel_err(h, analytic) < 1e-2


def test_sensitivity_reports_frequency(spin52, site1):
    b = (500.0, -100.0, 250.0)
    s = sensitivity(spin52, site1, b, TransitionDescriptor(2, 4))
    assert s.frequency == pytest.approx(frequency_function(spin52, site1, TransitionDescriptor(2, 4))(b))
    np.testing.assert_allclose(s.hessian_axes.T @ s.hessian_axes, np.eye(3), atol=1e-12)


def test_site_b_is_mirror_of_site_a(spin52, site1):
    b = np.array([640.0, 300.0, -270.0])
    c = np.diag([-1.0, 1.0, -1.0])
    tr = TransitionDescriptor(1, 2)
    sa = sensitivity(spin52, site1, c @ b, tr)
    sb = sensitivity(spin52, subsite_transform(site1), b, tr)
    np.testing.assert_allclose(sb.gradient, c @ sa.gradient, atol=1e-12)
    np.testing.assert_allclose(sb.hessian_eigenvalues, sa.hessian_eigenvalues, atol=1e-12)
