import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import eigsh

from beamlab.errors import ValidityWindowError
from beamlab.model import CutoffSpec, PotentialSpec, build_grid, sample_potential
from beamlab.spectral import (build_hamiltonian, detect_bound_states, eigendecompose, pac_projector,
                              propagate_spectral, validity_window)


def _spectrum(family, params, L, n, m=0.0):
    g = build_grid(L, n)
    s = sample_potential(PotentialSpec(family, params), g)
    return g, eigendecompose(build_hamiltonian(g, s, m))


def _fd_lowest(a, L=20.0, n=4000):
    """Clamped second-difference squared: an independent discretisation of d^4 + V."""
    x = np.linspace(-L, L, n)
    h = x[1] - x[0]
    D2 = sparse.diags([1, -2, 1], [-1, 0, 1], shape=(n, n)) / h**2
    H = (D2 @ D2 + sparse.diags(a / np.cosh(x) ** 2)).tocsc()
    return eigsh(H, k=1, sigma=-50, which="LM")[0][0]


def test_free_spectrum_is_k4():
    g, sd = _spectrum("zero", {}, 10.0, 64)
    np.testing.assert_allclose(np.sort(sd.eigenvalues), np.sort(g.k**4), rtol=1e-10, atol=1e-10)


def test_operator_is_symmetric():
    g = build_grid(10.0, 128)
    s = sample_potential(PotentialSpec("scaled_sech2", {"a": -2.0}), g)
    H = build_hamiltonian(g, s).matrix
    np.testing.assert_array_equal(H, H.T)


def test_mass_enters_only_through_the_time_profile():
    g = build_grid(10.0, 128)
    s = sample_potential(PotentialSpec("zero"), g)
    op = build_hamiltonian(g, s, m=2.0)
    assert op.m == 2.0
    sd = eigendecompose(op)
    np.testing.assert_allclose(np.sort(sd.eigenvalues), np.sort(g.k**4), atol=1e-10)
    # cos(t sqrt(mu + m^2)) on the constant mode
    K = propagate_spectral(sd, 0.7, m=2.0).values
    const = np.ones(128) / np.sqrt(2 * g.L)
    assert const @ K @ const * g.h**2 == pytest.approx(np.cos(0.7 * 2.0), abs=1e-10)


def test_strong_well_ground_state_matches_finite_differences():
    _, sd = _spectrum("scaled_sech2", {"a": -10.0}, 20.0, 512)
    assert sd.eigenvalues[0] < 0
    assert sd.eigenvalues[0] == pytest.approx(_fd_lowest(-10.0), rel=2e-3)


def test_bound_states_include_all_negative_modes():
    _, sd = _spectrum("scaled_sech2", {"a": -10.0}, 20.0, 512)
    bound = detect_bound_states(sd)
    assert set(np.flatnonzero(sd.eigenvalues < 0)) <= set(bound)


def test_embedded_eigenvalue_and_sech_mode():
    g, sd = _spectrum("embedded_example", {}, 20.0, 1024)
    j = int(np.argmin(np.abs(sd.eigenvalues - 1.0)))
    assert abs(sd.eigenvalues[j] - 1.0) <= 1e-6
    ref = 1.0 / np.cosh(g.x)
    ref /= np.sqrt(g.h * ref @ ref)
    vec = sd.eigenfunction(j)
    vec *= np.sign(vec @ ref)
    assert np.sqrt(g.h * np.sum((vec - ref) ** 2)) <= 1e-4
    assert j in detect_bound_states(sd)


def test_pac_projector_is_a_projector():
    _, sd = _spectrum("scaled_sech2", {"a": -10.0}, 10.0, 128)
    sd = sd.with_bound_states(detect_bound_states(sd))
    P = pac_projector(sd)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    assert round(np.trace(P)) == 128 - len(sd.bound_state_indices)


def test_cos_kernel_at_zero_time_is_the_projector():
    g, sd = _spectrum("zero", {}, 10.0, 128)
    K = propagate_spectral(sd, 1e-12, kind="cos").values
    np.testing.assert_allclose(K * g.h, np.eye(128), atol=1e-10)


def test_sin_over_small_time_limit():
    g, sd = _spectrum("zero", {}, 10.0, 128)
    t = 1e-6
    K = propagate_spectral(sd, t, kind="sin_over").values
    np.testing.assert_allclose(K * g.h / t, np.eye(128), atol=1e-6)


def test_cos_kernel_is_even_in_time():
    _, sd = _spectrum("scaled_sech2", {"a": -0.3}, 15.0, 256)
    sd = sd.with_bound_states(detect_bound_states(sd))
    a = propagate_spectral(sd, 3.0).values
    b = propagate_spectral(sd, -3.0).values
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_validity_window_flag():
    g, sd = _spectrum("zero", {}, 15.0, 256)
    cs = CutoffSpec(1 / 8)
    t_max = validity_window(g, cs.band[1])
    assert t_max == pytest.approx(15.0 / (4 * (0.25) ** 0.25))
    assert propagate_spectral(sd, 5.0, cutoff=cs, which="low").valid
    assert not propagate_spectral(sd, 6.0, cutoff=cs, which="low").valid
    with pytest.raises(ValidityWindowError):
        propagate_spectral(sd, 6.0, cutoff=cs, which="low", enforce_window=True)
