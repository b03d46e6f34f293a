import numpy as np
import pytest

from beamlab.errors import ConfigError
from beamlab.freekernel import G0_kernel
from beamlab.model import PotentialSpec, build_grid, sample_potential
from beamlab.resonance import (BirmanSchwinger, build_T0, cancellation_probe, choose_lambda0,
                               classify, extended_dps, minv_blowup_probe, moment_projectors)

SAMPLES = {
    "Regular": ("scaled_sech2", {"a": -0.3}),
    "FirstKind": ("resonance_example", {"c": 1, "d": 1}),
    "SecondKind": ("resonance_example", {"c": 0, "d": 1}),
}
LAM = np.geomspace(1e-3, 1e-1, 9)


def _sample(label, n=256, L=15.0):
    family, params = SAMPLES[label]
    return sample_potential(PotentialSpec(family, params), build_grid(L, n))


@pytest.fixture(scope="module")
def samples():
    return {k: _sample(k) for k in SAMPLES}


@pytest.mark.parametrize("label", list(SAMPLES))
@pytest.mark.parametrize("n", [256, 512])
def test_classification(label, n):
    report = classify(_sample(label, n))
    assert report.classification == label
    assert not report.ambiguous


def test_projectors_annihilate_moments(samples):
    proj = moment_projectors(samples["Regular"])
    B = proj.moments
    for k, Q in enumerate((proj.Q1, proj.Q2, proj.Q3), start=1):
        np.testing.assert_allclose(Q @ Q, Q, atol=1e-12)
        np.testing.assert_allclose(Q, Q.T, atol=1e-14)
        assert np.abs(Q @ B[:, :k]).max() <= 1e-12 * np.abs(B).max()
    np.testing.assert_allclose(proj.P + proj.Q1, np.eye(len(proj.P)), atol=1e-14)


def test_T0_entries(samples):
    s = samples["FirstKind"]
    T = build_T0(s).matrix
    S = s.support
    z, w = s.grid.x[S], np.sqrt(s.grid.h) * s.v[S]
    i, j = 3, 12
    assert T[i, j] == pytest.approx(w[i] * w[j] * G0_kernel(z[i], z[j]), rel=1e-14)
    assert T[i, i] == pytest.approx(s.U[S][i])
    np.testing.assert_allclose(T, T.T)


def test_M_conjugation(samples):
    bs = BirmanSchwinger(samples["Regular"])
    np.testing.assert_allclose(np.conj(bs.matrix(0.3, 1)), bs.matrix(0.3, -1), atol=1e-15)
    M = bs.matrix(0.3, 1)
    np.testing.assert_allclose(M, M.T, atol=1e-15)


def test_M_diagonal(samples):
    bs = BirmanSchwinger(samples["Regular"])
    lam = 0.2
    M = bs.matrix(lam)
    # F(0) = -1 + i
    want = bs.U[5] + bs.w[5] ** 2 * (-1 + 1j) / (4 * lam**3)
    assert M[5, 5] == pytest.approx(want, rel=1e-14)


def test_M_high_precision_agrees_with_double(samples):
    bs = BirmanSchwinger(samples["Regular"])
    lam = 0.5
    Mmp = np.array(bs.matrix_mp(lam).tolist(), dtype=complex)
    np.testing.assert_allclose(Mmp, bs.matrix(lam), rtol=1e-13, atol=1e-13)
    assert extended_dps(1e-3) == 25 + 18


def test_zero_potential_has_no_M():
    s = sample_potential(PotentialSpec("zero"), build_grid(10.0, 64))
    with pytest.raises(ConfigError):
        BirmanSchwinger(s)


@pytest.mark.parametrize("label, order", [("Regular", 0), ("FirstKind", -1), ("SecondKind", -3)])
def test_minv_blowup_order(samples, label, order):
    res = minv_blowup_probe(samples[label], LAM)
    assert res.slope == pytest.approx(order, abs=0.3)


@pytest.mark.parametrize("alpha", [0, 1, 2, 3])
def test_cancellation_order(samples, alpha):
    res = cancellation_probe(samples["Regular"], alpha, LAM)
    assert res.slope == pytest.approx(alpha - 3, abs=0.3)


def test_cancellation_rejects_bad_order(samples):
    with pytest.raises(ValueError):
        cancellation_probe(samples["Regular"], 4, LAM)


def test_lambda0_is_dyadic(samples):
    lam0 = choose_lambda0(samples["Regular"])
    assert np.log2(lam0) == round(np.log2(lam0))
