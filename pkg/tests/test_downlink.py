import math

import numpy as np
import pytest

from risemf import downlink as dl
from risemf.downlink import LinkBudget, alzer_beta, alzer_coverage, bs_field, direct_budget
from risemf.model import Conditioning, LinkType, NetworkParams, ParameterError, derive_constants

P = NetworkParams()
GAMMA = 10.0 ** (np.arange(-10, 21, 2) / 10.0)
OMEGA = np.linspace(0.1, 2.0, 12) * 1e-3


def test_alzer_beta():
    assert alzer_beta(1) == 1.0
    assert alzer_beta(3) == pytest.approx(6 ** (-1 / 3))


def test_alzer_exact_for_rayleigh():
    field = bs_field(100.0, P)
    b = LinkBudget(direct_budget(LinkType.DN, 100.0, P).p_a, 1, LinkType.DN)
    s = GAMMA / b.p_a
    exact = np.exp(-s * P.sigma2_dl) * field.laplace_real(s)
    np.testing.assert_array_equal(alzer_coverage(GAMMA, b.p_a, 1, P.sigma2_dl, field), exact)
    val = dl.conditional_coverage_dl(GAMMA[3], b, 100.0, P)
    assert val == pytest.approx(exact[3], rel=1e-15)


def test_link_budget_validation():
    with pytest.raises(ParameterError):
        LinkBudget(0.0, 1, LinkType.DL)
    with pytest.raises(ParameterError):
        LinkBudget(1.0, 1.5, LinkType.DL)
    with pytest.raises(ParameterError):
        dl.cascaded_budget(10.0, 10.0, P.replace(N_r=0))


def test_coverage_shape():
    cov = dl.coverage_dl(GAMMA, P)
    assert np.all(np.diff(cov) <= 1e-12)
    assert np.all((cov >= 0) & (cov <= 1))
    assert dl.coverage_dl(1e-9, P) == pytest.approx(1.0, abs=1e-6)
    assert dl.coverage_dl(1e9, P) == pytest.approx(0.0, abs=1e-9)


def test_coverage_alzer_close_to_exact():
    np.testing.assert_allclose(dl.coverage_dl(GAMMA, P), dl.coverage_dl(GAMMA, P, method="exact"), atol=0.02)
    with pytest.raises(ValueError):
        dl.coverage_dl(1.0, P, method="guess")


def test_coverage_random_conditioning():
    cov = dl.coverage_dl(GAMMA, P, Conditioning.random(16))
    assert np.all(np.diff(cov) <= 1e-12) and np.all((cov >= 0) & (cov <= 1))


def test_conditional_coverage_matches_simulator(default_run):
    res, _ = default_run
    mask = res.link == LinkType.DL
    emp = float(np.mean(res.sinr_dl[mask] > 1.0))
    ana = dl.conditional_coverage_dl(1.0, direct_budget(LinkType.DL, 100.0, P), 100.0, P)
    assert abs(emp - ana) <= 0.02


def test_emfe_transform_factorises():
    b = direct_budget(LinkType.DL, 100.0, P)
    area = derive_constants(P).area_E
    s = np.array([0.0, 10.0, 1e3, 1e4])
    serving = (1 + s * b.p_a / (b.m_q * area)) ** (-b.m_q)
    np.testing.assert_allclose(dl.laplace_emfe_dl(s, b, 100.0, P),
                               serving * dl.laplace_interference_dl(s / area, 100.0, P), rtol=1e-14)
    assert dl.laplace_emfe_dl(0.0, b, 100.0, P) == 1.0


def test_emfe_transform_matches_simulator(default_run):
    res, _ = default_run
    mix = dl.serving_mixture(100.0, P)
    ana = sum(w * float(np.real(dl.laplace_emfe_dl(1e3, LinkBudget(pa, int(m), LinkType(lk)), 100.0, P)))
              for pa, m, w, lk in zip(mix.p_a, mix.m, mix.weight, mix.link))
    assert float(np.mean(np.exp(-1e3 * res.emfe_dl))) == pytest.approx(ana, rel=0.02)


def test_compliance_shape():
    cmp = dl.compliance_dl(OMEGA, P)
    assert np.all(np.diff(cmp) >= -1e-12) and np.all((cmp >= 0) & (cmp <= 1))
    assert dl.compliance_dl(1.0, P) == pytest.approx(1.0, abs=1e-9)


def test_compliance_inversions_agree():
    b = direct_budget(LinkType.DL, 100.0, P)
    for w in (0.2e-3, 0.6e-3, 1.5e-3):
        euler = dl.conditional_compliance_dl(w, b, 100.0, P)
        gp = dl.conditional_compliance_dl(w, b, 100.0, P, method="gil-pelaez")
        assert euler == pytest.approx(gp, abs=1e-6)


def test_quantile_inverts_compliance():
    w = dl.emfe_quantile_dl(0.9, P)
    assert dl.compliance_dl(w, P) == pytest.approx(0.9, abs=1e-5)


def test_mean_emfe_limits():
    e1, e2 = dl.mean_emfe_dl(P)
    assert e1 > 0 and e2 > 0
    _, e2x = dl.mean_emfe_dl(P.replace(lambda_b=2 * P.lambda_b))
    assert e2x == pytest.approx(2 * e2, rel=1e-12)
    # heavy blockage: only the NLoS term survives
    heavy = P.replace(lambda_o=1.0, mu=0.0)
    _, e2h = dl.mean_emfe_dl(heavy)
    g_bar = bs_field(1.0, heavy).mean_gain
    t, aN = 100.0, heavy.alpha_N
    assert e2h == pytest.approx(0.5 * heavy.lambda_b * heavy.p_b * g_bar * t ** (2 - aN) / (aN - 2), rel=1e-9)


def test_joint_noise_floor():
    b = direct_budget(LinkType.DL, 100.0, P)
    area = derive_constants(P).area_E
    omega = 0.5 * P.sigma2_dl * 1.0 / area
    assert dl.joint_conditional_dl(1.0, omega, b, 100.0, P) == 0.0


def test_joint_methods_agree():
    b = direct_budget(LinkType.DL, 100.0, P)
    for g, w in ((1.0, 0.5e-3), (10.0, 1e-3), (0.1, 0.3e-3)):
        table = dl.joint_conditional_dl(g, w, b, 100.0, P)
        gp = dl.joint_conditional_dl(g, w, b, 100.0, P, method="gil-pelaez")
        assert table == pytest.approx(gp, abs=1e-5)


def test_joint_bounded_by_marginals():
    g = GAMMA[::3]
    j = dl.joint_dl(g, OMEGA[::2], P)
    cov = dl.coverage_dl(g, P, method="exact")
    cmp = dl.compliance_dl(OMEGA[::2], P)
    assert np.all(j <= np.minimum(cov[:, None], cmp[None, :]) + 1e-6)
    assert np.all(j >= np.maximum(0, cov[:, None] + cmp[None, :] - 1) - 1e-6)
    assert np.all(np.diff(j, axis=0) <= 1e-12) and np.all(np.diff(j, axis=1) >= -1e-12)


def test_joint_scalar_and_random():
    assert isinstance(dl.joint_dl(1.0, 0.5e-3, P), float)
    j = dl.joint_dl([1.0], [0.5e-3], P, Conditioning.random(8))
    assert j.shape == (1, 1) and 0 <= j[0, 0] <= 1


def test_no_ris_network_has_no_cascaded_nodes():
    mix = dl.serving_mixture(100.0, P.replace(N_r=0))
    assert set(mix.link.tolist()) <= {int(LinkType.DL), int(LinkType.DN)}
    assert mix.weight.sum() == pytest.approx(1.0)
    assert math.isclose(dl.serving_mixture(100.0, P).weight.sum(), 1.0, rel_tol=1e-12)
