import math

import numpy as np
import pytest

from risemf import simulator as sim
from risemf import uplink as ul
from risemf.model import LinkGeometry, LinkType, NetworkParams, derive_constants, triangle_close

P = NetworkParams()
GAMMA = 10.0 ** (np.arange(-20, 11, 2) / 10.0)
OMEGA = np.linspace(0.05, 1.1, 22) * 1e-3


def test_direct_power_example():
    g = LinkGeometry(LinkType.DL, 100.0)
    power = ul.tx_power(g, P)
    assert power.p_tx == pytest.approx(8e-6 * 100.0 ** 1.254, rel=1e-12)
    assert power.p_tx == pytest.approx(2.58e-3, rel=0.01)
    assert not power.saturated
    assert ul.emfe_ul(g, P) == pytest.approx(P.SAR_ref * power.p_tx)


def test_saturation():
    t_max = derive_constants(P).T_max
    assert ul.tx_power(LinkGeometry(LinkType.DL, 2 * t_max), P).p_tx == P.p_max
    assert ul.emfe_ul(LinkGeometry(LinkType.DL, 2 * t_max), P) == pytest.approx(1.06e-3)
    below = ul.direct_power(t_max * (1 - 1e-9), P.alpha_L, P)
    assert below < P.p_max and below == pytest.approx(P.p_max, rel=1e-8)


def test_cascaded_power_lower_with_large_ris_gain():
    p = P.replace(N_r=64)
    g = triangle_close(100.0, 20.0, 0.5)
    assert (g.t_ru * g.t_br) ** p.alpha_L / derive_constants(p).G_r < 100.0 ** p.alpha_L
    assert ul.tx_power(g, p).p_tx < ul.tx_power(LinkGeometry(LinkType.DL, 100.0), p).p_tx
    with pytest.raises(ValueError):
        ul.cascaded_power(100.0, P.replace(N_r=0))


def test_mean_interferer_power_limits():
    pbar = ul.mean_interferer_power(P)
    assert P.p0 < pbar <= P.p_max
    tiny = P.replace(epsilon=1e-9)
    assert ul.mean_interferer_power(tiny) == pytest.approx(P.p0, rel=1e-6)


def test_sampled_interferers_with_vanishing_control():
    x = sim.sample_interferer_powers(P.replace(epsilon=1e-9), 2000, seed=1)
    np.testing.assert_allclose(x, P.p0, rtol=1e-6)


def test_sampled_interferer_powers_bounded():
    # below p0 is possible: sub-metre BS distances or RIS gain exceeding the path loss
    x = sim.sample_interferer_powers(P, 20_000, seed=2)
    assert np.all((x > 0) & (x <= P.p_max))
    assert np.array_equal(x, sim.sample_interferer_powers(P, 20_000, seed=2))


@pytest.mark.xfail(strict=True, reason="the analytic mean uses a uniform user-vertex angle while sampled "
                   "cascaded interferers follow the reflection geometry (about 7% apart); see the ledger")
def test_mean_interferer_power_matches_sampling():
    x = sim.sample_interferer_powers(P, 100_000, seed=3)
    assert float(np.mean(x)) == pytest.approx(ul.mean_interferer_power(P), rel=0.03)


def test_laplace_ul():
    assert ul.laplace_interference_ul(0.0, P) == 1.0
    s = np.geomspace(1e8, 1e13, 12)
    assert np.all(np.diff(ul.laplace_interference_ul(s, P)) <= 0)


def test_laplace_ul_matches_simulator(default_run):
    res, _ = default_run
    emp = float(np.mean(np.exp(-1e10 * res.i_ul)))
    assert emp == pytest.approx(ul.laplace_interference_ul(1e10, P), rel=0.03)


def test_coverage_ul_shape():
    cov = ul.coverage_ul(GAMMA, P)
    assert np.all(np.diff(cov) <= 1e-12)
    assert ul.coverage_ul(1e-9, P) == pytest.approx(1.0, abs=1e-6)


def test_coverage_ul_tracks_simulator(default_run):
    res, _ = default_run
    emp = np.array(sim.empirical_curve(res.sinr_ul, GAMMA, "coverage", "uplink").values)
    assert np.max(np.abs(ul.coverage_ul(GAMMA, P) - emp)) <= 0.03


def test_compliance_ul_shape():
    cmp = ul.compliance_ul(OMEGA, P)
    assert np.all(np.diff(cmp) >= 0)
    assert ul.compliance_ul(P.SAR_ref * P.p_max, P) == 1.0
    assert ul.compliance_ul(1.0, P) == 1.0


def test_simulated_exposure_capped(default_run):
    res, _ = default_run
    assert np.all(res.emfe_ul <= P.SAR_ref * P.p_max * (1 + 1e-12))


def test_joint_ul():
    j = ul.joint_ul(GAMMA[::3], OMEGA[::4], P)
    cov = ul.coverage_ul(GAMMA[::3], P)
    cmp = ul.compliance_ul(OMEGA[::4], P)
    assert np.all(j <= np.minimum(cov[:, None], cmp[None, :]) + 1e-12)
    np.testing.assert_allclose(ul.joint_ul(GAMMA, [1.0], P)[:, 0], ul.coverage_ul(GAMMA, P), atol=1e-12)
    assert isinstance(ul.joint_ul(0.1, 0.4e-3, P), float)


def test_mean_emfe_ul():
    nodes = ul.uplink_nodes(100.0, P)
    assert nodes.weight.sum() == pytest.approx(1.0)
    assert ul.mean_emfe_ul(P) == pytest.approx(P.SAR_ref * float(nodes.weight @ nodes.p_tx))
    assert math.isfinite(ul.mean_emfe_ul(P))
