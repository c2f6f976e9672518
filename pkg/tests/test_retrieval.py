import logging
from datetime import date

import numpy as np
import pytest

from uavsm.errors import DegenerateNdviRange, MissingPairDay
from uavsm.forward import ModelParams, brightness_hv, dtb_dsm
from uavsm.retrieval import (AuxState, RetrievalConfig, combine_pair_estimates, retrieve_dca,
                             retrieve_dca_batch, retrieve_mtdca, retrieve_mtdca_batch,
                             retrieve_sca, retrieve_sca_batch, sliding_pair_scheduler,
                             tau_from_vwc, vwc_from_ndvi)

AUX = AuxState(295.0, 296.0, 0.085)
P = ModelParams()


def test_vwc_examples():
    assert vwc_from_ndvi(0.5, 0.85, 0.1, 0.0) == pytest.approx(0.31760, abs=1e-5)
    assert vwc_from_ndvi(0.0, 0.85, 0.1, 0.0) == 0.0
    assert vwc_from_ndvi(0.1, 0.85, 0.1, 0.0) == 0.0  # negative polynomial clamps
    assert vwc_from_ndvi(0.0, 0.8, 0.2, 1.0) == pytest.approx(0.75)
    with pytest.raises(DegenerateNdviRange):
        vwc_from_ndvi(0.5, 0.9, 1.0, 0.0)


def test_tau_from_vwc_and_land_cover_ordering():
    assert tau_from_vwc(0.0, 0.3) == 0.0
    assert tau_from_vwc(1.5, 0.1) == pytest.approx(0.15)
    shrub = tau_from_vwc(vwc_from_ndvi(0.68, 0.85, 0.1, 0.0), 0.15)
    forest = tau_from_vwc(vwc_from_ndvi(0.82, 0.85, 0.1, 1.5), 0.12)
    assert forest > shrub


def test_sca_round_trip_and_clamp():
    _, v = brightness_hv(0.25, 0.1, AUX.t_s, AUX.t_c)
    r = retrieve_sca(v, "V", 0.1, AUX)
    assert r.sm == pytest.approx(0.25, abs=1e-4)
    assert r.tau == "ancillary"
    hot = retrieve_sca(v + 80, "V", 0.1, AUX)
    assert hot.sm == 0.02
    assert hot.at_bound["sm"]


def test_sca_noise_sensitivity():
    sm0 = 0.25
    h, v = brightness_hv(sm0, 0.1, AUX.t_s, AUX.t_c)
    _, dv = dtb_dsm(sm0, 0.1, AUX.t_s, AUX.t_c)
    up = retrieve_sca(v + 1.0, "V", 0.1, AUX).sm
    dn = retrieve_sca(v - 1.0, "V", 0.1, AUX).sm
    assert (up - dn) / 2 == pytest.approx(1.0 / dv, rel=0.05)


def test_sca_bare_soil_ignores_tau():
    cfg = RetrievalConfig("SCAV", land_cover="bare_soil")
    _, v = brightness_hv(0.15, 0.0, AUX.t_s, AUX.t_c, omega=0.0)
    r = retrieve_sca(v, "V", 0.5, AUX, P, cfg)
    assert r.sm == pytest.approx(0.15, abs=1e-6)


def test_sca_objective_unimodal():
    rng = np.random.default_rng(2)
    grid = np.linspace(0.02, 0.6, 1000)
    for _ in range(20):
        tau = rng.uniform(0, 1)
        _, obs = brightness_hv(rng.uniform(0.05, 0.5), tau, 295.0, 295.0)
        _, sim = brightness_hv(grid, tau, 295.0, 295.0)
        j = (sim - obs) ** 2
        k = np.argmin(j)
        assert np.all(np.diff(j[:k + 1]) <= 0) and np.all(np.diff(j[k:]) >= 0)


def test_dca_round_trip():
    h, v = brightness_hv(0.2, 0.15, AUX.t_s, AUX.t_c)
    r = retrieve_dca(v, h, AUX)
    assert r.sm == pytest.approx(0.2, abs=1e-3)
    assert r.tau == pytest.approx(0.15, abs=1e-3)
    assert r.residual < 1e-9
    assert not any(r.at_bound.values())


def test_dca_inconsistent_pair_hits_tau_bound():
    # the emission model cannot make V colder than H; a pair that is more
    # polarized than bare soil at the wettest bound pushes tau to zero
    h, v = brightness_hv(0.35, 0.0, AUX.t_s, AUX.t_c)
    r = retrieve_dca(v + 5.0, h - 25.0, AUX)
    assert r.residual > 0.1
    assert r.at_bound["tau"]
    assert r.tau == pytest.approx(0.0, abs=1e-6)


def test_dca_degenerate_normal_incidence():
    p0 = ModelParams(theta=0.0)
    h, v = brightness_hv(0.2, 0.2, AUX.t_s, AUX.t_c, theta=0.0)
    assert h == pytest.approx(v)
    r = retrieve_dca(v, h, AUX, p0)
    assert r.residual < 1e-6
    assert r.non_unique


def test_dca_bias_moves_tau_more_than_sm():
    sm0, tau0 = 0.25, 0.12
    h, v = brightness_hv(sm0, tau0, AUX.t_s, AUX.t_c)
    r = retrieve_dca(v + 2.0, h, AUX)
    assert abs(r.tau - tau0) / tau0 > abs(r.sm - sm0) / sm0


def test_mtdca_round_trip_and_symmetry():
    a2 = AuxState(293.0, 294.0, 0.085)
    h1, v1 = brightness_hv(0.18, 0.2, AUX.t_s, AUX.t_c)
    h2, v2 = brightness_hv(0.15, 0.2, a2.t_s, a2.t_c)
    r = retrieve_mtdca(v1, h1, v2, h2, AUX, a2)
    assert r.sm == pytest.approx((0.18, 0.15), abs=1e-3)
    assert r.tau == pytest.approx(0.2, abs=1e-3)
    same = retrieve_mtdca(v1, h1, v1, h1, AUX, AUX)
    assert same.sm[0] == pytest.approx(same.sm[1], abs=1e-9)
    with pytest.raises(MissingPairDay):
        retrieve_mtdca(v1, np.nan, v2, h2, AUX, a2)


def test_mtdca_tau_less_noisy_than_dca():
    rng = np.random.default_rng(11)
    n = 200
    a2 = AuxState(294.0, 295.0, 0.085)
    h1, v1 = brightness_hv(0.25, 0.12, AUX.t_s, AUX.t_c)
    h2, v2 = brightness_hv(0.24, 0.12, a2.t_s, a2.t_c)
    obs = [x + rng.normal(0, 1, n) for x in (v1, h1, v2, h2)]
    cfg = RetrievalConfig("DCA")
    dca = retrieve_dca_batch(obs[0], obs[1], AUX, P, cfg)
    mt = retrieve_mtdca_batch(*obs, AUX, a2, P, RetrievalConfig("MTDCA"))
    assert np.var(mt.tau) < np.var(dca.tau)


def test_batch_results_respect_bounds():
    rng = np.random.default_rng(4)
    v = rng.uniform(120, 300, 100)
    h = rng.uniform(100, 300, 100)
    r = retrieve_dca_batch(v, h, AUX, P, RetrievalConfig("DCA"))
    assert np.all((r.sm >= 0.02) & (r.sm <= 0.60))
    assert np.all((r.tau >= 0.0) & (r.tau <= 3.0))
    s = retrieve_sca_batch(v, "V", 0.1, AUX, P, RetrievalConfig("SCAV"))
    assert np.all((s.sm >= 0.02) & (s.sm <= 0.60))


def test_scheduler(caplog):
    d = [date(2024, 9, i) for i in (4, 5, 6)]
    assert sliding_pair_scheduler(d) == [(d[0], d[1]), (d[1], d[2])]
    with caplog.at_level(logging.WARNING):
        assert sliding_pair_scheduler(d[:1]) == []
    assert "at least two days" in caplog.text
    gap = [date(2024, 9, 4), date(2024, 9, 5), date(2024, 9, 7), date(2024, 9, 8)]
    assert sliding_pair_scheduler(gap) == [(gap[0], gap[1]), (gap[2], gap[3])]


def test_combine_pair_estimates_averages_interior_days():
    d = [date(2024, 9, i) for i in (4, 5, 6)]
    out = combine_pair_estimates({(d[0], d[1]): (0.30, 0.28), (d[1], d[2]): (0.26, 0.25)})
    assert out[d[0]] == pytest.approx(0.30)
    assert out[d[1]] == pytest.approx(0.27)
    assert out[d[2]] == pytest.approx(0.25)
