from datetime import date, timedelta

import numpy as np
import pytest

from uavsm.evaluation import (ProbePoint, TimeSeriesPair, assign_cell, metrics,
                              pair_retrievals_to_probes, per_site_mean_r, pooled_metrics,
                              read_metric_table, rescale_probes, ubrmse_from_bias_rmse,
                              ubrmse_interval_from_rounded, write_metric_table)
from uavsm.gridding import GridSpec, PixelGrid

DAYS = [date(2024, 9, 4) + timedelta(days=i) for i in range(9)]


def test_constant_offset():
    ref = np.linspace(0.2, 0.3, 9)
    m = metrics(TimeSeriesPair(DAYS, ref + 0.05, ref))
    assert m.bias == pytest.approx(0.05)
    assert m.ubrmse == pytest.approx(0.0, abs=1e-12)
    assert m.r == pytest.approx(1.0)


def test_anticorrelated():
    ref = np.linspace(-1, 1, 9)
    assert metrics((0.3 - ref, ref)).r == pytest.approx(-1.0)


def test_zero_variance_flag():
    m = metrics(([0.2, 0.2, 0.2], [0.1, 0.2, 0.3]))
    assert m.zero_variance and np.isnan(m.r)
    assert m.bias == pytest.approx(0.0)


def test_identity_and_order_invariance():
    rng = np.random.default_rng(0)
    ret, ref = rng.uniform(0.1, 0.4, (2, 30))
    m = metrics((ret, ref))
    assert m.rmse ** 2 == pytest.approx(m.bias ** 2 + m.ubrmse ** 2, abs=1e-12)
    perm = rng.permutation(30)
    m2 = metrics((ret[perm], ref[perm]))
    assert (m2.bias, m2.rmse, m2.ubrmse, m2.r) == pytest.approx((m.bias, m.rmse, m.ubrmse, m.r))


def test_printed_row_arithmetic():
    assert ubrmse_from_bias_rmse(0.088, 0.094) == pytest.approx(0.033, abs=5e-4)
    lo, hi = ubrmse_interval_from_rounded(0.088, 0.094)
    assert lo <= 0.031 <= hi


def test_rescale_probes():
    x = np.linspace(0.1, 0.4, 10)
    c = rescale_probes(x, x)
    assert (c.slope, c.intercept) == pytest.approx((1.0, 0.0), abs=1e-12)
    c = rescale_probes(x, 2 * x)
    assert (c.slope, c.intercept) == pytest.approx((2.0, 0.0), abs=1e-12)
    rng = np.random.default_rng(2)
    p = rng.uniform(0.1, 0.4, 40)
    g = 1.1 * p + 0.03 + rng.normal(0, 0.005, 40)
    c = rescale_probes(p, g)
    assert c.slope == pytest.approx(1.1, abs=0.02)
    assert c.intercept == pytest.approx(0.03, abs=0.02)
    with pytest.raises(ValueError):
        rescale_probes([0.1, 0.2], [0.1, 0.2])


def test_rescaled_perfect_data_has_zero_ubrmse():
    truth = np.linspace(0.15, 0.35, 9)
    probe = (truth - 0.02) / 0.9
    c = rescale_probes(probe, truth)
    assert metrics((truth, c(probe))).ubrmse == pytest.approx(0.0, abs=1e-12)


def test_low_correlation_warns(caplog):
    rescale_probes([0.1, 0.2, 0.3, 0.4], [0.3, 0.1, 0.4, 0.1])
    assert "correlation" in caplog.text


SPEC = GridSpec(0.0, 0.0, 10.0, 4, 3)


def test_assign_cell_policies():
    assert assign_cell(SPEC, 15.0, 25.0)[:2] == (0, 1)
    # one cell width east of the grid, allowed distance 2 cells: nearest edge cell
    row, col, dist = assign_cell(SPEC, 50.0, 15.0, max_distance_cells=2.0)
    assert (row, col) == (1, 3)
    assert dist == pytest.approx(1.0)
    assert assign_cell(SPEC, 50.0, 15.0, max_distance_cells=0.5) is None


def test_pairing_is_stable_and_reports_exclusions():
    grids = {}
    for i, d in enumerate(DAYS[:3]):
        v = np.arange(12, dtype=float).reshape(3, 4) / 100 + i * 0.01
        grids[d] = PixelGrid(SPEC, v)
    probes = [ProbePoint("a", 15.0, 25.0), ProbePoint("far", 500.0, 500.0)]
    series = {"a": {d: 0.1 for d in DAYS[:3]}, "far": {d: 0.1 for d in DAYS[:3]}}
    pairs, report = pair_retrievals_to_probes(grids, probes, series)
    assert list(pairs) == ["a"]
    assert report.cells["a"] == (0, 1)
    assert "far" in report.excluded
    assert np.allclose(pairs["a"].sm_ret, [0.01, 0.02, 0.03])
    pooled = pooled_metrics(pairs)
    assert pooled.n == 3
    assert np.isnan(per_site_mean_r(pairs))  # constant reference


def test_metric_table_round_trip(tmp_path):
    rows = [{"algorithm": "SCAV", "resolution": 7.0, "bias": 0.01, "rmse": 0.02, "ubrmse": 0.017,
             "r": 0.5, "r_site_mean": float("nan"), "n": 40}]
    p = write_metric_table(rows, tmp_path / "m.csv")
    assert p.read_text().splitlines()[0] == "algorithm,resolution,bias,rmse,ubrmse,r,r_site_mean,n"
    back = read_metric_table(p)
    assert back[0]["n"] == 40 and back[0]["ubrmse"] == pytest.approx(0.017)
