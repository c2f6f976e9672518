import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsm.calibration import AcsCharacterization, antenna_tb, gain_and_offset, switch_input_tb
from uavsm.calibration import synthesize_voltages
from uavsm.evaluation import metrics
from uavsm.forward import brightness_hv, fresnel_reflectivity
from uavsm.geometry import utm_to_wgs84, wgs84_to_utm
from uavsm.gridding import GridSpec, grid_points
from uavsm.retrieval import AuxState, retrieve_sca

temps = st.floats(270.0, 320.0)
sm_values = st.floats(0.03, 0.55)
tau_values = st.floats(0.0, 1.5)


@given(st.floats(150.0, 320.0), st.floats(150.0, 320.0), st.floats(150.0, 250.0), temps, temps)
def test_calibration_inverse(tb_h, tb_v, gain, t_ant, t_cab):
    cal = AcsCharacterization()
    off = 303.0 - gain * 1.5
    u_acs, u_rs, u_h, u_v = synthesize_voltages(tb_h, tb_v, gain, off, 300.0, 303.0, t_ant, t_cab,
                                                cal)
    g, o = gain_and_offset(u_acs, u_rs, 300.0, 303.0, cal)
    assert abs(antenna_tb(switch_input_tb(u_h, g, o), cal, t_ant, t_cab) - tb_h) < 1e-6
    assert abs(antenna_tb(switch_input_tb(u_v, g, o), cal, t_ant, t_cab) - tb_v) < 1e-6


@given(st.floats(1.0, 80.0), st.floats(0.0, 80.0))
def test_fresnel_in_unit_interval_and_v_below_h(eps, theta):
    r_h, r_v = fresnel_reflectivity(eps, theta)
    assert 0.0 <= r_v <= r_h + 1e-15 <= 1.0 + 1e-15


@given(sm_values, tau_values, temps, temps)
def test_v_at_least_h_and_bounded(sm, tau, ts, tc):
    h, v = brightness_hv(sm, tau, ts, tc)
    assert v >= h
    assert 0.0 < h and v <= max(ts, tc)


@given(sm_values, st.floats(0.0, 1.0), temps)
@settings(max_examples=50, deadline=None)
def test_sca_inverts_forward(sm, tau, ts):
    aux = AuxState(ts, ts + 1.0, 0.085)
    _, v = brightness_hv(sm, tau, aux.t_s, aux.t_c)
    assert abs(retrieve_sca(v, "V", tau, aux).sm - sm) < 1e-4


@given(st.floats(-60.0, 60.0), st.floats(-95.0, -81.0))
def test_utm_round_trip(lat, lon):
    e, n, zone = wgs84_to_utm(lat, lon, 16)
    lat2, lon2 = utm_to_wgs84(e, n, zone, northern=lat >= 0)
    assert abs(lat2 - lat) < 1e-8 and abs(lon2 - lon) < 1e-8


@given(st.lists(st.floats(0.0, 0.6), min_size=2, max_size=40),
       st.lists(st.floats(0.0, 0.6), min_size=2, max_size=40))
def test_metric_identity(a, b):
    n = min(len(a), len(b))
    m = metrics((a[:n], b[:n]))
    assert abs(m.rmse ** 2 - (m.bias ** 2 + m.ubrmse ** 2)) < 1e-12
    assert np.isnan(m.r) or -1.0 - 1e-12 <= m.r <= 1.0 + 1e-12


@given(st.lists(st.tuples(st.floats(0.0, 21.0), st.floats(0.0, 21.0), st.floats(150.0, 300.0)),
                min_size=1, max_size=30),
       st.sampled_from(["dib", "ids", "nn"]))
def test_gridded_values_within_sample_range(pts, method):
    x, y, v = map(np.array, zip(*pts))
    g = grid_points(x, y, v, GridSpec(0.0, 0.0, 7.0, 3, 3), method,
                    timestamp=np.arange(len(v), dtype=float))
    ok = np.isfinite(g.values)
    assert ok.any()
    assert np.all(g.values[ok] >= v.min() - 1e-9) and np.all(g.values[ok] <= v.max() + 1e-9)
