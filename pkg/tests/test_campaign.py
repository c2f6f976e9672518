import numpy as np
import pytest

from uavsm.calibration import AcsCharacterization, calibrate_records, sky_calibrate
from uavsm.campaign import (FlightPlan, SceneSpec, StripSpec, footprint_step_profile,
                            generate_scene, load_flight_plan, load_scene_spec, save_json,
                            simulate_flight, simulate_sky_records)
from uavsm.errors import PlanOutsideScene
from uavsm.forward import brightness_hv
from uavsm.pipeline import CampaignConfig, grid_flight, run_campaign

SHORT_DAYS = ("2024-09-04", "2024-09-05", "2024-09-06")


def _constant_spec():
    strips = tuple(StripSpec(f"S{i}", "shrub", 0.25, 0.68, 0.15) for i in range(3))
    return SceneSpec(strips=strips, gradient=0.0, texture_amplitude=0.0, drying_rate=0.0,
                     days=SHORT_DAYS)


def test_constant_scene_gives_analytic_samples():
    scene = generate_scene(_constant_spec(), seed=1)
    plan = FlightPlan(noise_std=0.0, track_spacing=20.0)
    fr = simulate_flight(scene, plan, seed=3)
    s = fr.samples
    st = scene.strips[0]
    h, v = brightness_hv(0.25, st.tau, scene.t_s[fr.day], scene.t_c[fr.day], 0.085, st.omega,
                         0.13, 0.0, s.incidence)
    assert np.allclose(s.tb_h, h, atol=1e-9)
    assert np.allclose(s.tb_v, v, atol=1e-9)
    assert scene.cell_truth(scene.grid_spec(21.0), fr.day) == pytest.approx(0.25)


def test_gradient_contrast():
    spec = SceneSpec(strips=(StripSpec("A", "shrub", 0.30, 0.68, 0.15),), gradient=-0.001,
                     texture_amplitude=0.0, drying_rate=0.0, days=SHORT_DAYS)
    scene = generate_scene(spec)
    d = scene.days[0]
    west, east = scene.sm(0.0, 50.0, d), scene.sm(240.0, 50.0, d)
    assert west - east == pytest.approx(0.24)


def test_seeds_change_texture_not_strip_means():
    a, b = generate_scene(seed=1), generate_scene(seed=2)
    d = a.days[0]
    assert a.strip_mean_sm(d) == b.strip_mean_sm(d)
    x = np.linspace(0, 240, 50)
    assert not np.allclose(a.sm(x, 10.0, d), b.sm(x, 10.0, d))


def test_flight_determinism_and_segments():
    scene = generate_scene(seed=0)
    plan = FlightPlan(track_spacing=12.0)
    a = simulate_flight(scene, plan, seed=5)
    b = simulate_flight(scene, plan, seed=5)
    c = simulate_flight(scene, plan, seed=6)
    for f in ("easting", "northing", "tb_h", "tb_v", "incidence"):
        assert np.array_equal(getattr(a.samples, f), getattr(b.samples, f))
    assert not np.array_equal(a.samples.tb_v, c.samples.tb_v)
    assert np.all((a.samples.incidence >= 20) & (a.samples.incidence <= 60))
    # roughly 14 samples per second of flight
    dt = np.diff(a.samples.timestamp)
    assert np.median(dt) == pytest.approx(1 / 14)


def test_plan_outside_scene():
    scene = generate_scene(seed=0)
    with pytest.raises(PlanOutsideScene):
        simulate_flight(scene, FlightPlan(strips=("Nowhere",)))
    with pytest.raises(PlanOutsideScene):
        simulate_flight(scene, FlightPlan(margin=200.0))


def test_step_profile_smoothed_at_higher_altitude():
    strips = (StripSpec("Dry", "shrub", 0.10, 0.68, 0.15), StripSpec("Wet", "shrub", 0.40, 0.68, 0.15))
    scene = generate_scene(SceneSpec(strips=strips, gradient=0.0, texture_amplitude=0.0,
                                     drying_rate=0.0, days=SHORT_DAYS))
    y = np.linspace(60, 120, 121)
    d = scene.days[0]
    low = footprint_step_profile(scene, FlightPlan(altitude=10.0), d, 120.0, y)
    high = footprint_step_profile(scene, FlightPlan(altitude=30.0), d, 120.0, y)

    def width(p):
        frac = (p - 0.10) / 0.30
        return np.sum((frac > 0.1) & (frac < 0.9))

    assert width(high) > width(low) > 0
    # far from the edge both see the plateau
    assert low[0] == pytest.approx(0.10) and high[0] == pytest.approx(0.10)


def test_raw_mode_round_trip():
    scene = generate_scene(seed=0)
    cal = AcsCharacterization()
    offs = (1.7, -2.3)
    plan = FlightPlan(track_spacing=30.0)
    fr = simulate_flight(scene, plan, seed=2, raw=True, cal=cal, instrument_offset=offs)
    sky = simulate_sky_records(fr.day, instrument_offset=offs, noise_std=0.0, seed=2)
    d = sky_calibrate(sky, cal, day=fr.day)
    assert (d.d_h, d.d_v) == pytest.approx(offs, abs=1e-6)
    out = calibrate_records(fr.records, cal, d)
    assert out.n_dropped == 0
    assert np.max(np.abs(out.tb_h - fr.samples.tb_h)) < 1e-6
    assert np.max(np.abs(out.tb_v - fr.samples.tb_v)) < 1e-6


def test_json_round_trip(tmp_path):
    spec = SceneSpec(days=SHORT_DAYS)
    plan = FlightPlan(altitude=20.0, calibration_bias=(-2.0, 2.0))
    assert load_scene_spec(save_json(spec, tmp_path / "scene.json")) == spec
    assert load_flight_plan(save_json(plan, tmp_path / "plan.json")) == plan
    with pytest.raises(ValueError):
        SceneSpec.from_dict({"bogus": 1})


def _short_campaign(noise, bias):
    cfg = CampaignConfig(scene=SceneSpec(days=SHORT_DAYS), altitudes=(30.0,),
                         plan=FlightPlan(noise_std=noise, calibration_bias=bias),
                         algorithms=("SCAV", "MTDCA"))
    return {r["algorithm"]: r for r in run_campaign(cfg, seed=0).metric_rows()}


def test_closed_loop_noise_free():
    rows = _short_campaign(0.0, (0.0, 0.0))
    assert rows["SCAV"]["ubrmse"] <= 0.01
    assert rows["MTDCA"]["ubrmse"] <= 0.01


def test_closed_loop_2k_noise():
    rows = _short_campaign(2.0, (0.0, 0.0))
    assert rows["SCAV"]["ubrmse"] <= 0.04
    assert rows["MTDCA"]["ubrmse"] <= 0.04


def test_coarser_grid_has_smaller_strip_variance():
    # step scene: strip means only, so the spread left in each strip is noise,
    # pose jitter and edge mixing, all of which coarser cells average down
    scene = generate_scene(SceneSpec(gradient=0.0, texture_amplitude=0.0), seed=0)
    fr = simulate_flight(scene, FlightPlan(altitude=10.0), seed=1)
    variances = []
    for r in (7.0, 14.0, 21.0):
        spec = scene.grid_spec(r)
        g = grid_flight(fr.samples, spec, zone=scene.zone).tb_v
        lc = scene.cell_land_cover(spec)
        variances.append(np.mean([np.nanvar(g[lc == k]) for k in range(len(scene.strips))]))
    assert variances[0] > variances[1] > variances[2]
