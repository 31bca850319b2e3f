import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nsclc_phasefield.mesh import build_grid
from nsclc_phasefield.observables import TimeSeries, total_mass, visible_volume
from nsclc_phasefield.params import patient1_parameters
from nsclc_phasefield.stepper import initial_condition

BALL = 4 / 3 * np.pi * 0.04**3


def test_visible_volume_trivial():
    g = build_grid(500, 0.04)
    assert visible_volume(g, np.ones(501)) == pytest.approx(2.6808e-4, rel=1e-4)
    assert visible_volume(g, np.ones(501)) == pytest.approx(BALL, rel=1e-12)
    assert visible_volume(g, np.zeros(501)) == 0.0


def test_visible_volume_linear_ramp():
    g = build_grid(400, 0.04)
    r = g.node_radii
    phi = np.clip(1.0 - (r - 0.01) / 0.01, 0.0, 1.0)
    expected = 4 / 3 * np.pi * 0.017**3
    assert visible_volume(g, phi) == pytest.approx(expected, rel=1e-10)
    assert visible_volume(g, phi) == pytest.approx(2.058e-5, rel=1e-3)


def test_visible_volume_rejects_bad_threshold():
    g = build_grid(4, 1.0)
    with pytest.raises(ValueError):
        visible_volume(g, np.ones(5), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=31, max_size=31))
def test_visible_volume_bounds_and_monotone(values):
    g = build_grid(30, 0.04)
    phi = np.array(values)
    vols = [visible_volume(g, phi, th) for th in (0.1, 0.3, 0.5, 0.9)]
    assert all(0.0 <= v <= BALL * (1 + 1e-12) for v in vols)
    assert all(a >= b - 1e-18 for a, b in zip(vols, vols[1:]))


def test_total_mass():
    g = build_grid(500, 0.04)
    assert total_mass(g, np.ones(501)) == pytest.approx(BALL, rel=1e-12)
    assert total_mass(g, 0.5 * np.ones(501)) == pytest.approx(BALL / 2, rel=1e-12)


def test_total_mass_of_initial_profile_against_quadrature():
    g = build_grid(500, 0.04)
    eps = 5e-4
    state = initial_condition(g, 0.01, patient1_parameters())
    f = lambda r: 0.5 * (1 - np.tanh((r - 0.01) / (np.sqrt(2) * eps))) * 4 * np.pi * r**2
    ref, _ = quad(f, 0, 0.04, points=[0.01], limit=500, epsabs=0, epsrel=1e-12)
    assert total_mass(g, state.phi_t) == pytest.approx(ref, rel=1e-3)


def test_sharp_profile_visible_close_to_mass():
    g = build_grid(2000, 0.04)
    r = g.node_radii
    phi = 0.5 * (1 - np.tanh((r - 0.02) / 1e-5))
    assert visible_volume(g, phi) == pytest.approx(total_mass(g, phi), rel=5e-3)


def test_timeseries_csv_roundtrip(tmp_path):
    ts = TimeSeries()
    rng = np.random.default_rng(3)
    for i in range(50):
        ts.append(i / 24, *rng.uniform(0, 1e-4, 2), rng.uniform(0, 1e18), *rng.uniform(0, 1e-4, 2))
    path = tmp_path / "series.csv"
    ts.to_csv(path)
    back = TimeSeries.from_csv(path)
    assert back == ts
    assert path.read_text().splitlines()[0] == (
        "t_days,v_vis_mm3,total_mass_mm3,drug_count,proliferative_mass_mm3,necrotic_mass_mm3")


def test_timeseries_requires_increasing_time():
    ts = TimeSeries()
    ts.append(1.0, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        ts.append(1.0, 0, 0, 0, 0, 0)


def test_subsample_keeps_last():
    ts = TimeSeries()
    for i in range(10):
        ts.append(float(i), i, i, i, i, i)
    sub = ts.subsample(4)
    assert list(sub.t_days) == [0.0, 4.0, 8.0, 9.0]
