import numpy as np
import pytest

from nsclc_phasefield.constitutive import free_energy
from nsclc_phasefield.drug import DrugState, TherapySchedule, schedule_patient1
from nsclc_phasefield.mesh import build_grid, integrate
from nsclc_phasefield.observables import visible_volume
from nsclc_phasefield.params import patient1_parameters
from nsclc_phasefield.scenario import preset
from nsclc_phasefield.simulation import simulate
from nsclc_phasefield.stepper import (FieldState, NumericalFailure, StepConfig, Stepper,
                                      initial_condition)


def _inert_params():
    return patient1_parameters().with_values(lambda_pro=0.0, lambda_pn=0.0)


def _perturbed(grid, params, r0=0.01):
    s = initial_condition(grid, r0, params)
    r = grid.node_radii
    bump = 0.05 * np.sin(r / 0.002) * np.exp(-(((r - r0) / 0.003) ** 2))
    return FieldState(np.clip(s.phi_p + bump, 0, 1), s.phi_n, s.mu, s.sigma, 0.0)


def test_initial_condition_shape():
    grid = build_grid(500, 0.04)
    p = patient1_parameters()
    s = initial_condition(grid, 0.01, p)
    assert s.phi_p[0] == pytest.approx(1.0, abs=1e-12)
    assert s.phi_p[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.all(s.phi_n == 0)
    assert np.all(np.diff(s.phi_p) <= 0)
    # the 0.3 level of the tanh profile sits sqrt(2) eps artanh(0.4) outside r0
    r_vis = 0.01 + np.sqrt(2.0) * p.growth.eps_p * np.arctanh(0.4)
    ball = 4.0 / 3.0 * np.pi * r_vis**3
    assert visible_volume(grid, s.phi_t) == pytest.approx(ball, rel=1e-3)


@pytest.mark.parametrize("r0", [0.0, 0.04, -0.01])
def test_initial_condition_rejects_bad_radius(r0):
    with pytest.raises(ValueError):
        initial_condition(build_grid(50, 0.04), r0, patient1_parameters())


def test_step_config_validation():
    with pytest.raises(ValueError):
        StepConfig(dt=0)
    with pytest.raises(ValueError):
        StepConfig(clamp="none")
    with pytest.raises(ValueError):
        StepConfig(solver="cg")


def test_mass_and_energy_without_reactions():
    grid = build_grid(200, 0.04)
    p = _inert_params()
    st = Stepper(grid, p, TherapySchedule(), StepConfig(clamp="rhs"), dose_scale=0.0)
    s, d = _perturbed(grid, p), DrugState()
    m0 = integrate(grid, s.phi_p)
    e_prev = free_energy(grid, s.phi_p, s.phi_n, p.growth.eps_p, p.growth.c_psi)
    for _ in range(200):
        s, d = st.step(s, d)
        e = free_energy(grid, s.phi_p, s.phi_n, p.growth.eps_p, p.growth.c_psi)
        assert e <= e_prev + 1e-12 * abs(e_prev)
        e_prev = e
    assert abs(integrate(grid, s.phi_p) - m0) <= 1e-10 * m0


def test_zero_field_is_fixed_point():
    grid = build_grid(100, 0.04)
    p = patient1_parameters()
    st = Stepper(grid, p, schedule_patient1(0, 30))
    s0 = initial_condition(grid, 0.01, p)
    z = np.zeros(grid.n_nodes)
    s = FieldState(z, z, z, s0.sigma, 0.0)
    d = DrugState()
    for _ in range(48):
        s, d = st.step(s, d)
    assert np.max(np.abs(s.phi_p)) < 1e-14
    assert np.all(s.phi_n == 0)
    assert d.phi_tau > 0


def test_fields_stay_admissible_in_treated_run():
    grid = build_grid(200, 0.04)
    res = simulate(grid, patient1_parameters(), schedule_patient1(20, 60), 80.0, 0.01,
                   snapshot_times=[40.0, 80.0])
    for s in res.snapshots.values():
        assert s.phi_p.min() >= 0 and s.phi_n.min() >= 0
        assert s.phi_t.max() <= 1 + 1e-9


def test_direct_and_minres_agree():
    grid = build_grid(100, 0.04)
    p = patient1_parameters()
    st = Stepper(grid, p, schedule_patient1(0, 30))
    s, d = initial_condition(grid, 0.01, p), DrugState()
    for _ in range(5):
        s, d = st.step(s, d)
    system, K_mob = st.assemble(s, 1e16)
    mu_d, phi_d = st.solve(system, K_mob, "direct")
    mu_i, phi_i = st.solve(system, K_mob, "minres")
    assert st.last_iterations is not None
    x_d, x_i = np.concatenate([mu_d, phi_d]), np.concatenate([mu_i, phi_i])
    assert np.linalg.norm(x_i - x_d) <= 1e-8 * np.linalg.norm(x_d)


def test_non_finite_state_raises_with_last_good():
    grid = build_grid(50, 0.04)
    p = patient1_parameters()
    st = Stepper(grid, p, TherapySchedule())
    s = initial_condition(grid, 0.01, p)
    bad = s.phi_p.copy()
    bad[10] = np.nan
    broken = FieldState(bad, s.phi_n, s.mu, s.sigma, 3.0)
    with pytest.raises(NumericalFailure) as info:
        st.step(broken, DrugState(0.0, 3.0))
    assert info.value.last_state is broken


def test_time_step_self_convergence():
    grid = build_grid(200, 0.04)
    p = patient1_parameters()
    sched = schedule_patient1(60, 100)
    coarse = simulate(grid, p, sched, 100.0, 0.01, cfg=StepConfig(dt=1 / 24))
    fine = simulate(grid, p, sched, 100.0, 0.01, cfg=StepConfig(dt=1 / 48))
    v_c, v_f = coarse.series.v_vis[-1], fine.series.v_vis[-1]
    assert abs(v_c - v_f) < 0.02 * v_f


def test_minres_iterations_on_day_300_system():
    # measured once at 237 iterations; the bound leaves a factor two of slack
    cfg = preset("patient1")
    grid = cfg.grid()
    res = simulate(grid, cfg.params, cfg.therapy(), 300.0, cfg.r0)
    st = Stepper(grid, cfg.params, cfg.therapy(), StepConfig(solver="minres"))
    system, K_mob = st.assemble(res.state, res.drug.phi_tau)
    st.solve(system, K_mob)
    assert st.last_iterations <= 2 * 237
