import numpy as np
import pytest

from nsclc_phasefield.drug import schedule_patient1
from nsclc_phasefield.linsolve import (BlockDiagonalPreconditioner, BlockSystem, SolverError,
                                       cahn_hilliard_preconditioner, solve_direct, solve_minres)
from nsclc_phasefield.mesh import SymTridiag, build_grid
from nsclc_phasefield.params import patient1_parameters
from nsclc_phasefield.stepper import Stepper


def _identity(n):
    return SymTridiag(np.ones(n), np.zeros(n - 1))


def _zero(n):
    return SymTridiag(np.zeros(n), np.zeros(n - 1))


def _random_spd_tridiag(rng, n):
    off = rng.uniform(-1, 1, n - 1)
    diag = np.abs(np.concatenate([[0], off])) + np.abs(np.concatenate([off, [0]])) + rng.uniform(0.5, 2, n)
    return SymTridiag(diag, off)


def test_identity_blocks():
    n = 7
    for k in range(2 * n):
        e = np.zeros(2 * n)
        e[k] = 1.0
        sys = BlockSystem(_identity(n), _zero(n), _identity(n), e[:n], e[n:])
        x, y = solve_direct(sys)
        assert np.array_equal(np.concatenate([x, y]), e)


def test_zero_rhs():
    rng = np.random.default_rng(0)
    n = 12
    sys = BlockSystem(_random_spd_tridiag(rng, n), _random_spd_tridiag(rng, n),
                      _random_spd_tridiag(rng, n).scaled(-1), np.zeros(n), np.zeros(n))
    x, y = solve_direct(sys)
    assert not np.any(x) and not np.any(y)


def test_random_system_against_dense_solve():
    rng = np.random.default_rng(42)
    n = 20
    A = _random_spd_tridiag(rng, n).scaled(-1.0)
    B = _random_spd_tridiag(rng, n)
    C = _random_spd_tridiag(rng, n)
    f, g = rng.normal(size=n), rng.normal(size=n)
    sys = BlockSystem(A, B, C, f, g)
    dense = sys.to_sparse().toarray()
    assert np.allclose(dense, dense.T)
    ref = np.linalg.solve(dense, np.concatenate([f, g]))
    x, y = solve_direct(sys)
    assert np.allclose(np.concatenate([x, y]), ref, rtol=1e-12, atol=1e-12)
    assert sys.residual(x, y) <= 1e-12


def test_singular_system_reported():
    n = 5
    sys = BlockSystem(_zero(n), _zero(n), _zero(n), np.ones(n), np.ones(n))
    with pytest.raises(SolverError):
        solve_direct(sys)


def _scenario_system(n_elements=99, t=0.0):
    grid = build_grid(n_elements, 0.04)
    params = patient1_parameters()
    stepper = Stepper(grid, params, schedule_patient1(296, 600))
    state = stepper.initial_state(0.01)
    system, K_mob = stepper.assemble(state, 5e17)
    return stepper, system, K_mob


def test_minres_matches_direct_on_scenario_step():
    stepper, system, K_mob = _scenario_system()
    g = stepper.params.growth
    pc = cahn_hilliard_preconditioner(stepper.M, K_mob, stepper.K, g.c_m, stepper.cfg.dt,
                                      g.eps_p, g.c_psi)
    mu_d, phi_d = solve_direct(system)
    mu_i, phi_i, its = solve_minres(system, pc)
    ref = np.concatenate([mu_d, phi_d])
    got = np.concatenate([mu_i, phi_i])
    assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)
    assert its < 500


def test_preconditioner_blocks_spd():
    stepper, _, K_mob = _scenario_system(60)
    g = stepper.params.growth
    s = np.sqrt(g.c_m * stepper.cfg.dt)
    P1 = (K_mob.scaled(g.c_m * stepper.cfg.dt) + stepper.M.scaled(s)).to_dense()
    P2 = (stepper.K.scaled(g.eps_p**2) + stepper.M.scaled(6 * g.c_psi / s)).to_dense()
    for P in (P1, P2):
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0


def test_minres_iteration_cap():
    stepper, system, K_mob = _scenario_system()
    with pytest.raises(SolverError) as info:
        solve_minres(system, None, rtol=1e-14, maxiter=3)
    assert info.value.residual is not None and info.value.residual > 0


def test_solvers_deterministic():
    _, system, K_mob = _scenario_system()
    a = solve_direct(system)
    b = solve_direct(system)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_non_spd_preconditioner_rejected():
    n = 4
    with pytest.raises(SolverError):
        BlockDiagonalPreconditioner(_identity(n).scaled(-1), _identity(n))
