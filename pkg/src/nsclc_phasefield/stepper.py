"""Time stepping of the reduced radial model.

One step advances, in this order: the drug ODE over [t, t + dt], the
Cahn-Hilliard pair (phi_P, mu_P) with a convex-concave split of the
double well, the necrotic field by explicit Euler, the optional cutoff
of the stored fields, and finally the nutrient field for the new phi_P.
Every explicit term uses the fields from the start of the step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import constitutive as cst
from .drug import DrugState, TherapySchedule, step_drug
from .linsolve import (BlockSystem, SolverError, cahn_hilliard_preconditioner, solve_direct,
                       solve_minres)
from .mesh import RadialGrid, SymTridiag, assemble_stiffness, lumped_weights
from .nutrient import solve_interstitial
from .params import ModelParameters

CLAMP_MODES = ("state", "rhs")
SOLVERS = ("direct", "minres")


class NumericalFailure(RuntimeError):
    """Raised when a step produces non-finite values or a linear solve fails."""

    def __init__(self, message: str, last_state: "FieldState | None" = None,
                 last_drug: DrugState | None = None):
        super().__init__(message)
        self.last_state = last_state
        self.last_drug = last_drug
        self.series = None  # partial records, filled in by simulate()


@dataclass(frozen=True)
class FieldState:
    phi_p: np.ndarray
    phi_n: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    t: float = 0.0

    @property
    def phi_t(self) -> np.ndarray:
        return self.phi_p + self.phi_n


@dataclass(frozen=True)
class StepConfig:
    dt: float = 1.0 / 24.0
    drug_substeps: int = 32
    clamp: str = "state"
    solver: str = "direct"
    minres_rtol: float = 1e-12
    minres_maxiter: int = 500

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.drug_substeps < 1:
            raise ValueError("drug_substeps must be >= 1")
        if self.clamp not in CLAMP_MODES:
            raise ValueError(f"clamp must be one of {CLAMP_MODES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")


def _diag_op(values: np.ndarray) -> SymTridiag:
    return SymTridiag(np.asarray(values, dtype=float), np.zeros(values.size - 1))


class Stepper:
    """Holds the grid-dependent operators shared by every step of one run."""

    def __init__(self, grid: RadialGrid, params: ModelParameters, schedule: TherapySchedule,
                 cfg: StepConfig | None = None, dose_scale: float = 1.0):
        if dose_scale < 0:
            raise ValueError("dose_scale must be non-negative")
        self.grid = grid
        self.params = params
        self.schedule = schedule
        self.cfg = cfg or StepConfig()
        self.dose_scale = dose_scale
        self.w = lumped_weights(grid)
        self.M = _diag_op(self.w)
        self.K = assemble_stiffness(grid)
        self.last_iterations: int | None = None

    # -- pieces -------------------------------------------------------------

    def chemical_potential(self, phi_p, phi_n, sigma) -> np.ndarray:
        """mu_P from its defining equation for given fields."""
        g = self.params.growth
        dpsi = sum(cst.split_potential_derivatives(phi_p, phi_n, g.c_psi))
        return dpsi + g.eps_p**2 * self.K.matvec(phi_p) / self.w - g.chi * sigma

    def assemble(self, state: FieldState, phi_tau: float) -> tuple[BlockSystem, SymTridiag]:
        """Block system for (mu^{n+1}, phi_P^{n+1}).

        Rows (mass-lumped, sign-flipped to make the matrix symmetric):
            -dt c_m K_m mu - M phi             = -M (phi^n + dt S_P)
            -M mu + (eps^2 K + 6 c_psi M) phi  = -M (3 c_psi phi_N^n + dPsi_e(phi^n) - chi sigma^n)
        """
        g, dt = self.params.growth, self.cfg.dt
        phi_p, phi_n, sigma = state.phi_p, state.phi_n, state.sigma
        K_mob = assemble_stiffness(self.grid, cst.mobility(phi_p, phi_p + phi_n))
        src = cst.source_S_P(phi_p, sigma, phi_tau, g, self.params.therapy)
        _, dpsi_e = cst.split_potential_derivatives(phi_p, phi_n, g.c_psi)
        return BlockSystem(
            A=K_mob.scaled(-dt * g.c_m),
            B=self.M.scaled(-1.0),
            C=self.K.scaled(g.eps_p**2) + self.M.scaled(6.0 * g.c_psi),
            f=-self.w * (phi_p + dt * src),
            g=-self.w * (3.0 * g.c_psi * phi_n + dpsi_e - g.chi * sigma),
        ), K_mob

    def solve(self, system: BlockSystem, K_mob: SymTridiag, solver: str | None = None):
        solver = solver or self.cfg.solver
        if solver == "direct":
            mu, phi = solve_direct(system)
            self.last_iterations = None
            return mu, phi
        g = self.params.growth
        pc = cahn_hilliard_preconditioner(self.M, K_mob, self.K, g.c_m, self.cfg.dt,
                                          g.eps_p, g.c_psi)
        mu, phi, its = solve_minres(system, pc, rtol=self.cfg.minres_rtol,
                                    maxiter=self.cfg.minres_maxiter)
        self.last_iterations = its
        return mu, phi

    # -- full step ----------------------------------------------------------

    def step(self, state: FieldState, drug: DrugState) -> tuple[FieldState, DrugState]:
        cfg, p = self.cfg, self.params
        drug_new = step_drug(DrugState(drug.phi_tau, state.t), cfg.dt, cfg.drug_substeps,
                             self.schedule, p.drug, self.dose_scale)
        system, K_mob = self.assemble(state, drug_new.phi_tau)
        try:
            mu, phi_p = self.solve(system, K_mob)
        except SolverError as exc:
            raise NumericalFailure(f"linear solve failed at t={state.t:.4f} d: {exc}",
                                   state, drug) from exc
        phi_n = state.phi_n + cfg.dt * cst.source_S_N(state.phi_p, state.sigma, p.growth)
        if cfg.clamp == "state":
            phi_p = np.clip(phi_p, 0.0, 1.0)
            phi_n = np.clip(phi_n, 0.0, 1.0 - phi_p)
        if not (np.all(np.isfinite(phi_p)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(phi_n))):
            raise NumericalFailure(f"non-finite field values at t={state.t:.4f} d", state, drug)
        sigma = solve_interstitial(self.grid, phi_p, p.nutrient)
        t_new = state.t + cfg.dt
        return FieldState(phi_p, phi_n, mu, sigma, t_new), replace(drug_new, t=t_new)

    def initial_state(self, r0: float) -> FieldState:
        return initial_condition(self.grid, r0, self.params)


def initial_condition(grid: RadialGrid, r0: float, params: ModelParameters) -> FieldState:
    """Proliferative tanh ball of radius ``r0``; no necrotic cells."""
    if not 0 < r0 < grid.R:
        raise ValueError(f"initial radius must lie in (0, {grid.R}), got {r0}")
    g = params.growth
    r = grid.node_radii
    phi_p = 0.5 * (1.0 - np.tanh((r - r0) / (np.sqrt(2.0) * g.eps_p)))
    phi_n = np.zeros_like(phi_p)
    sigma = solve_interstitial(grid, phi_p, params.nutrient)
    K = assemble_stiffness(grid)
    dpsi = sum(cst.split_potential_derivatives(phi_p, phi_n, g.c_psi))
    mu = dpsi + g.eps_p**2 * K.matvec(phi_p) / lumped_weights(grid) - g.chi * sigma
    return FieldState(phi_p, phi_n, mu, sigma, 0.0)
