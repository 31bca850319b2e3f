"""Constitutive relations: double-well potential, mobility and reaction terms.

All functions accept scalars or nodal arrays.  Reaction terms and the
mobility clamp their phase-field inputs to [0, 1] before evaluation.
"""

from __future__ import annotations

import numpy as np

from .mesh import RadialGrid, assemble_stiffness, integrate
from .params import GrowthParameters, TherapyEffectParameters


def _clip01(x):
    return np.clip(x, 0.0, 1.0)


def heaviside(x):
    """Step function with H(0) = 0."""
    return np.where(np.asarray(x) > 0.0, 1.0, 0.0)


def double_well(phi, c_psi):
    phi = np.asarray(phi, dtype=float)
    return c_psi * phi**2 * (1.0 - phi) ** 2


def double_well_convex(phi, c_psi):
    return 1.5 * c_psi * np.asarray(phi, dtype=float) ** 2


def double_well_concave(phi, c_psi):
    phi = np.asarray(phi, dtype=float)
    return c_psi * (-2.0 * phi**3 - 0.5 * phi**2 + phi**4)


def d_double_well_convex(phi, c_psi):
    return 3.0 * c_psi * np.asarray(phi, dtype=float)


def d_double_well_concave(phi, c_psi):
    phi = np.asarray(phi, dtype=float)
    return c_psi * (-6.0 * phi**2 - phi + 4.0 * phi**3)


def dd_double_well_concave(phi, c_psi):
    phi = np.asarray(phi, dtype=float)
    return c_psi * (-12.0 * phi - 1.0 + 12.0 * phi**2)


def potential(phi_p, phi_n, c_psi):
    """Psi(phi_P, phi_T) = psi(phi_P) + psi(phi_P + phi_N)."""
    return double_well(phi_p, c_psi) + double_well(np.asarray(phi_p) + phi_n, c_psi)


def split_potential_derivatives(phi_p, phi_n, c_psi):
    """Derivatives of the convex and concave parts of Psi with respect to phi_P.

    Returns ``(implicit, explicit)``; their sum is dPsi/dphi_P.
    """
    phi_t = np.asarray(phi_p, dtype=float) + phi_n
    implicit = d_double_well_convex(phi_p, c_psi) + d_double_well_convex(phi_t, c_psi)
    explicit = d_double_well_concave(phi_p, c_psi) + d_double_well_concave(phi_t, c_psi)
    return implicit, explicit


def mobility(phi_p, phi_t):
    phi_p, phi_t = _clip01(phi_p), _clip01(phi_t)
    return phi_p**2 * (1.0 - phi_t) ** 2


def gompertz_growth(phi_p, sigma, p: GrowthParameters):
    phi_p = _clip01(phi_p)
    return p.lambda_pro * sigma * phi_p**p.lam * np.log((1.0 + p.eps_g) / (phi_p + p.eps_g))


def therapy_kill(phi_p, phi_tau, q: TherapyEffectParameters):
    """Immunotherapy decay term (non-positive)."""
    phi_p = _clip01(phi_p)
    hill = phi_tau / (phi_tau + q.phi50)
    return -(q.lambda_eff / q.weight) * phi_p * hill


def necrosis_rate(phi_p, sigma, p: GrowthParameters):
    """Conversion rate of proliferative into necrotic cells (non-negative)."""
    return p.lambda_pn * heaviside(p.sigma_pn - np.asarray(sigma)) * _clip01(phi_p)


def source_S_P(phi_p, sigma, phi_tau, p: GrowthParameters, q: TherapyEffectParameters):
    return gompertz_growth(phi_p, sigma, p) + therapy_kill(phi_p, phi_tau, q) - necrosis_rate(phi_p, sigma, p)


def source_S_N(phi_p, sigma, p: GrowthParameters):
    return necrosis_rate(phi_p, sigma, p)


def free_energy(grid: RadialGrid, phi_p, phi_n, eps_p: float, c_psi: float) -> float:
    """Ginzburg-Landau energy int Psi + eps^2/2 |phi_P'|^2 over the ball.

    The bulk term integrates the nodal interpolant of Psi; the gradient
    term is exact for the P1 field.
    """
    phi_p = np.asarray(phi_p, dtype=float)
    bulk = integrate(grid, potential(phi_p, phi_n, c_psi))
    # sum over elements of k_e (phi_{i+1} - phi_i)^2 equals phi^T K phi without cancellation
    k = -assemble_stiffness(grid).off
    return bulk + 0.5 * eps_p**2 * float(k @ np.diff(phi_p) ** 2)
