"""Quasi-static interstitial nutrient solve."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .mesh import RadialGrid, assemble_stiffness, lumped_weights
from .params import NutrientParameters


def reaction_coefficient(phi_p: np.ndarray, p: NutrientParameters) -> np.ndarray:
    phi_p = np.clip(phi_p, 0.0, 1.0)
    return p.eta_iv + p.alpha_h * (1.0 - phi_p) + p.alpha_p * phi_p


def solve_interstitial(grid: RadialGrid, phi_p: np.ndarray, p: NutrientParameters) -> np.ndarray:
    """Solve -kappa_i Lap(sigma) + c(phi_P) sigma = eta_vi * sigma_v with zero-flux ends.

    Reaction and source terms use the lumped mass, which makes the
    system an M-matrix: the solution stays within
    [eta_vi*sigma_v / max(c), eta_vi*sigma_v / min(c)].
    """
    coeff = reaction_coefficient(np.asarray(phi_p, dtype=float), p)
    if np.all(coeff <= 0):
        raise ValueError("nutrient reaction coefficient vanishes everywhere; operator is singular")
    w = lumped_weights(grid)
    A = assemble_stiffness(grid).scaled(p.kappa_i)
    ab = A.to_banded()
    ab[1] += w * coeff
    rhs = w * (p.eta_vi * p.sigma_v)
    return solve_banded((1, 1), ab, rhs)
