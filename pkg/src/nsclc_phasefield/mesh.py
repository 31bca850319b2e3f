"""Radial P1 finite elements under the spherical volume measure 4*pi*r^2 dr."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

FOUR_PI = 4.0 * np.pi

# 3-point Gauss-Legendre on [0, 1]; exact for polynomials up to degree 5.
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = 0.5 * np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial mesh on [0, R]."""

    node_radii: np.ndarray
    n_elements: int
    R: float

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def h(self) -> float:
        return self.R / self.n_elements

    @property
    def ball_volume(self) -> float:
        return FOUR_PI * self.R**3 / 3.0

    @property
    def element_shell_volumes(self) -> np.ndarray:
        r = self.node_radii
        return FOUR_PI * (r[1:] ** 3 - r[:-1] ** 3) / 3.0


def build_grid(n_elements: int, R: float) -> RadialGrid:
    if int(n_elements) != n_elements or n_elements < 2:
        raise ValueError(f"n_elements must be an integer >= 2, got {n_elements!r}")
    if not R > 0:
        raise ValueError(f"domain radius must be positive, got {R!r}")
    n_elements = int(n_elements)
    radii = R * np.arange(n_elements + 1) / n_elements
    radii[-1] = R
    radii.setflags(write=False)
    return RadialGrid(node_radii=radii, n_elements=n_elements, R=float(R))


@dataclass(frozen=True)
class SymTridiag:
    """Symmetric tridiagonal operator over grid nodes.

    ``diag`` has one entry per node and ``off`` one entry per element
    (coupling node i with node i + 1).
    """

    diag: np.ndarray
    off: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    __matmul__ = matvec

    def row_sums(self) -> np.ndarray:
        return self.matvec(np.ones(self.n))

    def scaled(self, a: float) -> "SymTridiag":
        return SymTridiag(a * self.diag, a * self.off)

    def __add__(self, other: "SymTridiag") -> "SymTridiag":
        return SymTridiag(self.diag + other.diag, self.off + other.off)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def to_banded(self) -> np.ndarray:
        """LAPACK (1, 1) banded layout for :func:`scipy.linalg.solve_banded`."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        ab[2, :-1] = self.off
        return ab


def _element_mass(grid: RadialGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local mass entries (m00, m01, m11) per element, exact under r^2 weight."""
    r = grid.node_radii
    a, h = r[:-1, None], np.diff(r)[:, None]
    x = _GAUSS_X[None, :]
    w = FOUR_PI * (a + h * x) ** 2 * h * _GAUSS_W[None, :]
    m00 = np.sum(w * (1 - x) ** 2, axis=1)
    m01 = np.sum(w * (1 - x) * x, axis=1)
    m11 = np.sum(w * x**2, axis=1)
    return m00, m01, m11


def assemble_mass(grid: RadialGrid) -> SymTridiag:
    m00, m01, m11 = _element_mass(grid)
    diag = np.zeros(grid.n_nodes)
    diag[:-1] += m00
    diag[1:] += m11
    return SymTridiag(diag, m01)


def assemble_stiffness(grid: RadialGrid, weight_field: np.ndarray | float = 1.0) -> SymTridiag:
    """Weighted stiffness K_ij = int w phi_i' phi_j' 4 pi r^2 dr.

    Nodal weights are averaged per element, so the weight is piecewise
    constant inside the integral.
    """
    w = np.broadcast_to(np.asarray(weight_field, dtype=float), (grid.n_nodes,))
    if np.any(w < 0):
        raise ValueError("stiffness weight must be non-negative")
    w_elem = 0.5 * (w[:-1] + w[1:])
    k = w_elem * grid.element_shell_volumes / np.diff(grid.node_radii) ** 2
    diag = np.zeros(grid.n_nodes)
    diag[:-1] += k
    diag[1:] += k
    return SymTridiag(diag, -k)


@lru_cache(maxsize=32)
def lumped_weights(grid: RadialGrid) -> np.ndarray:
    """Row sums of the mass matrix: int phi_i 4 pi r^2 dr."""
    w = assemble_mass(grid).row_sums()
    w.setflags(write=False)
    return w


def integrate(grid: RadialGrid, nodal_field: np.ndarray) -> float:
    """Exact integral of the piecewise-linear interpolant over the ball."""
    f = np.broadcast_to(np.asarray(nodal_field, dtype=float), (grid.n_nodes,))
    return float(lumped_weights(grid) @ f)
