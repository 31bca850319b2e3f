"""Solvers for the symmetric 2x2 block system of a Cahn-Hilliard step.

The system is ``[[A, B], [B, C]] @ [x; y] = [f; g]`` with every block a
symmetric tridiagonal operator over the grid nodes.  In the stepper the
first unknown is the chemical potential and the second the phase field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .mesh import SymTridiag


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the last relative residual if known."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class BlockSystem:
    A: SymTridiag
    B: SymTridiag
    C: SymTridiag
    f: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])

    def matvec(self, z: np.ndarray) -> np.ndarray:
        x, y = z[: self.n], z[self.n :]
        return np.concatenate([self.A @ x + self.B @ y, self.B @ x + self.C @ y])

    def to_sparse(self) -> sp.csr_matrix:
        B = self.B.to_sparse()
        return sp.bmat([[self.A.to_sparse(), B], [B, self.C.to_sparse()]], format="csr")

    def residual(self, x: np.ndarray, y: np.ndarray) -> float:
        """Relative residual ||rhs - K z|| / ||rhs|| (absolute if rhs = 0)."""
        r = self.rhs - self.matvec(np.concatenate([x, y]))
        scale = np.linalg.norm(self.rhs)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def _interleaved_banded(sys: BlockSystem) -> np.ndarray:
    """Pack the block matrix, unknowns ordered (x0, y0, x1, y1, ...), into (3, 3) band storage."""
    n = sys.n
    ab = np.zeros((7, 2 * n))
    u = 3

    def put(rows, cols, vals):
        ab[u + rows - cols, cols] = vals

    i = np.arange(n)
    j = np.arange(n - 1)
    for blk, ro, co in ((sys.A, 0, 0), (sys.B, 0, 1), (sys.B, 1, 0), (sys.C, 1, 1)):
        put(2 * i + ro, 2 * i + co, blk.diag)
        put(2 * j + ro, 2 * (j + 1) + co, blk.off)
        put(2 * (j + 1) + ro, 2 * j + co, blk.off)
    return ab


def solve_direct(sys: BlockSystem) -> tuple[np.ndarray, np.ndarray]:
    """Banded LU solve of the full block system."""
    rhs = np.empty(2 * sys.n)
    rhs[0::2] = sys.f
    rhs[1::2] = sys.g
    if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(sys.A.diag))):
        raise SolverError("non-finite entries in block system")
    try:
        z = solve_banded((3, 3), _interleaved_banded(sys), rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular block system: {exc}") from exc
    if not np.all(np.isfinite(z)):
        raise SolverError("direct solve produced non-finite values")
    return z[0::2], z[1::2]


class BlockDiagonalPreconditioner:
    """Inverse of diag(P1, P2) via banded Cholesky factors of each SPD block."""

    def __init__(self, P1: SymTridiag, P2: SymTridiag):
        self.n = P1.n
        try:
            self._c1 = cholesky_banded(P1.to_banded()[:2], lower=False)
            self._c2 = cholesky_banded(P2.to_banded()[:2], lower=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"preconditioner block not positive definite: {exc}") from exc

    def apply(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        return np.concatenate([
            cho_solve_banded((self._c1, False), z[:n]),
            cho_solve_banded((self._c2, False), z[n:]),
        ])


def cahn_hilliard_preconditioner(M: SymTridiag, K_mob: SymTridiag, K: SymTridiag,
                                 c_m: float, tau: float, eps: float, c_psi: float
                                 ) -> BlockDiagonalPreconditioner:
    """diag(c_m tau K_mob + sqrt(c_m tau) M,  eps^2 K + 6 c_psi / sqrt(c_m tau) M).

    ``K_mob`` is the stiffness weighted by the (lagged) mobility without the
    factor ``c_m``; ``K`` has unit weight.
    """
    s = np.sqrt(c_m * tau)
    P1 = K_mob.scaled(c_m * tau) + M.scaled(s)
    P2 = K.scaled(eps**2) + M.scaled(6.0 * c_psi / s)
    return BlockDiagonalPreconditioner(P1, P2)


def minres(matvec, b: np.ndarray, precond=None, rtol: float = 1e-10, maxiter: int = 500,
           x0: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Preconditioned MINRES for a symmetric operator and an SPD preconditioner.

    Stops once the preconditioned residual norm ``sqrt(r^T P^{-1} r)`` has
    dropped by ``rtol`` relative to its initial value.  Returns
    ``(x, iterations, relative preconditioned residual)``; if the cap is
    hit the returned residual exceeds ``rtol``.
    """
    apply_p = precond if precond is not None else (lambda v: v.copy())
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    v_old = np.zeros_like(b)
    v = b - matvec(x)
    z = apply_p(v)
    gamma = np.sqrt(max(float(z @ v), 0.0))
    if gamma == 0.0:
        return x, 0, 0.0
    gamma0 = gamma
    gamma_old = 1.0
    eta = gamma
    c_old, c, s_old, s = 1.0, 1.0, 0.0, 0.0
    w_old = np.zeros_like(b)
    w = np.zeros_like(b)
    rel = 1.0
    for it in range(1, maxiter + 1):
        z = z / gamma
        Az = matvec(z)
        delta = float(Az @ z)
        v_new = Az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = apply_p(v_new)
        gamma_new = np.sqrt(max(float(z_new @ v_new), 0.0))
        a0 = c * delta - c_old * s * gamma
        a1 = np.hypot(a0, gamma_new)
        a2 = s * delta + c_old * c * gamma
        a3 = s_old * gamma
        c_new, s_new = a0 / a1, gamma_new / a1
        w_new = (z - a3 * w_old - a2 * w) / a1
        x = x + c_new * eta * w_new
        eta = -s_new * eta
        rel = abs(eta) / gamma0
        if rel <= rtol or gamma_new == 0.0:
            return x, it, rel
        v_old, v = v, v_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c = c, c_new
        s_old, s = s, s_new
        w_old, w = w, w_new
    return x, maxiter, rel


def solve_minres(sys: BlockSystem, precond: BlockDiagonalPreconditioner | None = None,
                 rtol: float = 1e-10, maxiter: int = 500,
                 x0: tuple[np.ndarray, np.ndarray] | None = None
                 ) -> tuple[np.ndarray, np.ndarray, int]:
    """Preconditioned MINRES on the block system.  Returns ``(x, y, iterations)``."""
    start = None if x0 is None else np.concatenate(x0)
    z, its, rel = minres(sys.matvec, sys.rhs, None if precond is None else precond.apply,
                         rtol=rtol, maxiter=maxiter, x0=start)
    x, y = z[: sys.n], z[sys.n :]
    if not np.all(np.isfinite(z)):
        raise SolverError("MINRES produced non-finite values", iterations=its)
    if rel > rtol:
        raise SolverError(f"MINRES did not converge in {its} iterations "
                          f"(preconditioned residual {rel:.3e})",
                          residual=sys.residual(x, y), iterations=its)
    return x, y, its
