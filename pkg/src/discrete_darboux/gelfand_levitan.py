"""Generic Gel'fand-Levitan transformation between two spectral densities.

The kernel ``G[n, m] = int phi_n phi_m d(rho_tilde - rho)`` is built by
quadrature, the lower-triangular system for ``A`` is solved row by row and
the transformed potential and regular solution are read off from ``A``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import (
    Potential,
    jost_function,
    z_of_lambda,
)
from .spectral import SpectralDensity
from ._extended import LD as _LD, band_weights, decaying_profile, det, forward_solution, lu_solve, theta_rule

__all__ = [
    "GLKernel",
    "GLSolution",
    "GLTransform",
    "QuadratureError",
    "SingularKernelError",
    "gl_kernel_from_densities",
    "solve_gl",
    "gl_transform",
    "determinant_ratio",
]

KERNEL_TOL = 1e-12
CONDITION_LIMIT = 1e12
DET_RATIO_SITES = 8
DET_RATIO_RTOL = 1e-8
MAX_NODES = 1 << 14


class QuadratureError(RuntimeError):
    """The kernel quadrature did not settle under node doubling."""


class SingularKernelError(ArithmeticError):
    """``I + G`` is numerically singular for the system of row ``n``."""

    def __init__(self, n: int, condition: float):
        super().__init__(f"I + G is singular for row {n} (condition {condition:.3e})")
        self.n = n
        self.condition = condition


@dataclass(frozen=True)
class GLKernel:
    """Symmetric kernel ``G[n, m]`` for ``1 <= n, m <= size``.

    ``entries`` is stored 0-based; ``nodes`` is the quadrature size reached.
    """

    entries: np.ndarray
    nodes: int = 0
    change: float = 0.0

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def __call__(self, n: int, m: int) -> float:
        return float(self.entries[n - 1, m - 1])

    def block(self, k: int) -> np.ndarray:
        """``G[1..k, 1..k]``."""
        return self.entries[:k, :k]

    def vector(self, k: int) -> np.ndarray:
        """``G[k+1, 1..k]``."""
        return self.entries[k, :k]

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T), initial=0.0))


@dataclass(frozen=True)
class GLSolution:
    """``A[n, m]`` for ``1 <= m < n`` stored 1-based in a square array (zero elsewhere)."""

    A: np.ndarray  # extended precision
    residuals: np.ndarray
    conditions: np.ndarray
    determinant_ratio_residual: float

    @property
    def n_rows(self) -> int:
        return self.A.shape[0] - 1

    def subdiagonal(self) -> np.ndarray:
        """``A[n+1, n]`` for ``n = 0 .. n_rows - 1`` with ``A[1, 0] = 0``."""
        n = np.arange(1, self.n_rows)
        return np.concatenate([[0.0], self.A[n + 1, n]])


def _atom_profile(V: Potential, lam: float, rows: int, jd) -> np.ndarray:
    z = complex(z_of_lambda(lam).z).real
    if abs(jd(z)) <= 1e-8 * jd.scale:
        return decaying_profile(V, lam, rows)
    return forward_solution(V, lam, rows)


def _kernel_at(V: Potential, rho: SpectralDensity, rho_tilde: SpectralDensity, rows: int, nodes: int, profiles) -> np.ndarray:
    theta, wt = theta_rule(nodes)
    dw = band_weights(rho_tilde.jost, rho_tilde.continuous_scale, theta, wt) - band_weights(
        rho.jost, rho.continuous_scale, theta, wt
    )
    phi = forward_solution(V, 2 - 2 * np.cos(theta), rows)[1:]
    G = (phi * dw) @ phi.T
    for sign, atoms in ((1, rho_tilde.atoms), (-1, rho.atoms)):
        for lam_s, c in sorted(atoms):
            p = profiles[lam_s][1:]
            G += sign * _LD(c) * np.outer(p, p)
    return G


def gl_kernel_from_densities(
    V: Potential,
    rho: SpectralDensity,
    rho_tilde: SpectralDensity,
    n_max: int,
    *,
    nodes: int = 256,
    tol: float = KERNEL_TOL,
) -> GLKernel:
    """Kernel of size ``n_max + 1`` from two spectral densities.

    The kernel is assembled in extended precision: the system solved from it
    is badly conditioned, and the transformed potential is a small difference
    of order-one entries of the solution.  Atoms at bound-state energies of
    ``V`` use the decaying solution, which stays accurate where forward
    recursion would not.  The quadrature is doubled until the kernel changes
    by less than ``tol`` relative to ``max(1, max |G|)``.
    """
    for r, name in ((rho, "rho"), (rho_tilde, "rho_tilde")):
        if abs(r.mass - 1) > 1e-8:
            raise ValueError(f"{name} has mass {r.mass!r}, expected 1")
    rows = n_max + 1
    jd = jost_function(V)
    profiles = {lam: _atom_profile(V, lam, rows, jd) for lam, _ in rho.atoms + rho_tilde.atoms}
    G = _kernel_at(V, rho, rho_tilde, rows, nodes, profiles)
    while True:
        G2 = _kernel_at(V, rho, rho_tilde, rows, 2 * nodes, profiles)
        change = float(np.max(np.abs(G2 - G)))
        if change <= tol * max(1.0, float(np.max(np.abs(G2)))):
            return GLKernel((G2 + G2.T) / 2, 2 * nodes, change)
        nodes *= 2
        G = G2
        if nodes > MAX_NODES:
            raise QuadratureError(f"kernel changed by {change:.3e} at {nodes} nodes")


def determinant_ratio(G: np.ndarray, n: int, m: int) -> float:
    """``A[n, m]`` by Cramer's rule on ``I + G[1..n-1, 1..n-1]``."""
    k = n - 1
    M = np.eye(k, dtype=G.dtype) + G[:k, :k]
    num = M.copy()
    num[m - 1, :] = -G[n - 1, :k]
    return det(num) / det(M)


def solve_gl(kernel: GLKernel | np.ndarray, n_max: int | None = None) -> GLSolution:
    """Solve ``A[n, m] + G[n, m] + sum_{j<n} A[n, j] G[j, m] = 0`` for ``m < n``.

    Rows ``n = 2 .. n_max`` are solved directly; for ``n <= 8`` the entries
    are recomputed as determinant ratios and compared.
    """
    G = kernel.entries if isinstance(kernel, GLKernel) else np.asarray(kernel)
    G = G.astype(_LD)
    size = G.shape[0]
    n_max = size if n_max is None else n_max
    if n_max > size:
        raise ValueError(f"kernel has {size} rows, {n_max} requested")
    A = np.zeros((n_max + 1, n_max + 1), dtype=_LD)
    residuals = np.zeros(n_max + 1)
    conditions = np.ones(n_max + 1)
    det_res = 0.0
    for n in range(2, n_max + 1):
        k = n - 1
        M = np.eye(k, dtype=_LD) + G[:k, :k]
        cond = float(np.linalg.cond(M.astype(float)))
        conditions[n] = cond
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularKernelError(n, cond)
        g = G[n - 1, :k]
        row, _ = lu_solve(M.T, -g)
        A[n, 1:n] = row
        residuals[n] = float(np.max(np.abs(row @ M + g))) / max(1.0, float(np.max(np.abs(row))))
        if n <= DET_RATIO_SITES:
            ratios = np.array([determinant_ratio(G, n, m) for m in range(1, n)])
            det_res = max(det_res, float(np.max(np.abs(ratios - row)) / max(np.max(np.abs(row)), 1e-300)))
    if det_res > DET_RATIO_RTOL:
        raise ArithmeticError(f"determinant-ratio path disagrees by {det_res:.3e}")
    return GLSolution(A, residuals, conditions, det_res)


@dataclass(frozen=True)
class GLTransform:
    """Transformed potential and regular solution obtained from ``A``."""

    potential: Potential
    solution: GLSolution
    V_tilde: np.ndarray

    def phi_tilde(self, lam) -> np.ndarray:
        """``phi_n + sum_{m<n} A[n, m] phi_m`` for ``n = 0 .. n_rows``."""
        rows = self.solution.n_rows
        phi = forward_solution(self.potential, lam, rows)
        return (phi + np.tensordot(self.solution.A, phi, axes=(1, 0))).astype(float)

    __call__ = phi_tilde


def gl_transform(V: Potential, sol: GLSolution, n_max: int | None = None) -> GLTransform:
    """``V_tilde[n] = V[n] + A[n+1, n] - A[n, n-1]`` for ``n = 1 .. n_max``."""
    n_max = sol.n_rows - 1 if n_max is None else n_max
    if n_max > sol.n_rows - 1:
        raise ValueError(f"solution covers {sol.n_rows} rows, need {n_max + 1}")
    sub = sol.subdiagonal()
    Vt = (V.padded(n_max).astype(_LD) + sub[1 : n_max + 1] - sub[:n_max]).astype(float)
    return GLTransform(V, sol, Vt)
