"""Extended-precision kernels for the badly conditioned reconstruction steps.

numpy's LAPACK bindings run in double precision only; these helpers use
``np.longdouble`` (80-bit on x86-64) for the few small dense operations
whose results are small differences of order-one quantities.
"""

from __future__ import annotations

import numpy as np

from .lattice import Potential

LD = np.longdouble
PI = LD("3.14159265358979323846264338327950288")


def legendre_rule(panel: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], Newton-polished in extended precision."""
    x0, _ = np.polynomial.legendre.leggauss(panel)
    x = x0.astype(LD)
    for _ in range(3):
        p_prev, p = np.ones_like(x), x.copy()
        for k in range(2, panel + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        dp = panel * (x * p - p_prev) / (x * x - 1)
        x = x - p / dp
    p_prev, p = np.ones_like(x), x.copy()
    for k in range(2, panel + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = panel * (x * p - p_prev) / (x * x - 1)
    return x, 2 / ((1 - x * x) * dp * dp)


def theta_rule(nodes: int, panel: int = 32) -> tuple[np.ndarray, np.ndarray]:
    panels = max(nodes // panel, 1)
    x, w = legendre_rule(panel)
    edges = np.linspace(LD(0), PI, panels + 1, dtype=LD)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _coeffs(jost) -> tuple[np.ndarray, np.ndarray]:
    rat = jost if hasattr(jost, "den") else jost.as_rational()
    return np.asarray(rat.num, dtype=LD), np.asarray(rat.den, dtype=LD)


def band_weights(jost, scale, theta: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Quadrature weights of ``scale * (2/pi) sin^2(theta) / |f_0|^2``."""
    num, den = _coeffs(jost)
    z = np.cos(theta) + 1j * np.sin(theta).astype(np.clongdouble)
    P = np.polynomial.polynomial
    f0 = P.polyval(z, num) / P.polyval(z, den)
    return wt * LD(scale) * 2 / PI * np.sin(theta) ** 2 / np.abs(f0) ** 2


def free_band_mass(jost, nodes: int = 256, tol: float = 1e-18, max_nodes: int = 1 << 16) -> np.ndarray:
    """``int (2/pi) sin^2(theta) / |f_0(exp(i theta))|^2 d theta`` over ``[0, pi]``."""
    prev = None
    while nodes <= max_nodes:
        th, wt = theta_rule(nodes)
        mass = np.sum(band_weights(jost, 1, th, wt))
        if prev is not None and abs(mass - prev) <= tol * abs(mass):
            return mass
        prev, nodes = mass, 2 * nodes
    raise ArithmeticError("band integral did not converge")


def forward_solution(V: Potential, lam, rows: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=LD)
    vals = np.asarray(V.padded(rows), dtype=LD)
    out = np.zeros((rows + 1,) + lam.shape, dtype=LD)
    out[1] = 1
    for n in range(1, rows):
        out[n + 1] = (2 + vals[n - 1] - lam) * out[n] - out[n - 1]
    return out


def decaying_z(lam) -> np.ndarray:
    """Root of ``z + 1/z = 2 - lam`` inside the unit disk, for ``lam`` off the band."""
    h = (2 - LD(lam)) / 2
    return 1 / (h + np.sign(h) * np.sqrt(h * h - 1))


def decaying_profile(V: Potential, lam: float, rows: int) -> np.ndarray:
    """Regular solution at a bound-state energy from the decaying Jost solution."""
    lam = LD(lam)
    z = decaying_z(lam)
    top = max(rows, V.support) + 1
    vals = np.asarray(V.padded(top), dtype=LD)
    f = np.zeros(top + 2, dtype=LD)
    f[top], f[top + 1] = z**top, z ** (top + 1)
    for n in range(top, 0, -1):
        f[n - 1] = (2 + (vals[n - 1] if n <= top else 0) - lam) * f[n] - f[n + 1]
    return f[: rows + 1] / f[1]


def _lu(M: np.ndarray, b: np.ndarray | None = None):
    # In-place elimination with partial pivoting; stops at a zero pivot.
    A = M.copy()
    x = None if b is None else b.copy()
    k = A.shape[0]
    sign = 1
    for j in range(k):
        p = j + int(np.argmax(np.abs(A[j:, j])))
        if p != j:
            A[[j, p]] = A[[p, j]]
            if x is not None:
                x[[j, p]] = x[[p, j]]
            sign = -sign
        if A[j, j] == 0:
            return A, x, sign, False
        f = A[j + 1 :, j] / A[j, j]
        A[j + 1 :, j:] -= np.outer(f, A[j, j:])
        if x is not None:
            x[j + 1 :] -= f * x[j]
    return A, x, sign, True


def lu_solve(M: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian elimination with partial pivoting in the dtype of ``M``.

    Returns the solution and the pivots (whose product is the determinant
    up to sign).  numpy's LAPACK routines only run in double precision.
    """
    A, x, sign, regular = _lu(M, b)
    if not regular:
        raise ZeroDivisionError("singular matrix")
    k = A.shape[0]
    for j in range(k - 1, -1, -1):
        x[j] = (x[j] - A[j, j + 1 :] @ x[j + 1 :]) / A[j, j]
    return x, np.diag(A) * np.append(sign, np.ones(k - 1, dtype=A.dtype))


def det(M: np.ndarray) -> np.ndarray:
    A, _, sign, regular = _lu(M)
    if not regular:
        return M.dtype.type(0)
    return sign * np.prod(np.diag(A))


def scaled_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve with a symmetric matrix after Jacobi scaling by its diagonal."""
    d = np.sqrt(np.abs(np.diag(M)))
    d = np.where(d == 0, 1, d)
    y, _ = lu_solve(M / d[:, None] / d[None, :], b / d)
    return y / d
