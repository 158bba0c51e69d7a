"""Potentials, the lambda <-> z parameter maps and the basic recursions.

The operator is ``-psi[n+1] + 2 psi[n] - psi[n-1] + V[n] psi[n] = lam psi[n]``
on sites ``n >= 1`` with ``psi[0] = 0``.  Writing ``lam = 2 - z - 1/z`` turns
the continuous spectrum ``[0, 4]`` into the upper unit semicircle and the
bound-state energies into real ``z`` inside the unit disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Potential",
    "SpectralPoint",
    "RegularPolynomial",
    "JostData",
    "RationalJost",
    "JostIterationError",
    "z_of_lambda",
    "lambda_of_z",
    "regular_solution",
    "regular_solution_derivative",
    "regular_polynomial_coeffs",
    "jost_solution",
    "jost_solution_iterative",
    "jost_function",
    "bound_state_profile",
    "regular_solution_stable",
    "wronskian_identity_residual",
    "recursion_residual",
]


class JostIterationError(RuntimeError):
    """The Neumann iteration for the Jost solution did not converge."""

    def __init__(self, iterations: int, increment: float):
        super().__init__(
            f"Jost iteration did not converge after {iterations} iterates "
            f"(last increment {increment:.3e})"
        )
        self.iterations = iterations
        self.increment = increment


@dataclass(frozen=True)
class Potential:
    """Compactly supported real potential ``V_1..V_b``.

    ``values[k]`` holds ``V_{k+1}``; sites beyond the support carry zero.
    """

    values: tuple[float, ...] = ()

    def __init__(self, values: Sequence[float] = ()):
        vals = tuple(float(v) for v in np.asarray(values, dtype=float).ravel())
        if not all(np.isfinite(vals)):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def support(self) -> int:
        return len(self.values)

    @property
    def faddeev_weight(self) -> float:
        return float(sum((n + 1) * abs(v) for n, v in enumerate(self.values)))

    def __call__(self, n: int) -> float:
        """Value at site ``n`` (1-based), zero outside the support."""
        return self.values[n - 1] if 1 <= n <= self.support else 0.0

    def padded(self, length: int) -> np.ndarray:
        """Array ``[V_1, ..., V_length]`` padded with zeros."""
        out = np.zeros(length)
        k = min(length, self.support)
        out[:k] = self.values[:k]
        return out

    @classmethod
    def truncate(cls, values: Sequence[float], cut: int) -> tuple["Potential", float]:
        """Keep ``V_1..V_cut`` and report the discarded weight ``sum n |V_n|``."""
        arr = np.asarray(values, dtype=float)
        n = np.arange(1, arr.size + 1)
        discarded = float(np.sum(n[cut:] * np.abs(arr[cut:])))
        return cls(arr[:cut]), discarded

    def to_json(self) -> dict:
        return {"values": list(self.values), "support": self.support}

    @classmethod
    def from_json(cls, obj: dict) -> "Potential":
        if not isinstance(obj, dict) or "values" not in obj:
            raise ValueError("potential JSON needs a 'values' list")
        values = obj["values"]
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            raise ValueError("'values' must be a list of numbers")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("'values' must be finite")
        support = obj.get("support", len(values))
        if not isinstance(support, int) or support != len(values):
            raise ValueError(
                f"'support' ({support!r}) must equal the number of values ({len(values)})"
            )
        return cls(values)


@dataclass(frozen=True)
class SpectralPoint:
    lam: complex | float
    z: complex

    def in_band(self) -> bool:
        return abs(np.imag(self.lam)) == 0 and 0 <= np.real(self.lam) <= 4


def _real_if_close(x: complex, scale: float) -> complex | float:
    if abs(x.imag) <= 1e-14 * scale:
        return float(x.real)
    return x


def z_of_lambda(lam: complex | float) -> SpectralPoint:
    """Map ``lam`` to the root ``z`` of ``z^2 - (2 - lam) z + 1`` with ``|z| <= 1``.

    On the band the upper-half-circle root is returned; below the band ``z``
    lies in ``(0, 1)`` and above it in ``(-1, 0)``.
    """
    lam_c = complex(lam)
    if not np.isfinite(lam_c):
        raise ValueError("lambda must be finite")
    root = np.sqrt(lam_c) * np.sqrt(lam_c - 4)
    z = 1 - lam_c / 2 + root / 2
    if abs(z) > 1 + 1e-14:
        z = 1 / z
    if np.isreal(lam) and 0 <= lam_c.real <= 4:
        z = complex(z.real, abs(z.imag))
        z = z / abs(z)
    if z.imag == 0:
        z = complex(z.real, 0.0)
    return SpectralPoint(lam if np.isreal(lam) else lam_c, z)


def lambda_of_z(z: complex) -> SpectralPoint:
    z = complex(z)
    if z == 0:
        raise ValueError("z = 0 has no spectral parameter")
    lam = 2 - z - 1 / z
    return SpectralPoint(_real_if_close(lam, 1 + abs(lam)), z)


def _as_lambda(point) -> np.ndarray | complex | float:
    return point.lam if isinstance(point, SpectralPoint) else point


def regular_solution(V: Potential, point, n_max: int) -> np.ndarray:
    """``phi_0..phi_{n_max}`` by forward recursion from ``phi_0 = 0, phi_1 = 1``.

    ``point`` may be a SpectralPoint, a scalar or an array of lambda values;
    for an array the result has shape ``(n_max + 1,) + lam.shape``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    lam = np.asarray(_as_lambda(point))
    dtype = np.result_type(lam.dtype, float)
    phi = np.zeros((n_max + 1,) + lam.shape, dtype=dtype)
    phi[1] = 1.0
    pot = V.padded(n_max)
    for n in range(1, n_max):
        phi[n + 1] = (2 + pot[n - 1] - lam) * phi[n] - phi[n - 1]
    return phi


def regular_solution_derivative(
    V: Potential, point, n_max: int, phi: np.ndarray | None = None
) -> np.ndarray:
    """Lambda-derivative of the regular solution via the differentiated recursion.

    ``phi`` may be supplied (for instance a stably computed bound-state
    profile); otherwise it is produced by forward recursion.
    """
    lam = np.asarray(_as_lambda(point))
    if phi is None:
        phi = regular_solution(V, lam, n_max)
    dphi = np.zeros_like(phi)
    pot = V.padded(n_max)
    for n in range(1, n_max):
        dphi[n + 1] = (2 + pot[n - 1] - lam) * dphi[n] - dphi[n - 1] - phi[n]
    return dphi


@dataclass(frozen=True)
class RegularPolynomial:
    """``phi_n`` as a polynomial in lambda, coefficients in ascending order."""

    n: int
    coeffs: np.ndarray

    def __call__(self, lam):
        return np.polynomial.polynomial.polyval(lam, self.coeffs)

    def derivative(self) -> np.ndarray:
        return np.polynomial.polynomial.polyder(self.coeffs)

    def derivative_at(self, lam):
        if self.n == 1:
            return np.zeros_like(np.asarray(lam, dtype=float))
        return np.polynomial.polynomial.polyval(lam, self.derivative())


def regular_polynomial_coeffs(V: Potential, n: int) -> RegularPolynomial:
    """Expand ``phi_n`` in powers of lambda by running the recursion on coefficients."""
    if n < 1:
        raise ValueError("n must be at least 1")
    prev = np.zeros(n)
    cur = np.zeros(n)
    cur[0] = 1.0
    for k in range(1, n):
        nxt = (2 + V(k)) * cur - prev
        nxt[1:] -= cur[:-1]
        prev, cur = cur, nxt
    return RegularPolynomial(n, cur)


def jost_solution(V: Potential, z: complex, n_max: int | None = None) -> np.ndarray:
    """``f_0..f_{n_max}`` by backward recursion from ``f_n = z^n`` beyond the support."""
    z = complex(z)
    if z == 0 or abs(z) > 1 + 1e-12:
        raise ValueError("jost_solution needs 0 < |z| <= 1")
    b = V.support
    top = max(b, 0 if n_max is None else n_max)
    f = np.empty(top + 2, dtype=complex)
    f[b:] = z ** np.arange(b, top + 2)
    s = z + 1 / z
    for n in range(b, 0, -1):
        f[n - 1] = (s + V(n)) * f[n] - f[n + 1]
    return f[: top + 1] if n_max is None else f[: n_max + 1]


def jost_solution_iterative(
    V: Potential,
    z: complex,
    n_max: int | None = None,
    tol: float = 1e-15,
    max_iter: int = 500,
) -> np.ndarray:
    """``f_0..f_{n_max}`` from the Neumann series for ``m_n = z^{-n} f_n``.

    The kernel ``(z^(2(j-n)) - 1)/(z - 1/z)`` is evaluated as
    ``z * sum_{k<j-n} z^(2k)``, which stays accurate near ``z = +-1``.
    """
    z = complex(z)
    if z == 0 or abs(z) > 1 + 1e-12:
        raise ValueError("jost_solution_iterative needs 0 < |z| <= 1")
    b = V.support
    top = max(b, 0 if n_max is None else n_max)
    pot = V.padded(b)
    # kernel[n, j-1] for 0 <= n <= b, n < j <= b
    powers = np.cumsum(z ** (2 * np.arange(b + 1)))
    kernel = np.zeros((b + 1, b), dtype=complex)
    for n in range(b + 1):
        for j in range(n + 1, b + 1):
            kernel[n, j - 1] = z * powers[j - n - 1]
    m = np.ones(b + 1, dtype=complex)
    term = np.ones(b + 1, dtype=complex)
    for it in range(1, max_iter + 1):
        term = kernel @ (pot * term[1:])
        m = m + term
        inc = float(np.max(np.abs(term))) if b else 0.0
        if inc <= tol * float(np.max(np.abs(m))):
            break
    else:
        raise JostIterationError(max_iter, inc)
    f = np.empty(top + 1, dtype=complex)
    f[: b + 1] = z ** np.arange(b + 1) * m
    f[b + 1 :] = z ** np.arange(b + 1, top + 1)
    return f if n_max is None else f[: n_max + 1]


@dataclass(frozen=True)
class JostData:
    """Jost function of a compactly supported potential.

    ``table[n]`` holds the z-coefficients of ``f_n`` for ``0 <= n <= b``;
    ``f0_coeffs`` is its first row, a polynomial of degree ``2b - 1``.
    """

    potential: Potential
    table: np.ndarray = field(repr=False)

    @property
    def f0_coeffs(self) -> np.ndarray:
        return self.table[0]

    @property
    def scale(self) -> float:
        return float(np.sum(np.abs(self.f0_coeffs)))

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.f0_coeffs)

    def derivative(self, z):
        return np.polynomial.polynomial.polyval(
            z, np.polynomial.polynomial.polyder(self.f0_coeffs)
        )

    def f(self, n: int, z):
        """``f_n(z)``; equals ``z^n`` for ``n`` at or beyond the support."""
        if n >= self.potential.support:
            return np.asarray(z) ** n
        return np.polynomial.polynomial.polyval(z, self.table[n])

    def as_rational(self) -> "RationalJost":
        return RationalJost(self.f0_coeffs, np.array([1.0]))


def jost_function(V: Potential) -> JostData:
    """Coefficients ``K_{nm}`` of every ``f_n`` by backward recursion on polynomials."""
    b = V.support
    width = max(2 * b, 1)
    table = np.zeros((b + 2, width + 1))
    table[b, b] = 1.0
    if b + 1 <= width:
        table[b + 1, b + 1] = 1.0
    for n in range(b, 0, -1):
        cur = table[n]
        nxt = V(n) * cur - table[n + 1]
        nxt[1:] += cur[:-1]  # times z
        nxt[:-1] += cur[1:]  # divided by z (cur[0] == 0 for n >= 1)
        table[n - 1] = nxt
    return JostData(V, table[: b + 1, :width])


@dataclass(frozen=True)
class RationalJost:
    """Jost function given as a ratio of polynomials in z (ascending coefficients).

    Used for transformed potentials, where each added or removed bound state
    multiplies the Jost function by a Moebius-type factor.
    """

    num: np.ndarray
    den: np.ndarray

    def __call__(self, z):
        P = np.polynomial.polynomial
        return P.polyval(z, self.num) / P.polyval(z, self.den)

    def derivative(self, z):
        P = np.polynomial.polynomial
        p, q = P.polyval(z, self.num), P.polyval(z, self.den)
        dp = P.polyval(z, P.polyder(self.num))
        dq = P.polyval(z, P.polyder(self.den))
        return (dp * q - p * dq) / q**2

    @property
    def scale(self) -> float:
        return float(np.sum(np.abs(self.num)) / np.min(np.abs(
            np.polynomial.polynomial.polyval(np.array([-1.0, 1.0]), self.den))))

    def _deflated(self, num: np.ndarray, den: np.ndarray, root: float) -> "RationalJost":
        # Cancel a common factor (1 - z/root) when both polynomials vanish there.
        P = np.polynomial.polynomial
        factor = [1.0, -1.0 / root]
        qn, rn = P.polydiv(num, factor)
        qd, rd = P.polydiv(den, factor)
        wn = np.sum(np.abs(num) * abs(root) ** np.arange(num.size))
        wd = np.sum(np.abs(den) * abs(root) ** np.arange(den.size))
        if np.max(np.abs(rn)) <= 1e-9 * wn and np.max(np.abs(rd)) <= 1e-9 * wd:
            return RationalJost(np.atleast_1d(qn), np.atleast_1d(qd))
        return RationalJost(num, den)

    def with_added_zero(self, zp: float) -> "RationalJost":
        """Multiply by ``(1 - z/zp) / (1 - zp z)``."""
        P = np.polynomial.polynomial
        out = RationalJost(P.polymul(self.num, [1.0, -1.0 / zp]), P.polymul(self.den, [1.0, -zp]))
        return out._deflated(out.num, out.den, 1.0 / zp)

    def with_removed_zero(self, zp: float) -> "RationalJost":
        """Multiply by ``(1 - zp z) / (1 - z/zp)``."""
        P = np.polynomial.polynomial
        out = RationalJost(P.polymul(self.num, [1.0, -zp]), P.polymul(self.den, [1.0, -1.0 / zp]))
        return out._deflated(out.num, out.den, zp)

    def to_json(self) -> dict:
        return {"numerator": list(map(float, self.num)), "denominator": list(map(float, self.den))}

    @classmethod
    def from_json(cls, obj: dict) -> "RationalJost":
        return cls(np.asarray(obj["numerator"], float), np.asarray(obj.get("denominator", [1.0]), float))


def bound_state_profile(V: Potential, z: float, n_max: int) -> np.ndarray:
    """Regular solution at a bound state, computed stably as ``f_n(z) / f_1(z)``.

    Forward recursion loses the decaying solution after a few dozen sites;
    the backward-recursed Jost solution is proportional to it and decays
    accurately.  Callers must ensure ``z`` is a zero of the Jost function.
    """
    f = jost_solution(V, z, n_max).real
    prof = f / f[1]
    prof[0] = 0.0
    return prof


def regular_solution_stable(V: Potential, lam: float, n_max: int, jost=None, tol: float = 1e-8) -> np.ndarray:
    """Regular solution at a real lambda, switching to the Jost profile at bound states."""
    pt = z_of_lambda(lam)
    if not pt.in_band():
        jd = jost if jost is not None else jost_function(V)
        z = pt.z.real
        if abs(jd(z)) <= tol * jd.scale:
            return bound_state_profile(V, z, n_max)
    return regular_solution(V, float(np.real(lam)), n_max)


def recursion_residual(V: Potential, psi: np.ndarray, lam) -> float:
    """Largest scaled residual of the three-term recursion over interior sites."""
    psi = np.asarray(psi)
    n = np.arange(1, psi.shape[0] - 1)
    pot = V.padded(psi.shape[0])[n - 1]
    lhs = psi[n + 1] + psi[n - 1] - (2 + pot - lam) * psi[n]
    scale = np.maximum.reduce([np.abs(psi[n - 1]), np.abs(psi[n]), np.abs(psi[n + 1])])
    scale = np.where(scale == 0, 1.0, scale)
    return float(np.max(np.abs(lhs) / scale)) if n.size else 0.0


def wronskian_identity_residual(V: Potential, z: complex, n: int) -> float:
    """``|phi_n - (g_0 f_n - f_0 g_n) / (z - 1/z)|`` for ``z`` on the unit circle."""
    z = complex(z)
    if abs(abs(z) - 1) > 1e-12:
        raise ValueError("z must lie on the unit circle")
    if abs(z - 1) < 1e-12 or abs(z + 1) < 1e-12:
        raise ValueError("z = +-1 is excluded")
    f = jost_solution(V, z, max(n, 1))
    g = np.conj(f)
    phi = regular_solution(V, lambda_of_z(z).lam, max(n, 1))
    rhs = (g[0] * f[n] - f[0] * g[n]) / (z - 1 / z)
    return float(abs(phi[n] - rhs))
