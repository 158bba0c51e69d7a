"""Bound states, norming constants, scattering data and the spectral density."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect

from ._extended import free_band_mass

from .lattice import (
    JostData,
    Potential,
    RationalJost,
    bound_state_profile,
    jost_function,
    jost_solution,
    lambda_of_z,
    z_of_lambda,
)

__all__ = [
    "BoundState",
    "EndpointClass",
    "LevinsonReport",
    "SpectralDensity",
    "SpectralData",
    "BoundaryZeroWarning",
    "NotABoundStateError",
    "NormingConstantMismatch",
    "UnwrapAmbiguityError",
    "SpectralConsistencyError",
    "NotAJostFunctionError",
    "InconsistentSpectralDataError",
    "find_bound_states",
    "gl_norming_constant",
    "marchenko_norming_constant",
    "residue_norming_constant",
    "scattering_matrix",
    "phase_shift_and_levinson",
    "endpoint_classification",
    "spectral_density",
    "band_identity_residual",
    "theta_rule",
    "analyze",
    "marchenko_constants_from_zeros",
    "potential_from_jost_polynomial",
]

ROOT_GRID = 4096
ROOT_XTOL = 1e-14
ENDPOINT_TOL = 1e-9
PV_DELTA = 1e-3


class BoundaryZeroWarning(UserWarning):
    """A zero of the Jost function sits at a band edge (exceptional case)."""


class NotABoundStateError(ValueError):
    pass


class NormingConstantMismatch(RuntimeError):
    pass


class UnwrapAmbiguityError(RuntimeError):
    pass


class SpectralConsistencyError(RuntimeError):
    pass


class NotAJostFunctionError(ValueError):
    pass


class InconsistentSpectralDataError(ValueError):
    """Claimed norming constants are not those of the potential."""


@dataclass(frozen=True)
class BoundState:
    lambda_s: float
    z_s: float
    C2: float
    c2: float

    def __post_init__(self):
        if not (-1 < self.z_s < 1) or self.z_s == 0:
            raise ValueError(f"bound-state z must lie in (-1,0) or (0,1), got {self.z_s}")
        if abs(self.lambda_s - (2 - self.z_s - 1 / self.z_s)) > 1e-12 * (1 + abs(self.lambda_s)):
            raise ValueError("lambda_s and z_s are not paired")
        if self.C2 <= 0 or self.c2 <= 0:
            raise ValueError("norming constants must be positive")

    def to_json(self) -> dict:
        return {"z": self.z_s, "lambda": self.lambda_s, "C2": self.C2, "c2": self.c2}


@dataclass(frozen=True)
class EndpointClass:
    mu_plus: int
    mu_minus: int


def _polish(jd, r: float, a: float, b: float) -> float:
    """One guarded Newton step after bisection."""
    d = float(np.real(jd.derivative(r)))
    if d == 0:
        return r
    t = r - float(np.real(jd(r))) / d
    return t if a <= t <= b and abs(jd(t)) <= abs(jd(r)) else r


def find_bound_states(jd: JostData, grid: int = ROOT_GRID) -> list[float]:
    """Real zeros of the Jost function in ``(-1, 0) U (0, 1)``, ascending.

    Zeros within the endpoint tolerance of ``+-1`` are not bound states;
    they are reported through a :class:`BoundaryZeroWarning`.
    """
    x = np.linspace(-1.0, 1.0, grid + 1)
    vals = np.real(jd(x))
    tol = ENDPOINT_TOL * (1 + jd.scale)
    roots = []
    for k in range(grid):
        a, b = x[k], x[k + 1]
        fa, fb = vals[k], vals[k + 1]
        if fa == 0.0 and 0 < k:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(_polish(jd, bisect(lambda t: float(np.real(jd(t))), a, b, xtol=ROOT_XTOL, rtol=8.9e-16), a, b))
    edge_zero = {}
    for edge in (-1.0, 1.0):
        edge_zero[edge] = bool(abs(jd(edge)) <= tol)
        if edge_zero[edge]:
            warnings.warn(f"Jost function vanishes at band edge z={edge:+.0f}", BoundaryZeroWarning)
    out = [
        float(r) for r in roots
        if not (abs(abs(r) - 1) < 2 / grid and edge_zero[float(np.sign(r))])
    ]
    return out


def _check_bound_state(jd: JostData, z_s: float) -> None:
    if not (-1 < z_s < 1) or z_s == 0:
        raise NotABoundStateError(f"z={z_s} is outside (-1,0) U (0,1)")
    if abs(jd(z_s)) > 1e-8 * jd.scale:
        raise NotABoundStateError(f"z={z_s} is not a zero of the Jost function (|f_0| = {abs(jd(z_s)):.3e})")


def _geometric_sum_sq(profile: np.ndarray, z: float, start: int, tol: float = 1e-14) -> float:
    """``sum_{n>=1} profile_n^2`` where ``profile_n = profile_start z^(n-start)`` beyond ``start``."""
    total = float(np.sum(profile[1:start] ** 2))
    term = profile[start] ** 2
    ratio = z * z
    while True:
        total += term
        term *= ratio
        if term < tol * total:
            return total


def gl_norming_constant(V: Potential, z_s: float, jd: JostData | None = None) -> float:
    """``1 / sum_{n>=1} phi_n(lam_s)^2`` with the regular solution taken from the Jost profile."""
    jd = jd or jost_function(V)
    _check_bound_state(jd, z_s)
    b = max(V.support, 1)
    prof = bound_state_profile(V, z_s, b)
    norm2 = _geometric_sum_sq(prof, z_s, b)
    if not np.isfinite(norm2):
        raise NotABoundStateError(f"norm series diverges at z={z_s}")
    return 1.0 / norm2


def residue_norming_constant(jd, z_s: float) -> tuple[float, float]:
    """``Res[S/z, z_s] = f_0(1/z_s) / (z_s f_0'(z_s))`` with a cancellation estimate.

    Returns ``(value, condition)``; ``condition`` bounds the relative
    amplification of rounding errors in evaluating ``f_0(1/z_s)``.
    """
    w = 1.0 / z_s
    coeffs = getattr(jd, "f0_coeffs", None)
    val = jd(w)
    if coeffs is not None:
        mags = np.abs(coeffs) * np.abs(w) ** np.arange(coeffs.size)
        cond = float(np.sum(mags) / abs(val)) if val != 0 else np.inf
    else:
        cond = np.inf
    return float(np.real(val / (z_s * jd.derivative(z_s)))), cond


def marchenko_norming_constant(
    V: Potential, z_s: float, jd: JostData | None = None, rtol: float = 1e-10
) -> float:
    """``1 / sum_{n>=1} f_n(z_s)^2``, checked against the residue of ``S/z``.

    The residue route is only enforced when evaluating ``f_0(1/z_s)``
    is well conditioned (long truncated supports make it meaningless).
    """
    jd = jd or jost_function(V)
    _check_bound_state(jd, z_s)
    b = max(V.support, 1)
    f = jost_solution(V, z_s, b).real
    c2 = 1.0 / _geometric_sum_sq(f, z_s, b)
    res, cond = residue_norming_constant(jd, z_s)
    if cond * 1e-16 < 1e-2 * rtol and abs(res - c2) > rtol * abs(c2):
        raise NormingConstantMismatch(
            f"series c2={c2!r} and residue {res!r} disagree at z={z_s}"
        )
    return c2


def scattering_matrix(jd, z: complex, *, quotient: bool = False) -> complex:
    """``S(z) = conj(f_0(z)) / f_0(z)`` on the unit circle.

    With ``quotient=True`` the equivalent form ``f_0(1/z) / f_0(z)`` is used.
    """
    z = complex(z)
    if abs(abs(z) - 1) > 1e-12:
        raise ValueError("z must lie on the unit circle")
    f0 = jd(z)
    if f0 == 0 or (abs(abs(z.real) - 1) < 1e-14 and abs(f0) <= ENDPOINT_TOL * (1 + jd.scale)):
        raise ValueError(f"S is undefined at z={z} where the Jost function vanishes")
    return complex(jd(1 / z) / f0) if quotient else complex(np.conj(f0) / f0)


def endpoint_classification(jd) -> EndpointClass:
    tol = ENDPOINT_TOL * (1 + jd.scale)
    mu = []
    for edge in (1.0, -1.0):
        hit = abs(jd(edge)) <= tol
        if hit and abs(jd.derivative(edge)) <= tol:
            raise ArithmeticError(f"Jost function has a multiple zero at z={edge:+.0f}")
        mu.append(int(hit))
    return EndpointClass(*mu)


@dataclass(frozen=True)
class LevinsonReport:
    N: int
    mu_plus: int
    mu_minus: int
    delta_arg_f0: float
    delta_phase: float
    delta_arg_S: float
    expected: float
    ok: bool


def phase_shift_and_levinson(
    jost,
    grid_size: int = 512,
    *,
    n_bound: int | None = None,
    endpoints: EndpointClass | None = None,
    delta: float = PV_DELTA,
    max_grid: int = 1 << 20,
) -> tuple[np.ndarray, np.ndarray, LevinsonReport]:
    """Unwrapped phase shift on ``z = exp(i theta)``, ``theta in (delta, pi - delta)``.

    The phase is defined through ``f_0 = |f_0| exp(-i phi)``.  Returns
    ``(theta, phi, report)`` where the report compares the winding of
    ``f_0`` with ``pi (N + mu_plus/2 + mu_minus/2)``.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    if n_bound is None:
        n_bound = len(find_bound_states(jost))
    if endpoints is None:
        endpoints = endpoint_classification(jost)
    n = grid_size
    while True:
        theta = np.linspace(delta, np.pi - delta, n)
        raw = np.angle(jost(np.exp(1j * theta)))
        jumps = np.abs(np.diff(raw))
        jumps = np.minimum(jumps, 2 * np.pi - jumps)
        if np.max(jumps, initial=0.0) < np.pi / 4:
            break
        n *= 2
        if n > max_grid:
            raise UnwrapAmbiguityError(f"phase jumps exceed pi/4 even with {n // 2} samples")
    arg = np.unwrap(raw)
    phi = -arg
    d_arg = float(arg[-1] - arg[0])
    expected = np.pi * (n_bound + endpoints.mu_plus / 2 + endpoints.mu_minus / 2)
    report = LevinsonReport(
        N=n_bound,
        mu_plus=endpoints.mu_plus,
        mu_minus=endpoints.mu_minus,
        delta_arg_f0=d_arg,
        delta_phase=-d_arg,
        delta_arg_S=-2 * d_arg,
        expected=float(expected),
        ok=bool(abs(d_arg - expected) <= np.pi / 50),
    )
    return theta, phi, report


def theta_rule(nodes: int, panel: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``[0, pi]`` with ``nodes`` points."""
    panels = max(nodes // panel, 1)
    x, w = np.polynomial.legendre.leggauss(panel)
    edges = np.linspace(0.0, np.pi, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    th = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return th, wt


@dataclass(frozen=True)
class SpectralDensity:
    """Absolutely continuous weight on ``[0, 4]`` plus point masses.

    The weight is ``continuous_scale * sqrt(lam (4 - lam)) / (2 pi |f_0(z)|^2)``.
    """

    continuous_scale: float
    jost: Callable = field(repr=False)
    atoms: tuple[tuple[float, float], ...] = ()
    nodes: int = 256

    def weight(self, lam):
        lam = np.asarray(lam, dtype=float)
        z = np.where(
            (lam > 0) & (lam < 4),
            (1 - lam / 2) + 0.5j * np.sqrt(np.clip(lam * (4 - lam), 0, None)),
            1.0,
        )
        w = float(self.continuous_scale) * np.sqrt(np.clip(lam * (4 - lam), 0, None)) / (
            2 * np.pi * np.abs(self.jost(z)) ** 2
        )
        return np.where((lam > 0) & (lam < 4), w, 0.0)

    def theta_nodes(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(lam, weights, theta)`` discretizing the continuous part."""
        th, wt = theta_rule(nodes or self.nodes)
        f0 = self.jost(np.exp(1j * th))
        dens = float(self.continuous_scale) * (2 / np.pi) * np.sin(th) ** 2 / np.abs(f0) ** 2
        return 2 - 2 * np.cos(th), wt * dens, th

    def continuous_mass(self, nodes: int | None = None) -> float:
        return float(np.sum(self.theta_nodes(nodes)[1]))

    @property
    def atom_mass(self) -> float:
        return float(sum(c for _, c in sorted(self.atoms)))

    @property
    def mass(self) -> float:
        return self.continuous_mass() + self.atom_mass

    def integrate(self, func: Callable, nodes: int | None = None):
        """``int func(lam) d rho``; ``func`` maps an array of lambdas to ``(..., len)`` values."""
        lam, w, _ = self.theta_nodes(nodes)
        total = np.asarray(func(lam)) @ w
        for lam_s, c in sorted(self.atoms):
            total = total + c * np.asarray(func(np.array([lam_s])))[..., 0]
        return total

    def to_json(self) -> dict:
        jost = self.jost if isinstance(self.jost, RationalJost) else self.jost.as_rational()
        return {
            "continuous_scale": float(self.continuous_scale),
            "jost": jost.to_json(),
            "atoms": [{"lambda": l, "C2": c} for l, c in self.atoms],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralDensity":
        jost = RationalJost.from_json(obj["jost"])
        atoms = tuple((float(a["lambda"]), float(a["C2"])) for a in obj.get("atoms", []))
        return _converged_density(float(obj["continuous_scale"]), jost, atoms)


def _converged_density(scale: float, jost, atoms, start: int = 256, tol: float = 1e-9, max_nodes: int = 1 << 16):
    nodes = start
    prev = SpectralDensity(scale, jost, atoms, nodes).continuous_mass()
    while True:
        nxt = SpectralDensity(scale, jost, atoms, 2 * nodes).continuous_mass()
        if abs(nxt - prev) < tol:
            return SpectralDensity(scale, jost, atoms, nodes)
        nodes *= 2
        prev = nxt
        if nodes > max_nodes:
            raise SpectralConsistencyError("density quadrature did not converge")


def spectral_density(jost, bounds: Sequence[BoundState]) -> SpectralDensity:
    """Assemble the spectral density of a potential from its Jost function and bound states.

    The band part is ``scale * d(rho_free) / |f_0|^2`` with ``scale`` fixed by
    total mass one; for the genuine data of a potential ``scale`` equals one.
    """
    c2_sum = float(sum(b.C2 for b in bounds))
    if c2_sum >= 1:
        raise ValueError(f"sum of norming constants must be below 1, got {c2_sum}")
    atoms = tuple((b.lambda_s, b.C2) for b in bounds)
    # Kept in extended precision: transformations rescale it and the
    # Gel'fand-Levitan kernel is sensitive to its last digits.
    scale = (1 - np.longdouble(c2_sum)) / free_band_mass(jost)
    dens = _converged_density(scale, jost, atoms)
    if abs(dens.mass - 1) > 1e-8:
        raise SpectralConsistencyError(f"spectral mass {dens.mass!r} differs from 1")
    return dens


def band_identity_residual(jost, bounds: Sequence[BoundState]) -> float:
    """``int d(rho_free)/|f_0|^2 - prod z_k^2``.

    This vanishes for a single bound state but not in general (it is
    ``1 - sum C^2`` that the integral reproduces); reported for diagnostics.
    """
    zprod2 = float(np.prod([b.z_s**2 for b in bounds])) if bounds else 1.0
    return _converged_density(1.0, jost, ()).continuous_mass() - zprod2


@dataclass(frozen=True)
class SpectralData:
    """Everything the forward pipeline derives from a compactly supported potential."""

    potential: Potential
    jost: JostData
    bounds: tuple[BoundState, ...]
    endpoints: EndpointClass

    @cached_property
    def density(self) -> SpectralDensity:
        return spectral_density(self.jost, self.bounds)

    def levinson(self, grid_size: int = 512):
        return phase_shift_and_levinson(
            self.jost, grid_size, n_bound=len(self.bounds), endpoints=self.endpoints
        )

    @classmethod
    def from_claims(
        cls, V: Potential, bounds: Sequence[BoundState], rtol: float = 1e-8
    ) -> "SpectralData":
        """Attach claimed bound-state data to ``V`` after checking it is genuine.

        Every claimed ``z_s`` must be a zero of the Jost function and every
        ``C2`` must match the norm of the regular solution there.
        """
        jd = jost_function(V)
        found = find_bound_states(jd)
        if len(found) != len(bounds):
            raise InconsistentSpectralDataError(
                f"{len(bounds)} bound states claimed, the potential has {len(found)}"
            )
        for b in bounds:
            _check_bound_state(jd, b.z_s)
            C2 = gl_norming_constant(V, b.z_s, jd)
            if abs(C2 - b.C2) > rtol * C2:
                raise InconsistentSpectralDataError(
                    f"claimed C2={b.C2!r} at lambda={b.lambda_s!r}, the potential gives {C2!r}"
                )
        return cls(V, jd, tuple(bounds), endpoint_classification(jd))

    def reordered(self, index: int) -> "SpectralData":
        """Move bound state ``index`` to the end of the list."""
        bounds = list(self.bounds)
        b = bounds.pop(index)
        return SpectralData(self.potential, self.jost, tuple(bounds + [b]), self.endpoints)


def analyze(V: Potential) -> SpectralData:
    """Run the forward pipeline: Jost function, bound states, norming constants."""
    jd = jost_function(V)
    bounds = []
    for z in find_bound_states(jd):
        C2 = gl_norming_constant(V, z, jd)
        c2 = marchenko_norming_constant(V, z, jd)
        f1 = float(np.real(jd.f(1, z)))
        if abs(C2 - c2 * f1**2) > 1e-10 * C2:
            raise NormingConstantMismatch(f"C2={C2!r} and c2 f_1^2={c2 * f1 * f1!r} disagree at z={z}")
        bounds.append(BoundState(float(lambda_of_z(z).lam), z, C2, c2))
    return SpectralData(V, jd, tuple(bounds), endpoint_classification(jd))


def marchenko_constants_from_zeros(alphas: Sequence[float]) -> np.ndarray:
    """Residues of ``S/z`` at the zeros of ``f_0(z) = prod (1 - z/alpha_j)``.

    For a genuine Jost function every value is positive; a negative value
    rules the candidate zero set out.
    """
    alphas = np.asarray(alphas, dtype=float)
    out = np.empty(alphas.size)
    for k, a in enumerate(alphas):
        others = np.delete(alphas, k)
        num = np.prod(1 - 1 / (a * alphas))
        den = a * (-1 / a) * np.prod(1 - a / others)
        out[k] = num / den
    return out


def potential_from_jost_polynomial(coeffs: Sequence[float], tol: float = 1e-10) -> Potential:
    """Recover ``V`` from a candidate Jost polynomial of degree 1 or 3.

    Raises :class:`NotAJostFunctionError` when no potential of support one
    or two produces the polynomial.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size == 0 or abs(c[0] - 1) > tol:
        raise NotAJostFunctionError("a Jost function equals 1 at z = 0")
    if c.size == 1:
        return Potential([])
    if c.size == 2:
        return Potential([c[1]])
    if c.size != 4:
        raise NotImplementedError("only supports one and two are handled")
    v2 = c[3]
    v1 = c[2] / v2
    if abs(v1 + v2 - c[1]) > tol * (1 + abs(c[1])):
        raise NotAJostFunctionError(
            f"coefficients are inconsistent: V1+V2={v1 + v2!r} but the linear coefficient is {c[1]!r}"
        )
    return Potential([v1, v2])
