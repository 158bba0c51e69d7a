"""Reference potentials with closed-form spectral data and transform results.

Irrational constants are evaluated here in double precision rather than
being written out as decimals.
"""

from __future__ import annotations

import math

import numpy as np

from .lattice import Potential

__all__ = [
    "free",
    "one_site",
    "two_site_two_bound",
    "two_site_no_bound",
    "two_site_one_bound",
    "edge_resonance",
    "two_site_norming_constants",
    "two_site_one_bound_constant",
    "added_state_potential",
    "removed_state_potential",
    "inconsistent_cubic",
    "complex_root_cubic",
    "FIXTURES",
]

SQRT5 = math.sqrt(5.0)
SQRT10 = math.sqrt(10.0)


def free() -> Potential:
    return Potential([])


def one_site(V1: float) -> Potential:
    return Potential([V1])


def two_site_two_bound() -> Potential:
    """Jost function ``(1 + 2z)(1 - 2z)(1 - z/sqrt5)``; bound states at ``z = -1/2, 1/2``."""
    return Potential([-SQRT5, 4 / SQRT5])


def two_site_no_bound() -> Potential:
    """Jost function ``(1 + z)(1 - z)(1 - z/sqrt2)``: no zeros inside the disk."""
    return Potential([-math.sqrt(2.0), 1 / math.sqrt(2.0)])


def two_site_one_bound() -> Potential:
    """One real zero ``3 / (2 (1 + sqrt10))`` and a complex pair outside the disk."""
    return Potential([-(7 + SQRT10) / 6, -(1 + SQRT10) / 2])


def edge_resonance() -> Potential:
    """``V = (-1)``: the Jost function ``1 - z`` vanishes at ``z = 1``."""
    return Potential([-1.0])


def two_site_norming_constants() -> tuple[float, float]:
    """``C^2`` at ``z = -1/2`` and ``z = 1/2`` for :func:`two_site_two_bound`."""
    return 3 * (12 - 5 * SQRT5) / 76, 3 * (12 + 5 * SQRT5) / 76


def two_site_one_bound_constant() -> tuple[float, float]:
    """``(z, C^2)`` of the single bound state of :func:`two_site_one_bound`."""
    return 3 / (2 * (1 + SQRT10)), (625 + 128 * SQRT10) / 3489


def added_state_potential(V1: float, C2: float, n: int) -> float:
    """Transformed value at site ``n`` after adding ``z = -V1`` with constant ``C2`` to ``(V1)``."""
    if n == 1:
        return V1 + C2 / V1
    k = C2 - 1 + V1**2
    num = -C2 * V1 ** (2 * n + 1) * (1 - V1**2) ** 2 * k
    den = C2**2 * V1**6 - C2 * V1 ** (2 * n + 2) * (1 + V1**2) * k + V1 ** (4 * n) * k**2
    return num / den


def removed_state_potential() -> np.ndarray:
    """First five transformed values after removing ``z = 1/2`` from :func:`two_site_two_bound`."""
    return np.array(
        [
            5 * (3 - 2 * SQRT5) / 16,
            (1125 + 21826 * SQRT5) / 119120,
            270 * (14781 + 6364 * SQRT5) / 15975481,
            1080 * (231681 + 102364 * SQRT5) / 1284143281,
            4320 * (3691281 + 1638364 * SQRT5) / 204372438481,
        ]
    )


def inconsistent_cubic() -> np.ndarray:
    """``(1 - z)^3``: a cubic that matches no two-site potential."""
    return np.array([1.0, -3.0, 3.0, -1.0])


def complex_root_cubic() -> np.ndarray:
    """``(1 - z/a1)(1 - z/a2)(1 - z/a3)`` with ``a1`` real and ``a2, a3`` complex conjugate."""
    roots = [3 / (2 * (1 + SQRT10)), 2 / (1 + math.sqrt(2.0) * 1j), 2 / (1 - math.sqrt(2.0) * 1j)]
    coeffs = np.polynomial.polynomial.polyfromroots(roots)
    coeffs = coeffs / coeffs[0]
    return coeffs.real


FIXTURES = {
    "free": free(),
    "one-site-0.5": one_site(0.5),
    "one-site-1.25": one_site(1.25),
    "two-site-two-bound": two_site_two_bound(),
    "edge-resonance": edge_resonance(),
}
