"""Brute-force checks from the truncated operator matrix.

The half-line operator with ``psi_0 = 0`` truncated to ``M`` sites is the
symmetric tridiagonal matrix with diagonal ``2 + V_n`` and off-diagonal
``-1``.  Its eigenpairs outside the band approximate the bound states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .lattice import Potential

__all__ = [
    "TruncatedSpectrum",
    "EigenvectorPathologyError",
    "truncated_spectrum",
    "oracle_norming_constant",
    "orthogonality_check",
    "match_bound_states",
]

RESIDUAL_TOL = 1e-10
PATHOLOGY_TOL = 1e-8


class EigenvectorPathologyError(ArithmeticError):
    """An eigenvector has a vanishing first component."""


@dataclass(frozen=True)
class TruncatedSpectrum:
    """Eigenvalues of the truncated matrix and the eigenpairs off the band.

    ``vectors[:, k]`` belongs to ``outside[k]``; vectors have unit norm.
    """

    size: int
    diagonal: np.ndarray
    eigenvalues: np.ndarray
    outside: np.ndarray
    vectors: np.ndarray
    margin: float
    residual: float

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diagonal * v
        out[:-1] -= v[1:]
        out[1:] -= v[:-1]
        return out


def truncated_spectrum(V: Potential | Sequence[float], M: int, margin: float | None = None) -> TruncatedSpectrum:
    """Eigen-decompose the ``M``-site truncation.

    Eigenvalues below ``-margin`` or above ``4 + margin`` (default
    ``margin = 10/M``) are kept as bound-state candidates together with
    their eigenvectors.
    """
    V = V if isinstance(V, Potential) else Potential(V)
    if M < max(2, V.support):
        raise ValueError("M must cover the support of the potential")
    margin = 10.0 / M if margin is None else margin
    d = 2.0 + V.padded(M)
    e = -np.ones(M - 1)
    evals = eigh_tridiagonal(d, e, eigvals_only=True)
    keep = np.nonzero((evals < -margin) | (evals > 4 + margin))[0]
    if keep.size:
        cols = []
        vals = []
        for i in keep:
            w, v = eigh_tridiagonal(d, e, select="i", select_range=(int(i), int(i)))
            vals.append(w[0])
            cols.append(v[:, 0])
        outside = np.array(vals)
        vectors = np.column_stack(cols)
    else:
        outside = np.zeros(0)
        vectors = np.zeros((M, 0))
    spec = TruncatedSpectrum(M, d, evals, outside, vectors, margin, 0.0)
    res = 0.0
    for k in range(outside.size):
        v = vectors[:, k]
        res = max(res, float(np.linalg.norm(spec.apply(v) - outside[k] * v) / np.linalg.norm(v)))
    if res > RESIDUAL_TOL:
        raise ArithmeticError(f"eigenpair residual {res:.3e} exceeds {RESIDUAL_TOL}")
    return TruncatedSpectrum(M, d, evals, outside, vectors, margin, res)


def oracle_norming_constant(spec: TruncatedSpectrum, which: int) -> float:
    """``1 / sum v_n^2`` for eigenvector ``which`` scaled to ``v_1 = 1``."""
    v = spec.vectors[:, which]
    if abs(v[0]) < PATHOLOGY_TOL:
        raise EigenvectorPathologyError(f"first component {v[0]:.3e} of eigenvector {which}")
    return float(v[0] ** 2 / np.sum(v**2))


def orthogonality_check(spec: TruncatedSpectrum) -> float:
    """Largest ``|<v_k, v_l>|`` over distinct bound eigenvectors (0 when fewer than two)."""
    k = spec.outside.size
    if k < 2:
        return 0.0
    V = spec.vectors / np.linalg.norm(spec.vectors, axis=0)
    gram = V.T @ V
    return float(np.max(np.abs(gram - np.diag(np.diag(gram)))))


def match_bound_states(spec: TruncatedSpectrum, lambdas: Sequence[float], tol: float = 1e-8) -> float:
    """Pair oracle eigenvalues with ``lambdas`` one-to-one; return the largest gap.

    Raises ``ValueError`` when the counts differ or a gap exceeds ``tol``.
    """
    ours = np.sort(np.asarray(lambdas, dtype=float))
    theirs = np.sort(spec.outside)
    if ours.size != theirs.size:
        raise ValueError(f"{ours.size} bound states against {theirs.size} oracle eigenvalues")
    gap = float(np.max(np.abs(ours - theirs), initial=0.0))
    if gap > tol:
        raise ValueError(f"bound-state mismatch {gap:.3e} exceeds {tol}")
    return gap
