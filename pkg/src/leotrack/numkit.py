"""Small dense complex linear-algebra kernels shared by the estimators.

Matrices are plain ``numpy`` arrays (complex128 or float64). Everything here
is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_RTOL = 1e-12
PINV_RTOL = 1e-12


class ContractError(ValueError):
    """Input violates a kernel precondition (shape, symmetry, finiteness)."""


class DegeneratePencilError(ArithmeticError):
    """The rank-1 pencil has no usable generalized eigenvalue."""


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray  # real, ascending
    eigenvectors: np.ndarray  # unitary, columns pair with eigenvalues


def _as_square(a, name: str = "A") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ContractError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    return a


def hermitian_eig(a) -> HermitianEig:
    """Full spectral decomposition of a Hermitian matrix.

    Eigenvalues come back ascending. Each eigenvector's first component with
    magnitude above 1e-12 is rotated to be real and positive, so repeated
    calls give identical bases.
    """
    a = _as_square(a)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    if np.abs(a - a.conj().T).max() > HERMITIAN_RTOL * scale:
        raise ContractError("matrix is not Hermitian within relative tolerance 1e-12")
    w, v = np.linalg.eigh(a)
    big = np.abs(v) > 1e-12
    first = np.argmax(big, axis=0)
    pivot = v[first, np.arange(v.shape[1])]
    phase = np.where(big.any(axis=0), np.conj(pivot) / np.where(pivot == 0, 1.0, np.abs(pivot)), 1.0)
    v = v * phase
    return HermitianEig(eigenvalues=w, eigenvectors=v)


def pseudo_inverse(a, rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with relative singular-value truncation."""
    a = np.asarray(a)
    if a.ndim != 2 or a.size == 0:
        raise ContractError(f"expected a non-empty matrix, got shape {a.shape}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    out_dtype = np.result_type(a.dtype, float)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=out_dtype)
    keep = s > rel_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return ((vh.conj().T * s_inv) @ u.conj().T).astype(out_dtype, copy=False)


def inv_sqrt_hermitian(a, floor_rel: float = 1e-12) -> np.ndarray:
    """Inverse principal square root of a Hermitian PSD matrix.

    Eigenvalues below ``floor_rel * lambda_max`` are clamped to that floor.
    """
    eig = hermitian_eig(a)
    lam_max = eig.eigenvalues[-1]
    if not lam_max > 0:
        raise ContractError("matrix has no positive eigenvalue")
    lam = np.maximum(eig.eigenvalues, floor_rel * lam_max)
    v = eig.eigenvectors
    return (v / np.sqrt(lam)) @ v.conj().T


def solve_rank1_pencil(r11, r12) -> complex:
    """Generalized eigenvalue of a (numerically) rank-1 pencil ``{R11, R12}``.

    Takes the dominant eigenvector ``v`` of the Hermitian PSD ``R11`` and
    returns the Rayleigh quotient ``(v^H R11 v) / (v^H R12 v)``. For
    ``R11 = e e^H`` and ``R12 = c e e^H`` this is exactly ``1 / c``.
    """
    r11 = _as_square(r11, "R11")
    r12 = _as_square(r12, "R12")
    if r11.shape != r12.shape or r11.shape[0] < 2:
        raise ContractError("R11 and R12 must share a square shape of at least 2x2")
    eig = hermitian_eig(r11)
    v = eig.eigenvectors[:, -1]
    num = np.vdot(v, r11 @ v)
    den = np.vdot(v, r12 @ v)
    norm12 = np.linalg.norm(r12, 2)
    if not np.abs(den) > 1e-14 * norm12:
        raise DegeneratePencilError("v^H R12 v vanishes; pencil is degenerate")
    return complex(num / den)
