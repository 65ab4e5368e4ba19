"""Rough per-block estimators: ESPRIT Doppler, one-atom SOMP angles,
combiner design and least-squares channel recovery."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .chanmodel import ArrayGeometry, ula_response, array_response, virtual_angles
from .geomkit import MeasurementVector
from .numkit import DegeneratePencilError, hermitian_eig, solve_rank1_pencil


class EstimationError(RuntimeError):
    """An estimator could not produce a value for this block."""


@dataclass(frozen=True)
class AngleGrid:
    n_elev: int = 100
    n_azim: int = 100

    def __post_init__(self):
        if self.n_elev < 2 or self.n_azim < 2:
            raise ValueError("angle grid needs at least 2 points per axis")

    @property
    def elevations(self) -> np.ndarray:
        return np.arange(self.n_elev) * np.pi / (2 * self.n_elev)

    @property
    def azimuths(self) -> np.ndarray:
        return -np.pi / 2 + np.arange(self.n_azim) * np.pi / self.n_azim

    @property
    def size(self) -> int:
        return self.n_elev * self.n_azim

    def angles(self, g: int) -> tuple[float, float]:
        i, j = divmod(int(g), self.n_azim)
        return float(self.elevations[i]), float(self.azimuths[j])

    def dictionary(self, geom: ArrayGeometry) -> np.ndarray:
        """Explicit ``M x G`` dictionary, column ``g = i * N_A + j``."""
        e, a = np.meshgrid(self.elevations, self.azimuths, indexing="ij")
        return array_response(e.ravel(), a.ravel(), geom).T


@dataclass(frozen=True)
class RoughEstimate:
    z_re: MeasurementVector
    grid_indices: tuple[int, int]


@lru_cache(maxsize=16)
def _grid_factors_conj(n_elev: int, n_azim: int, m_x: int, m_y: int):
    """Conjugated ULA factors of every grid atom: ``(N_E, N_A, M_x)`` and ``(N_E, M_y)``."""
    grid = AngleGrid(n_elev, n_azim)
    e, a = np.meshgrid(grid.elevations, grid.azimuths, indexing="ij")
    vx, vy = virtual_angles(e, a)
    axc = ula_response(m_x, vx).conj()
    ayc = ula_response(m_y, vy[:, 0]).conj()
    for arr in (axc, ayc):
        arr.setflags(write=False)
    return axc, ayc


def _atom_inner(y: np.ndarray, grid: AngleGrid, geom: ArrayGeometry) -> np.ndarray:
    """``A^H y`` for every atom without building the dictionary.

    ``y`` has shape ``(M, K)``; result is ``(N_E, N_A, K)``.
    """
    axc, ayc = _grid_factors_conj(grid.n_elev, grid.n_azim, geom.m_x, geom.m_y)
    k = y.shape[1]
    Y = y.reshape(geom.m_x, geom.m_y, k).transpose(1, 0, 2).reshape(geom.m_y, -1)
    z = (ayc @ Y).reshape(-1, geom.m_x, k)  # (N_E, M_x, K)
    return axc @ z


def esprit_doppler(block, t_sym: float) -> float:
    """Single-tone ESPRIT across pilot symbols.

    Principal branch only: unambiguous for ``|u| < 1 / (2 t_sym)``.
    """
    block = np.asarray(block)
    m_rf, n_p = block.shape
    if n_p < 3:
        raise EstimationError("ESPRIT needs at least 3 pilot symbols")
    y1 = block[:, :-1].T
    y2 = block[:, 1:].T
    scale = 1.0 / ((n_p - 1) * m_rf)
    r11 = scale * (y1 @ y1.conj().T)
    r12 = scale * (y1 @ y2.conj().T)
    r11 = 0.5 * (r11 + r11.conj().T)
    lam_min = hermitian_eig(r11).eigenvalues[0]
    shift = np.eye(n_p - 1, k=-1)
    r11_bar = r11 - lam_min * np.eye(n_p - 1)
    r12_bar = r12 - lam_min * shift
    try:
        lam = solve_rank1_pencil(r11_bar, r12_bar)
    except DegeneratePencilError as exc:
        raise EstimationError(f"ESPRIT failed: {exc}") from exc
    # |lam| carries noise; only its phase holds the Doppler
    return float(np.angle(lam) / (2 * np.pi * t_sym))


def _sq_norm_last(z: np.ndarray) -> np.ndarray:
    """``sum |z|^2`` over the last axis, via the interleaved real view."""
    v = np.ascontiguousarray(z).view(float)
    return np.einsum("...i,...i->...", v, v)


def somp_scores(block, W, grid: AngleGrid, geom: ArrayGeometry) -> np.ndarray:
    """Normalised correlation ``sum_b |(W a_g)^H rbar(b)| / ||W a_g||`` per atom, flat over ``g``."""
    W = np.asarray(W)
    y = W.conj().T @ np.asarray(block)
    corr = np.abs(_atom_inner(y, grid, geom)).sum(axis=-1)
    # ||W a_g|| from the atom correlations of the rows of W
    norms = np.sqrt(_sq_norm_last(_atom_inner(W.conj().T, grid, geom)))
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(norms > 1e-12 * norms.max(), corr / norms, 0.0)
    return score.ravel()


def somp_angles(block, W, grid: AngleGrid, geom: ArrayGeometry) -> RoughEstimate:
    """One-atom SOMP; ties go to the smallest linear index. Doppler slot is NaN."""
    score = somp_scores(block, W, grid, geom)
    g = int(np.argmax(score))
    i, j = divmod(g, grid.n_azim)
    el, az = grid.angles(g)
    return RoughEstimate(MeasurementVector(float("nan"), el, az), (i, j))


@lru_cache(maxsize=8)
def dft_matrix(m: int) -> np.ndarray:
    k = np.arange(m)
    F = np.exp(-2j * np.pi * np.outer(k, k) / m)
    F.setflags(write=False)
    return F


def _normalize(W: np.ndarray) -> np.ndarray:
    return W / np.linalg.norm(W)


def dft_rows(geom: ArrayGeometry, m_rf: int) -> np.ndarray:
    """Indices of the DFT rows used as the plain DFT combiner.

    Rows are ``k = m_y * k_x + k_y``. When ``m_rf`` is a multiple of ``m_y``
    every y-beam is kept and the x-beams are decimated evenly; otherwise the
    rows are spread evenly over ``0..M-1``.
    """
    m = geom.m
    if m_rf % geom.m_y == 0 and geom.m_x % (m_rf // geom.m_y) == 0:
        step = geom.m_x // (m_rf // geom.m_y)
        kx = np.arange(0, geom.m_x, step)
        return (geom.m_y * kx[:, None] + np.arange(geom.m_y)[None, :]).ravel()
    return np.floor(np.arange(m_rf) * m / m_rf).astype(int)


def design_combiner(prev_angles, geom: ArrayGeometry, m_rf: int) -> np.ndarray:
    """Analog combiner with unit Frobenius norm.

    Without ``prev_angles``: the DFT rows picked by ``dft_rows``.
    With ``prev_angles``: row 0 is ``sqrt(M) a^H(prev)`` and the remaining
    rows are the DFT rows least correlated with it. Every entry keeps the
    same modulus ``1/sqrt(m_rf M)``.
    """
    m = geom.m
    if not 1 <= m_rf <= m:
        raise ValueError("m_rf must lie in [1, M]")
    F = dft_matrix(m)
    if prev_angles is None:
        return _normalize(F[dft_rows(geom, m_rf)])
    a = array_response(prev_angles[0], prev_angles[1], geom)
    corr = np.abs(F @ a)
    order = np.argsort(corr, kind="stable")[: m_rf - 1]
    W = np.vstack([np.sqrt(m) * a.conj()[None, :], F[np.sort(order)]])
    return _normalize(W)


def random_combiner(geom: ArrayGeometry, m_rf: int, rng) -> np.ndarray:
    """Random-phase constant-modulus combiner, unit Frobenius norm."""
    phases = rng.uniform(0.0, 2 * np.pi, size=(m_rf, geom.m))
    return _normalize(np.exp(1j * phases))


def combiner_pinv(W, power: float) -> np.ndarray:
    """``(sqrt(P) W)^+``; rejects combiners without full row rank."""
    W = np.asarray(W)
    if not power > 0:
        raise EstimationError("transmit power must be positive")
    if W.ndim != 2 or W.shape[0] > W.shape[1]:
        raise EstimationError("combiner does not have full row rank")
    W = np.ascontiguousarray(W, dtype=complex)
    return _combiner_pinv_cached(W.shape, W.tobytes(), float(power)).copy()


# the same W serves the tracked and the rough LS of a block, and every block of a DFT run
@lru_cache(maxsize=8)
def _combiner_pinv_cached(shape, raw: bytes, power: float) -> np.ndarray:
    W = np.frombuffer(raw, dtype=complex).reshape(shape)
    u, s, vh = np.linalg.svd(np.sqrt(power) * W, full_matrices=False)
    if s.size == 0 or s[-1] <= 1e-10 * s[0]:
        raise EstimationError("combiner does not have full row rank")
    return (vh.conj().T / s) @ u.conj().T


def _derotate(block, doppler: float, t_sym: float) -> np.ndarray:
    """``(1/N_P) sum_b rbar(b) exp(-j 2 pi u b T)``."""
    block = np.asarray(block)
    b = np.arange(block.shape[1])
    return block @ np.exp(-2j * np.pi * doppler * b * t_sym) / block.shape[1]


def ls_summation_term(block, W, angles, doppler_hat: float, power: float, t_sym: float, geom: ArrayGeometry) -> complex:
    """LS estimate of the aggregate path gain at the given angles and Doppler."""
    v = np.sqrt(power) * (np.asarray(W) @ array_response(angles[0], angles[1], geom))
    vv = np.vdot(v, v).real
    if not vv > 0:
        raise EstimationError("effective steering vector is zero")
    return complex(np.vdot(v, _derotate(block, doppler_hat, t_sym)) / vv)


def ls_csi(block, W, doppler_hat: float, power: float, t_sym: float, W_pinv=None) -> np.ndarray:
    """LS channel estimate ``(sqrt(P) W)^+`` applied to the Doppler-derotated pilot average."""
    if W_pinv is None:
        W_pinv = combiner_pinv(W, power)
    return W_pinv @ _derotate(block, doppler_hat, t_sym)
