"""Fisher information and Cramer-Rao bounds for the rough estimators.

The aggregate gain ``C~`` is treated as a known nuisance, so the Doppler
bound is scalar and the angle bound is 2x2. The bounds double as the
predicted measurement-noise covariance of the tracking filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .chanmodel import ArrayGeometry, PilotConfig, array_response, ula_response, virtual_angles
from .estim import EstimationError, RoughEstimate, ls_summation_term
from .numkit import hermitian_eig

SIGMA_COND_MAX = 1e12
FIM_COND_MAX = 1e12


class ConditioningError(ArithmeticError):
    """The combiner covariance ``W W^H`` is singular."""


class UnboundedCrlbError(ArithmeticError):
    """Fisher information is zero or singular, so the bound is infinite."""


class CrlbPredictionError(RuntimeError):
    """Predicted measurement covariance is not usable for this block."""


@dataclass(frozen=True)
class FimAngles:
    entries: np.ndarray  # 2x2, order (elevation, azimuth)

    def __post_init__(self):
        e = np.asarray(self.entries, float)
        if e.shape != (2, 2):
            raise ValueError("angle FIM must be 2x2")
        if abs(e[0, 1] - e[1, 0]) > 1e-12 * max(np.abs(e).max(), 1e-300):
            raise ValueError("angle FIM must be symmetric")


@dataclass(frozen=True)
class CrlbPrediction:
    var_doppler: float  # Hz^2
    var_elev: float  # rad^2
    var_azim: float  # rad^2

    def __post_init__(self):
        for name in ("var_doppler", "var_elev", "var_azim"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise CrlbPredictionError(f"{name} = {v!r} is not a positive finite variance")

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.var_doppler, self.var_elev, self.var_azim])

    @classmethod
    def from_std(cls, sigma_doppler: float, sigma_elev: float, sigma_azim: float) -> "CrlbPrediction":
        return cls(sigma_doppler**2, sigma_elev**2, sigma_azim**2)


def array_response_derivs(theta_e: float, theta_a: float, geom: ArrayGeometry):
    """Partial derivatives of the UPA response w.r.t. elevation and azimuth."""
    vx, vy = virtual_angles(theta_e, theta_a)
    ax = ula_response(geom.m_x, vx)
    ay = ula_response(geom.m_y, vy)
    dax = 1j * np.pi * np.arange(geom.m_x) * ax  # d a_x / d vx
    day = 1j * np.pi * np.arange(geom.m_y) * ay
    dvx_de = np.sin(theta_a) * np.cos(theta_e)
    dvx_da = np.cos(theta_a) * np.sin(theta_e)
    dvy_de = -np.sin(theta_e)
    d_elev = np.kron(dax * dvx_de, ay) + np.kron(ax, day * dvy_de)
    d_azim = np.kron(dax * dvx_da, ay)
    return d_elev, d_azim


def _whitened(W) -> np.ndarray:
    """``Sigma^{-1/2} W`` with ``Sigma = W W^H``."""
    W = np.ascontiguousarray(W, dtype=complex)
    if W.ndim != 2 or W.shape[0] > W.shape[1]:
        raise ConditioningError("W W^H is singular: more RF chains than antennas")
    return _whitened_cached(W.shape, W.tobytes()).copy()


@lru_cache(maxsize=8)
def _whitened_cached(shape, raw: bytes) -> np.ndarray:
    W = np.frombuffer(raw, dtype=complex).reshape(shape)
    eig = hermitian_eig(W @ W.conj().T)
    lam = eig.eigenvalues
    if not lam[-1] > 0 or lam[0] <= lam[-1] / SIGMA_COND_MAX:
        raise ConditioningError("W W^H is singular or ill-conditioned")
    v = eig.eigenvectors
    return ((v / np.sqrt(lam)) @ v.conj().T) @ W


def _check_noise(noise_var: float):
    if not noise_var > 0:
        raise UnboundedCrlbError("noise variance must be positive for a finite bound")


def fim_doppler(angles, c_tilde: complex, W, power: float, noise_var: float, n_pilots: int, t_sym: float, geom: ArrayGeometry) -> float:
    _check_noise(noise_var)
    wa = _whitened(W) @ array_response(angles[0], angles[1], geom)
    n = n_pilots
    lag_sum = n * (n - 1) * (2 * n - 1)
    gain = np.vdot(wa, wa).real * abs(c_tilde) ** 2
    return float(4 * np.pi**2 / (3 * noise_var) * power * t_sym**2 * lag_sum * gain)


def crlb_doppler(fim: float) -> float:
    if not fim > 0:
        raise UnboundedCrlbError("Doppler Fisher information is zero")
    return 1.0 / fim


def fim_angles(angles, c_tilde: complex, W, power: float, noise_var: float, n_pilots: int, geom: ArrayGeometry) -> FimAngles:
    _check_noise(noise_var)
    ww = _whitened(W)
    d_elev, d_azim = array_response_derivs(angles[0], angles[1], geom)
    ve, va = ww @ d_elev, ww @ d_azim
    scale = 2 * power * n_pilots / noise_var * abs(c_tilde) ** 2
    off = np.vdot(ve, va).real
    entries = scale * np.array([[np.vdot(ve, ve).real, off], [off, np.vdot(va, va).real]])
    return FimAngles(entries)


def crlb_angles(fim: FimAngles) -> tuple[float, float]:
    """Diagonal of the inverse angle FIM."""
    i = np.asarray(fim.entries, float)
    det = i[0, 0] * i[1, 1] - i[0, 1] * i[1, 0]
    if not det > 0 or np.linalg.cond(i) > FIM_COND_MAX:
        raise UnboundedCrlbError("angle FIM is singular")
    return float(i[1, 1] / det), float(i[0, 0] / det)


def crlb_at(angles, c_tilde: complex, W, power: float, noise_var: float, pilots: PilotConfig, geom: ArrayGeometry) -> CrlbPrediction:
    """All three bounds at a given angle pair and aggregate gain."""
    try:
        var_u = crlb_doppler(fim_doppler(angles, c_tilde, W, power, noise_var, pilots.n_pilots, pilots.t_sym, geom))
        var_e, var_a = crlb_angles(fim_angles(angles, c_tilde, W, power, noise_var, pilots.n_pilots, geom))
    except (UnboundedCrlbError, ConditioningError) as exc:
        raise CrlbPredictionError(str(exc)) from exc
    return CrlbPrediction(var_u, var_e, var_a)


def predict_measurement_cov(
    block_index: int,
    rough: RoughEstimate,
    prev_update,
    block,
    W,
    power: float,
    noise_var: float,
    pilots: PilotConfig,
    geom: ArrayGeometry,
) -> CrlbPrediction:
    """Predicted rough-measurement variances for one block.

    Evaluation point: the rough estimates on the first block, the previous
    block's tracked parameters afterwards. ``C~`` comes from LS at that point.
    """
    src = rough.z_re if block_index == 0 or prev_update is None else prev_update
    angles = (src.elevation, src.azimuth)
    if not np.all(np.isfinite([src.doppler, *angles])):
        raise CrlbPredictionError("evaluation point has non-finite parameters")
    try:
        c_hat = ls_summation_term(block, W, angles, src.doppler, power, pilots.t_sym, geom)
    except EstimationError as exc:
        raise CrlbPredictionError(str(exc)) from exc
    return crlb_at(angles, c_hat, W, power, noise_var, pilots, geom)
