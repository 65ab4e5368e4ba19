"""Parametric uplink channel and de-spread pilot observations.

All quantities are linear (dB conversion happens when a scenario is loaded).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

SPEED_OF_LIGHT = 3e8


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    f_c: float = 1.91e9  # Hz
    delta_f: float = 62.5e3  # Hz
    B_w: float = 4e6  # Hz
    G_over_T: float = db_to_linear(1.0)  # 1/K
    gamma: float = db_to_linear(8.0)  # satellite receive antenna gain
    rician: float = 8.0
    boltzmann: float = 1.38e-23  # J/K
    tx_power: float = 1.0  # W
    noise_var: float = 1.0  # W
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("f_c", "delta_f", "B_w", "G_over_T", "gamma", "boltzmann", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"link budget field {name!r} must be positive")
        if self.rician < 0:
            raise ValueError("rician factor must be >= 0")
        if self.tx_power < 0 or self.noise_var < 0:
            raise ValueError("tx_power and noise_var must be >= 0")

    @property
    def lambda_c(self) -> float:
        return self.c / self.f_c


@dataclass(frozen=True)
class ArrayGeometry:
    m_x: int = 8
    m_y: int = 8

    def __post_init__(self):
        if self.m_x < 1 or self.m_y < 1:
            raise ValueError("array dimensions must be >= 1")

    @property
    def m(self) -> int:
        return self.m_x * self.m_y


@dataclass(frozen=True)
class PathSet:
    gains: np.ndarray  # g_l, LOS first
    delays: np.ndarray  # s
    beta: float
    equivalent_gains: np.ndarray  # g~_l

    @property
    def count(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class PilotConfig:
    n_pilots: int
    t_sym: float
    subcarrier: int
    symbols: np.ndarray

    def __post_init__(self):
        if self.n_pilots < 3:
            raise ValueError("at least 3 pilots are needed for the correlation lags")
        if len(self.symbols) != self.n_pilots:
            raise ValueError("pilot symbol count does not match n_pilots")
        if not np.allclose(np.abs(self.symbols), 1.0, atol=1e-12):
            raise ValueError("pilot symbols must have unit modulus")

    @classmethod
    def zadoff_chu(cls, n_pilots: int, t_sym: float, subcarrier: int, root: int = 1) -> "PilotConfig":
        return cls(n_pilots, t_sym, subcarrier, zc_pilots(n_pilots, root))


def large_scale_beta(distance: float, lb: LinkBudget) -> float:
    """Free-space loss times ``G/(kappa B_w T)``."""
    if not distance > 0:
        raise ValueError("distance must be positive")
    fsl = (lb.c / (4 * np.pi * lb.f_c * distance)) ** 2
    return fsl * lb.G_over_T / (lb.boltzmann * lb.B_w)


def equivalent_gains(gains, rician: float, beta: float, gamma: float, n_paths: int | None = None) -> np.ndarray:
    """Rician split of the path gains into LOS (index 0) and NLOS parts."""
    g = np.asarray(gains, dtype=complex)
    L = len(g) if n_paths is None else n_paths
    if L < 1 or len(g) != L:
        raise ValueError("need one gain per path and at least one path")
    if rician < 0:
        raise ValueError("rician factor must be >= 0")
    out = np.empty(L, dtype=complex)
    if np.isinf(rician):
        out[0] = gamma * np.sqrt(beta) * g[0]
        out[1:] = 0.0
        return out
    out[0] = gamma * np.sqrt(rician * beta / (rician + 1)) * g[0]
    if L > 1:
        out[1:] = gamma * np.sqrt(beta / (rician + 1)) * np.sqrt(1.0 / (L - 1)) * g[1:]
    return out


def draw_paths(n_paths: int, lb: LinkBudget, beta: float, rng) -> PathSet:
    """CN(0,1) gains and delays uniform on ``[0, 1/delta_f)``."""
    g = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    tau = rng.uniform(0.0, 1.0 / lb.delta_f, size=n_paths)
    return PathSet(g, tau, beta, equivalent_gains(g, lb.rician, beta, lb.gamma, n_paths))


def virtual_angles(theta_e, theta_a):
    return np.sin(theta_a) * np.sin(theta_e), np.cos(theta_e)


def ula_response(m: int, virtual) -> np.ndarray:
    """Normalised half-wavelength ULA response; broadcasts over ``virtual``."""
    k = np.arange(m)
    return np.exp(1j * np.pi * np.multiply.outer(virtual, k)) / np.sqrt(m)


def array_response(theta_e, theta_a, geom: ArrayGeometry) -> np.ndarray:
    """Half-wavelength UPA response ``a_x (x) a_y``; broadcasts over angle arrays.

    Output has shape ``(..., M)`` with the y index running fastest.
    """
    vx, vy = virtual_angles(np.asarray(theta_e, float), np.asarray(theta_a, float))
    ax = ula_response(geom.m_x, vx)
    ay = ula_response(geom.m_y, vy)
    a = ax[..., :, None] * ay[..., None, :]
    return a.reshape(a.shape[:-2] + (geom.m,))


def summation_term(paths: PathSet, lb: LinkBudget, subcarrier: int) -> complex:
    """Aggregate gain ``sum_l g~_l exp(-j 2 pi (f_c + m df) tau_l)``."""
    freq = lb.f_c + subcarrier * lb.delta_f
    return complex(np.sum(paths.equivalent_gains * np.exp(-2j * np.pi * freq * paths.delays)))


def synth_channel(paths: PathSet, angles, geom: ArrayGeometry, lb: LinkBudget, subcarrier: int) -> np.ndarray:
    """Common-AoA channel ``h = C~ a(theta_E, theta_A)``."""
    theta_e, theta_a = angles
    return summation_term(paths, lb, subcarrier) * array_response(theta_e, theta_a, geom)


def draw_noise(m: int, n_pilots: int, rng) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples, shape ``(m, n_pilots)``."""
    return (rng.standard_normal((m, n_pilots)) + 1j * rng.standard_normal((m, n_pilots))) / np.sqrt(2)


def synth_received_block(h, doppler: float, W, pilots: PilotConfig, lb: LinkBudget, rng=None, noise=None) -> np.ndarray:
    """De-spread pilot block, one column per pilot symbol.

    ``rbar(b) = sqrt(P) W h exp(j 2 pi u b T) + W n(b) s*(b)`` with
    ``n(b) ~ CN(0, noise_var I_M)``. Pass ``noise`` (unit-variance,
    ``M x N_P``) to reuse draws; otherwise they come from ``rng``.
    """
    h = np.asarray(h, dtype=complex)
    W = np.asarray(W)
    b = np.arange(pilots.n_pilots)
    tone = np.exp(2j * np.pi * doppler * b * pilots.t_sym)
    block = np.sqrt(lb.tx_power) * np.outer(W @ h, tone)
    if lb.noise_var > 0:
        if noise is None:
            noise = draw_noise(len(h), pilots.n_pilots, rng)
        block = block + np.sqrt(lb.noise_var) * (W @ noise) * np.conj(pilots.symbols)
    return block


def zc_pilots(n: int, root: int = 1) -> np.ndarray:
    """Zadoff-Chu sequence of length ``n``."""
    if n < 1:
        raise ValueError("sequence length must be >= 1")
    if gcd(root, n) != 1:
        raise ValueError(f"root {root} is not coprime with length {n}")
    k = np.arange(n)
    return np.exp(-1j * np.pi * root * k * (k + (n % 2)) / n)
