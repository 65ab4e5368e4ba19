"""Earth-centred fixed (ECF) geometry for the satellite/ground-user link.

State vectors are length-6 float arrays ``[x, y, z, vx, vy, vz]`` in metres
and metres per second. The measurement functions broadcast over leading
dimensions, so a stack of perturbed states can be mapped in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GeometryError(ValueError):
    """Measurement or frame is undefined at the given states."""


class AzimuthUndefinedError(GeometryError):
    """The ground user projects onto the array boresight point."""


@dataclass(frozen=True)
class OrbitSpec:
    theta_z: float  # X-axis to node line, rad
    theta_x: float  # inclination of orbit plane to XOY, rad, in [0, pi)
    omega: float  # signed angular rate, rad/s (positive = counterclockwise)
    radius: float  # m

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("orbit radius must be positive")
        if not 0.0 <= self.theta_x < np.pi:
            raise ValueError("theta_x must lie in [0, pi)")
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")

    @property
    def normal(self) -> np.ndarray:
        """Unit normal of the orbit plane (the local rotation axis)."""
        return rot_about_z(self.theta_z) @ rot_about_x(self.theta_x) @ np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class EvolutionMatrix:
    F: np.ndarray  # 3x3 rotation applied to position and velocity alike

    @property
    def F_tilde(self) -> np.ndarray:
        out = np.zeros((6, 6))
        out[:3, :3] = self.F
        out[3:, 3:] = self.F
        return out


@dataclass(frozen=True)
class ArrayFrame:
    n: np.ndarray  # unit normal of the UPA plane (boresight)
    s_x: np.ndarray
    s_y: np.ndarray


class MeasurementVector(NamedTuple):
    doppler: float  # Hz
    elevation: float  # rad
    azimuth: float  # rad


@dataclass(frozen=True)
class ProcessNoiseSpec:
    sigma_pos: float = 0.0  # m, per axis
    sigma_vel: float = 0.0  # m/s, per axis

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_vel < 0:
            raise ValueError("process noise standard deviations must be >= 0")

    @property
    def std(self) -> np.ndarray:
        return np.array([self.sigma_pos] * 3 + [self.sigma_vel] * 3, dtype=float)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.std**2)


def make_state(position, velocity) -> np.ndarray:
    return np.concatenate([np.asarray(position, float), np.asarray(velocity, float)])


def rot_about_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_about_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_angle(F: np.ndarray) -> float:
    """Rotation angle of a 3x3 rotation matrix, accurate for small angles."""
    skew = np.array([F[2, 1] - F[1, 2], F[0, 2] - F[2, 0], F[1, 0] - F[0, 1]])
    return float(np.arctan2(np.linalg.norm(skew) / 2.0, (np.trace(F) - 1.0) / 2.0))


def build_evolution(spec: OrbitSpec, block_duration: float) -> EvolutionMatrix:
    """Per-block rotation ``P_z P_x P_B P_x^T P_z^T`` of a circular orbit."""
    if not block_duration > 0:
        raise ValueError("block_duration must be positive")
    pz = rot_about_z(spec.theta_z)
    px = rot_about_x(spec.theta_x)
    pb = rot_about_z(spec.omega * block_duration)
    frame = pz @ px
    return EvolutionMatrix(F=frame @ pb @ frame.T)


def orbit_from_normal(normal, speed: float, radius: float) -> OrbitSpec:
    """Orbit whose counterclockwise rotation axis is ``normal``.

    The inverse of ``OrbitSpec.normal``: ``theta_x = arccos(n_z)``,
    ``theta_z = atan2(n_x, -n_y)``.
    """
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    theta_x = float(np.arccos(np.clip(n[2], -1.0, 1.0)))
    theta_z = float(np.arctan2(n[0], -n[1])) if np.hypot(n[0], n[1]) > 0 else 0.0
    return OrbitSpec(theta_z=theta_z, theta_x=theta_x, omega=speed / radius, radius=radius)


def orbit_velocity(spec: OrbitSpec, position) -> np.ndarray:
    """Velocity of uniform circular motion at ``position`` (omega x p)."""
    return spec.omega * np.cross(spec.normal, np.asarray(position, float))


def evolve_state(q, evolution: EvolutionMatrix, noise: ProcessNoiseSpec | None = None, rng=None) -> np.ndarray:
    """One block of state evolution, ``q' = F_tilde q + w``.

    When ``noise`` is given, six standard normals are always drawn from
    ``rng`` (even for zero sigmas) so streams stay aligned across sweeps.
    """
    q = np.asarray(q, float)
    out = evolution.F_tilde @ q
    if noise is not None:
        if rng is None:
            raise ValueError("rng required when noise is given")
        out = out + noise.std * rng.standard_normal(6)
    return out


def array_frame(q_sat) -> ArrayFrame:
    """UPA frame: boresight to the earth centre, plane normal to the orbit plane."""
    q_sat = np.asarray(q_sat, float)
    p, v = q_sat[:3], q_sat[3:]
    p_norm = np.linalg.norm(p)
    if not p_norm > 0:
        raise GeometryError("satellite position is at the origin")
    cross = np.cross(p, v)
    c_norm = np.linalg.norm(cross)
    if not c_norm > 1e-12 * p_norm * max(np.linalg.norm(v), 1e-300):
        raise GeometryError("velocity parallel to position; array frame undefined")
    n = -p / p_norm
    s_x = cross / c_norm
    s_y = np.cross(n, s_x)
    return ArrayFrame(n=n, s_x=s_x, s_y=s_y)


def project_onto_plane(p_u, p_s, n) -> np.ndarray:
    """Foot of the perpendicular from ``p_u`` onto the plane through ``p_s`` with normal ``n``."""
    p_u = np.asarray(p_u, float)
    n = np.asarray(n, float)
    nn = np.dot(n, n)
    if not nn > 0:
        raise GeometryError("plane normal has zero length")
    # n . p_u + C_S with C_S = -n . p_s
    offset = ((p_u - np.asarray(p_s, float)) @ n) / nn
    return p_u - np.multiply.outer(offset, n)


def _los(q_sat, q_gu):
    d = np.asarray(q_sat, float)[..., :3] - np.asarray(q_gu, float)[..., :3]
    dist = np.linalg.norm(d, axis=-1)
    if np.any(dist == 0):
        raise GeometryError("satellite and ground user positions coincide")
    return d, dist


def measure_doppler(q_sat, q_gu, lambda_c: float):
    d, dist = _los(q_sat, q_gu)
    dv = np.asarray(q_sat, float)[..., 3:] - np.asarray(q_gu, float)[..., 3:]
    return -np.sum(dv * d, axis=-1) / (lambda_c * dist)


def measure_elevation(q_sat, q_gu, n):
    d, dist = _los(q_sat, q_gu)
    n = np.asarray(n, float)
    ratio = np.abs(d @ n) / (np.linalg.norm(n) * dist)
    return np.arcsin(np.clip(ratio, -1.0, 1.0))


def measure_azimuth(q_sat, q_gu, frame: ArrayFrame):
    p_s = np.asarray(q_sat, float)[..., :3]
    p_u = np.asarray(q_gu, float)[..., :3]
    sp = project_onto_plane(p_u, p_s, frame.n) - p_s
    sp_norm = np.linalg.norm(sp, axis=-1)
    if np.any(sp_norm <= 1e-12 * np.linalg.norm(p_s, axis=-1)):
        raise AzimuthUndefinedError("ground user lies on the array boresight axis")
    cos_a = (sp @ frame.s_x) / (sp_norm * np.linalg.norm(frame.s_x))
    return np.pi / 2 - np.arccos(np.clip(cos_a, -1.0, 1.0))


def measurement_map(q_sat, q_gu, frame: ArrayFrame, lambda_c: float) -> MeasurementVector:
    z = measurement_array(q_sat, q_gu, frame, lambda_c)
    return MeasurementVector(float(z[0]), float(z[1]), float(z[2]))


def measurement_array(q_sat, q_gu, frame: ArrayFrame, lambda_c: float) -> np.ndarray:
    """Batched ``[doppler, elevation, azimuth]``; output shape ``(..., 3)``."""
    return np.stack(
        [
            measure_doppler(q_sat, q_gu, lambda_c),
            measure_elevation(q_sat, q_gu, frame.n),
            measure_azimuth(q_sat, q_gu, frame),
        ],
        axis=-1,
    )


def jacobian_G(q_sat, q_gu_pred, frame: ArrayFrame, lambda_c: float) -> np.ndarray:
    """3x6 Jacobian of the measurement map w.r.t. the ground-user state.

    Central differences with step ``1e-6 * max(1, |x_i|)`` per coordinate.
    """
    q = np.asarray(q_gu_pred, float)
    h = 1e-6 * np.maximum(1.0, np.abs(q))
    stencil = np.concatenate([q + np.diag(h), q - np.diag(h)])
    try:
        z = measurement_array(q_sat, stencil, frame, lambda_c)
    except GeometryError as exc:
        raise GeometryError(f"measurement map undefined within the Jacobian stencil: {exc}") from exc
    return ((z[:6] - z[6:]) / (2.0 * h)[:, None]).T


def doppler_gradient(q_sat, q_gu, lambda_c: float) -> np.ndarray:
    """Closed-form gradient of the Doppler map w.r.t. the ground-user state."""
    d, dist = _los(q_sat, q_gu)
    unit = d / dist
    dv = np.asarray(q_sat, float)[3:] - np.asarray(q_gu, float)[3:]
    d_pos = (dv - np.dot(dv, unit) * unit) / (lambda_c * dist)
    d_vel = unit / lambda_c
    return np.concatenate([d_pos, d_vel])
