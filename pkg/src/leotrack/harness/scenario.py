"""Scenario configuration: defaults, TOML loading and derived model objects.

Config files are TOML with one table per group (``[link]``, ``[frame]``,
...). Keys may also be written dotted at top level (``frame.n_pilots = 20``).
Omitted keys keep their defaults; unknown keys are rejected.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..chanmodel import ArrayGeometry, LinkBudget, PilotConfig, db_to_linear, large_scale_beta
from ..estim import AngleGrid
from ..geomkit import (
    EvolutionMatrix,
    OrbitSpec,
    ProcessNoiseSpec,
    build_evolution,
    make_state,
    orbit_from_normal,
    orbit_velocity,
)
from ..ekf import COMBINERS, TrackerConfig


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# (config key, field name, default, unit / note)
_KEYS = [
    ("link.carrier_mhz", "f_c_mhz", 1910.0, "carrier frequency"),
    ("link.bandwidth_mhz", "bandwidth_mhz", 4.0, "system bandwidth"),
    ("link.tx_power_dbm", "tx_power_dbm", 30.0, "GU transmit power"),
    ("link.antenna_gain_dbi", "antenna_gain_dbi", 8.0, "satellite antenna gain"),
    ("link.rician", "rician", 8.0, "Rician factor (linear)"),
    ("link.g_over_t_db", "g_over_t_db", 1.0, "G/T in dB/K"),
    ("link.boltzmann", "boltzmann", 1.38e-23, "J/K"),
    ("link.speed_of_light", "speed_of_light", 3e8, "m/s"),
    ("link.snr_db", "snr_db", -10.0, "per-antenna receive SNR at block 0"),
    ("link.noise_var", "noise_var", None, "raw noise variance in W; overrides snr_db"),
    ("frame.n_subcarriers", "n_subcarriers", 64, ""),
    ("frame.subcarrier", "subcarrier", 1, "pilot subcarrier index"),
    ("frame.t_sym", "t_sym", 8e-6, "OFDM symbol duration, s"),
    ("frame.n_ofdm", "n_ofdm", 312500, "symbols per block"),
    ("frame.t_block", "t_block", 2.5, "block duration, s"),
    ("frame.n_blocks", "n_blocks", 10, ""),
    ("frame.n_pilots", "n_pilots", 10, "pilot symbols per block"),
    ("array.m_x", "m_x", 8, ""),
    ("array.m_y", "m_y", 8, ""),
    ("array.m_rf", "m_rf", 32, "RF chains"),
    ("array.n_elev", "n_elev", 100, "elevation grid points"),
    ("array.n_azim", "n_azim", 100, "azimuth grid points"),
    ("channel.n_paths", "n_paths", 2, "LOS plus NLOS paths"),
    ("orbit.earth_radius", "earth_radius", 6370e3, "m"),
    ("orbit.altitude", "altitude", 600e3, "satellite altitude, m"),
    ("orbit.sat_speed", "sat_speed", 7600.0, "m/s"),
    ("orbit.sat_inclination_deg", "sat_inclination_deg", 53.0, ""),
    ("orbit.sat_node_deg", "sat_node_deg", 0.0, "X-axis to node line"),
    ("orbit.gu_speed_kmh", "gu_speed_kmh", 100.0, ""),
    ("orbit.gu_position", "gu_position", (5e6, 2.7908e6, 2.7908e6), "m, ECF"),
    ("orbit.gu_normal", "gu_normal", None, "GU rotation axis; default [1, -1, (y-x)/z]"),
    ("noise.sigma_u", "sigma_u", 10.0, "GU position process noise, m"),
    ("noise.sigma_v", "sigma_v", 1.0, "GU velocity process noise, m/s"),
    ("noise.init_sigma_pos", "init_sigma_pos", 0.0, "error of the initial GU report, m"),
    ("noise.init_sigma_vel", "init_sigma_vel", 0.0, "error of the initial GU report, m/s"),
    ("tracker.combiner", "combiner", "proposed", "proposed | dft | random"),
    ("tracker.genie", "genie", False, "evaluate bounds at the true parameters"),
    ("tracker.crlb_at_rough", "crlb_at_rough", False, "bounds at rough estimates every block"),
    ("tracker.fallback_sigma_doppler", "fallback_sigma_doppler", 100.0, "Hz"),
    ("tracker.fallback_sigma_angle", "fallback_sigma_angle", 0.01, "rad"),
    ("run.seed", "seed", 0, "master seed"),
    ("run.trials", "trials", 500, "Monte Carlo trials per point"),
]
KEY_TO_FIELD = {k: f for k, f, _, _ in _KEYS}
FIELD_TO_KEY = {f: k for k, f, _, _ in _KEYS}


@dataclass(frozen=True)
class Scenario:
    f_c_mhz: float = 1910.0
    bandwidth_mhz: float = 4.0
    tx_power_dbm: float = 30.0
    antenna_gain_dbi: float = 8.0
    rician: float = 8.0
    g_over_t_db: float = 1.0
    boltzmann: float = 1.38e-23
    speed_of_light: float = 3e8
    snr_db: float = -10.0
    noise_var: float | None = None
    n_subcarriers: int = 64
    subcarrier: int = 1
    t_sym: float = 8e-6
    n_ofdm: int = 312500
    t_block: float = 2.5
    n_blocks: int = 10
    n_pilots: int = 10
    m_x: int = 8
    m_y: int = 8
    m_rf: int = 32
    n_elev: int = 100
    n_azim: int = 100
    n_paths: int = 2
    earth_radius: float = 6370e3
    altitude: float = 600e3
    sat_speed: float = 7600.0
    sat_inclination_deg: float = 53.0
    sat_node_deg: float = 0.0
    gu_speed_kmh: float = 100.0
    gu_position: tuple = (5e6, 2.7908e6, 2.7908e6)
    gu_normal: tuple | None = None
    sigma_u: float = 10.0
    sigma_v: float = 1.0
    init_sigma_pos: float = 0.0
    init_sigma_vel: float = 0.0
    combiner: str = "proposed"
    genie: bool = False
    crlb_at_rough: bool = False
    fallback_sigma_doppler: float = 100.0
    fallback_sigma_angle: float = 0.01
    seed: int = 0
    trials: int = 500

    def __post_init__(self):
        validate(self)

    # derived quantities
    @property
    def m(self) -> int:
        return self.m_x * self.m_y

    @property
    def delta_f(self) -> float:
        return self.bandwidth_mhz * 1e6 / self.n_subcarriers

    @property
    def tx_power(self) -> float:
        return db_to_linear(self.tx_power_dbm - 30.0)

    @property
    def geom(self) -> ArrayGeometry:
        return ArrayGeometry(self.m_x, self.m_y)

    @property
    def grid(self) -> AngleGrid:
        return AngleGrid(self.n_elev, self.n_azim)

    @property
    def pilots(self) -> PilotConfig:
        return PilotConfig.zadoff_chu(self.n_pilots, self.t_sym, self.subcarrier)

    @property
    def process_noise(self) -> ProcessNoiseSpec:
        return ProcessNoiseSpec(self.sigma_u, self.sigma_v)

    def with_overrides(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def base_link(self, noise_var: float = 1.0) -> LinkBudget:
        return LinkBudget(
            f_c=self.f_c_mhz * 1e6,
            delta_f=self.delta_f,
            B_w=self.bandwidth_mhz * 1e6,
            G_over_T=db_to_linear(self.g_over_t_db),
            gamma=db_to_linear(self.antenna_gain_dbi),
            rician=self.rician,
            boltzmann=self.boltzmann,
            tx_power=self.tx_power,
            noise_var=noise_var,
            c=self.speed_of_light,
        )

    def resolved_noise_var(self) -> float:
        """Noise variance from the raw override, else from the target SNR.

        SNR is the per-antenna ratio ``P gamma^2 beta / (M sigma_n^2)`` with
        ``beta`` at the block-0 slant range.
        """
        if self.noise_var is not None:
            return float(self.noise_var)
        lb = self.base_link()
        q_sat, q_gu = self.initial_states()
        beta = large_scale_beta(float(np.linalg.norm(q_sat[:3] - q_gu[:3])), lb)
        signal = lb.tx_power * lb.gamma**2 * beta / self.m
        return signal / db_to_linear(self.snr_db)

    def link(self) -> LinkBudget:
        return self.base_link(self.resolved_noise_var())

    # geometry
    def sat_orbit(self) -> OrbitSpec:
        radius = self.earth_radius + self.altitude
        return OrbitSpec(
            theta_z=math.radians(self.sat_node_deg),
            theta_x=math.radians(self.sat_inclination_deg),
            omega=self.sat_speed / radius,
            radius=radius,
        )

    def gu_orbit(self) -> OrbitSpec:
        p = np.asarray(self.gu_position, float)
        if self.gu_normal is None:
            normal = np.array([1.0, -1.0, (p[1] - p[0]) / p[2]])
        else:
            normal = np.asarray(self.gu_normal, float)
        radius = float(np.linalg.norm(p))
        return orbit_from_normal(normal, self.gu_speed_kmh / 3.6, radius)

    def evolutions(self) -> tuple[EvolutionMatrix, EvolutionMatrix]:
        return build_evolution(self.sat_orbit(), self.t_block), build_evolution(self.gu_orbit(), self.t_block)

    def initial_states(self) -> tuple[np.ndarray, np.ndarray]:
        sat = self.sat_orbit()
        p_s = np.array([sat.radius, 0.0, 0.0])
        # rotate the reference point onto the node line
        c, s = math.cos(sat.theta_z), math.sin(sat.theta_z)
        p_s = np.array([c * p_s[0], s * p_s[0], 0.0])
        p_u = np.asarray(self.gu_position, float)
        q_sat = make_state(p_s, orbit_velocity(sat, p_s))
        q_gu = make_state(p_u, orbit_velocity(self.gu_orbit(), p_u))
        return q_sat, q_gu

    def tracker_config(self, **overrides) -> TrackerConfig:
        f_sat, f_gu = self.evolutions()
        kwargs = dict(
            geom=self.geom,
            grid=self.grid,
            link=self.link(),
            pilots=self.pilots,
            m_rf=self.m_rf,
            evolution_sat=f_sat,
            evolution_gu=f_gu,
            process_noise=self.process_noise,
            combiner=self.combiner,
            genie=self.genie,
            crlb_at_rough=self.crlb_at_rough,
            fallback_sigma_doppler=self.fallback_sigma_doppler,
            fallback_sigma_angle=self.fallback_sigma_angle,
        )
        kwargs.update(overrides)
        return TrackerConfig(**kwargs)


def _fail(name: str, message: str):
    raise ConfigError(FIELD_TO_KEY.get(name, name), message)


def validate(scn: Scenario) -> None:
    positive = (
        "f_c_mhz", "bandwidth_mhz", "boltzmann", "speed_of_light", "t_sym", "t_block",
        "earth_radius", "altitude", "sat_speed", "fallback_sigma_doppler", "fallback_sigma_angle",
    )
    for name in positive:
        v = getattr(scn, name)
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0):
            _fail(name, f"must be a positive number, got {v!r}")
    ints = {
        "n_subcarriers": 1, "n_ofdm": 1, "n_blocks": 1, "n_pilots": 3, "m_x": 1, "m_y": 1,
        "m_rf": 1, "n_elev": 2, "n_azim": 2, "n_paths": 1, "trials": 1, "subcarrier": 0, "seed": 0,
    }
    for name, low in ints.items():
        v = getattr(scn, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < low:
            _fail(name, f"must be an integer >= {low}, got {v!r}")
    for name in ("sigma_u", "sigma_v", "init_sigma_pos", "init_sigma_vel", "rician", "gu_speed_kmh"):
        v = getattr(scn, name)
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0):
            _fail(name, f"must be a number >= 0, got {v!r}")
    for name in ("tx_power_dbm", "antenna_gain_dbi", "g_over_t_db", "snr_db", "sat_inclination_deg", "sat_node_deg"):
        v = getattr(scn, name)
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)):
            _fail(name, f"must be a finite number, got {v!r}")
    if scn.noise_var is not None and not (isinstance(scn.noise_var, (int, float)) and scn.noise_var >= 0):
        _fail("noise_var", f"must be a number >= 0, got {scn.noise_var!r}")
    if scn.subcarrier >= scn.n_subcarriers:
        _fail("subcarrier", "must be below n_subcarriers")
    if scn.m_rf > scn.m_x * scn.m_y:
        _fail("m_rf", "cannot exceed the number of antennas m_x * m_y")
    if abs(scn.t_block - scn.n_ofdm * scn.t_sym) > 1e-9 * scn.t_block:
        _fail("t_block", f"must equal n_ofdm * t_sym = {scn.n_ofdm * scn.t_sym!r}, got {scn.t_block!r}")
    if scn.n_pilots > scn.n_ofdm:
        _fail("n_pilots", "cannot exceed the symbols per block")
    if not 0 <= scn.sat_inclination_deg < 180:
        _fail("sat_inclination_deg", "must lie in [0, 180)")
    if scn.combiner not in COMBINERS:
        _fail("combiner", f"must be one of {COMBINERS}")
    for name in ("genie", "crlb_at_rough"):
        if not isinstance(getattr(scn, name), bool):
            _fail(name, "must be true or false")
    for name in ("gu_position", "gu_normal"):
        v = getattr(scn, name)
        if v is None and name == "gu_normal":
            continue
        arr = np.asarray(v, dtype=float) if _is_vector(v) else None
        if arr is None or arr.shape != (3,) or not np.all(np.isfinite(arr)) or not np.linalg.norm(arr) > 0:
            _fail(name, f"must be a non-zero 3-vector, got {v!r}")
    if scn.gu_normal is None and scn.gu_position[2] == 0:
        _fail("gu_position", "default GU orbit normal needs a non-zero z coordinate")


def _is_vector(v) -> bool:
    return isinstance(v, (list, tuple)) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)


def _flatten(table: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in table.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


_FLOAT_FIELDS = {f.name for f in fields(Scenario) if f.type in ("float", "float | None")}


def scenario_from_mapping(data: dict) -> Scenario:
    """Build a scenario from a (possibly nested) mapping of config keys."""
    kwargs = {}
    for key, value in _flatten(data).items():
        if key not in KEY_TO_FIELD:
            raise ConfigError(key, "unknown configuration key")
        name = KEY_TO_FIELD[key]
        if name in _FLOAT_FIELDS and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if name in ("gu_position", "gu_normal") and isinstance(value, list):
            value = tuple(float(x) if isinstance(x, int) and not isinstance(x, bool) else x for x in value)
        kwargs[name] = value
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    """Read a TOML scenario file; an empty file gives the defaults."""
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML parse error: {exc}") from exc
    return scenario_from_mapping(data)


def describe_keys() -> list[tuple[str, object, str]]:
    """``(key, default, note)`` for every supported configuration key."""
    return [(k, d, note) for k, _, d, note in _KEYS]
