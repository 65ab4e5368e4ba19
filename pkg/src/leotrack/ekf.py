"""Extended Kalman tracking of the ground user and the per-block tracking loop.

Only the ground-user state is filtered. The satellite follows its known
orbit, so its state is simply rotated forward each block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .chanmodel import ArrayGeometry, LinkBudget, PilotConfig
from .crlb import CrlbPrediction, CrlbPredictionError, crlb_at, predict_measurement_cov
from .estim import (
    AngleGrid,
    EstimationError,
    RoughEstimate,
    design_combiner,
    esprit_doppler,
    ls_csi,
    random_combiner,
    somp_angles,
)
from .geomkit import (
    EvolutionMatrix,
    GeometryError,
    MeasurementVector,
    ProcessNoiseSpec,
    array_frame,
    evolve_state,
    jacobian_G,
    measurement_map,
)

COMBINERS = ("proposed", "dft", "random")


class UpdateError(ArithmeticError):
    """Innovation covariance is singular; the update cannot be applied."""


@dataclass(frozen=True)
class EkfState:
    q_sat: np.ndarray
    q_gu: np.ndarray
    cov: np.ndarray  # 6x6 covariance of the ground-user state


@dataclass(frozen=True)
class BlockResult:
    rough: RoughEstimate
    predicted_cov: CrlbPrediction
    updated_params: MeasurementVector
    state: EkfState
    csi: np.ndarray
    z_pred: MeasurementVector | None = None
    notes: tuple[str, ...] = ()  # stage failures and fallbacks taken


@dataclass(frozen=True)
class TruthHint:
    """True angles and aggregate gain, used only by the genie covariance mode."""

    elevation: float
    azimuth: float
    c_tilde: complex


@dataclass(frozen=True)
class TrackerConfig:
    geom: ArrayGeometry = field(default_factory=ArrayGeometry)
    grid: AngleGrid = field(default_factory=AngleGrid)
    link: LinkBudget = field(default_factory=LinkBudget)
    pilots: PilotConfig | None = None
    m_rf: int = 32
    evolution_sat: EvolutionMatrix | None = None
    evolution_gu: EvolutionMatrix | None = None
    process_noise: ProcessNoiseSpec = field(default_factory=ProcessNoiseSpec)
    combiner: str = "proposed"
    genie: bool = False
    # evaluate the predicted bounds at the rough estimates on every block
    crlb_at_rough: bool = False
    fallback_sigma_doppler: float = 100.0  # Hz
    fallback_sigma_angle: float = 0.01  # rad

    def __post_init__(self):
        if self.combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}, got {self.combiner!r}")
        if self.pilots is None:
            raise ValueError("pilot configuration is required")
        if self.evolution_sat is None or self.evolution_gu is None:
            raise ValueError("both evolution matrices are required")

    @property
    def fallback_prediction(self) -> CrlbPrediction:
        s = self.fallback_sigma_angle
        return CrlbPrediction.from_std(self.fallback_sigma_doppler, s, s)


def _symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + c.T)


def predict(state: EkfState, F_sat: EvolutionMatrix, F_gu: EvolutionMatrix, Q_u: ProcessNoiseSpec, lambda_c: float):
    """Time update of both states; returns the prediction and the predicted measurement."""
    q_sat = evolve_state(state.q_sat, F_sat)
    q_gu = evolve_state(state.q_gu, F_gu)
    Ft = F_gu.F_tilde
    cov = _symmetrize(Ft @ state.cov @ Ft.T + Q_u.Q)
    pred = EkfState(q_sat, q_gu, cov)
    return pred, measurement_map(q_sat, q_gu, array_frame(q_sat), lambda_c)


def measurement_vector(z) -> np.ndarray:
    return np.array([z.doppler, z.elevation, z.azimuth], dtype=float)


def kalman_gain(cov: np.ndarray, G: np.ndarray, q_z: np.ndarray) -> np.ndarray:
    S = G @ cov @ G.T + q_z
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e15:
        raise UpdateError("innovation covariance is singular")
    # K = C G^T S^-1, solved rather than inverted
    return np.linalg.solve(S.T, (cov @ G.T).T).T


def update(predicted: EkfState, z_pred, z_rough, q_z: CrlbPrediction, G: np.ndarray) -> EkfState:
    """Measurement update with the predicted rough-measurement covariance."""
    K = kalman_gain(predicted.cov, G, q_z.as_matrix())
    innovation = measurement_vector(z_rough) - measurement_vector(z_pred)
    q_gu = predicted.q_gu + K @ innovation
    cov = _symmetrize((np.eye(6) - K @ G) @ predicted.cov)
    return EkfState(predicted.q_sat, q_gu, cov)


def update_parameters(state: EkfState, frame, lambda_c: float) -> MeasurementVector:
    return measurement_map(state.q_sat, state.q_gu, frame, lambda_c)


def select_combiner(config: TrackerConfig, block_index: int, prev: BlockResult | None, rng=None) -> np.ndarray:
    """Combiner for the coming block.

    ``proposed`` steers its first row at the previous block's tracked angles;
    ``dft`` uses the rows from ``dft_rows``; ``random`` redraws phases every block.
    """
    if config.combiner == "random":
        if rng is None:
            raise ValueError("random combiner needs an rng")
        return random_combiner(config.geom, config.m_rf, rng)
    if config.combiner == "dft" or block_index == 0 or prev is None:
        return design_combiner(None, config.geom, config.m_rf)
    z = prev.updated_params
    return design_combiner((z.elevation, z.azimuth), config.geom, config.m_rf)


def rough_estimate(block, W, config: TrackerConfig) -> RoughEstimate:
    doppler = esprit_doppler(block, config.pilots.t_sym)
    est = somp_angles(block, W, config.grid, config.geom)
    return replace(est, z_re=est.z_re._replace(doppler=doppler))


def _prediction(block_index, rough, prev, block, W, config, truth, notes) -> CrlbPrediction:
    link, pilots = config.link, config.pilots
    try:
        if config.genie:
            if truth is None:
                raise CrlbPredictionError("genie mode needs the true angles and gain")
            return crlb_at((truth.elevation, truth.azimuth), truth.c_tilde, W, link.tx_power, link.noise_var, pilots, config.geom)
        prev_update = None if config.crlb_at_rough or prev is None else prev.updated_params
        return predict_measurement_cov(
            block_index, rough, prev_update, block, W, link.tx_power, link.noise_var, pilots, config.geom
        )
    except CrlbPredictionError as exc:
        notes.append(f"crlb fallback: {exc}")
        return prev.predicted_cov if prev is not None else config.fallback_prediction


def run_block(
    state: EkfState,
    block,
    W,
    block_index: int,
    config: TrackerConfig,
    prev: BlockResult | None = None,
    truth: TruthHint | None = None,
) -> BlockResult:
    """One block of joint parameter and channel tracking.

    ``state`` is the initial report on block 0 (used as the prior directly)
    and the previous block's updated state afterwards.
    """
    notes: list[str] = []
    lambda_c = config.link.lambda_c
    if block_index == 0:
        predicted = state
        z_pred = measurement_map(state.q_sat, state.q_gu, array_frame(state.q_sat), lambda_c)
    else:
        predicted, z_pred = predict(state, config.evolution_sat, config.evolution_gu, config.process_noise, lambda_c)

    try:
        rough = rough_estimate(block, W, config)
    except EstimationError as exc:
        notes.append(f"rough estimation failed: {exc}")
        rough = None

    if rough is not None:
        q_z = _prediction(block_index, rough, prev, block, W, config, truth, notes)
    else:
        q_z = prev.predicted_cov if prev is not None else config.fallback_prediction

    new_state = predicted
    frame = array_frame(predicted.q_sat)
    if rough is not None:
        try:
            G = jacobian_G(predicted.q_sat, predicted.q_gu, frame, lambda_c)
            new_state = update(predicted, z_pred, rough.z_re, q_z, G)
        except (UpdateError, GeometryError) as exc:
            notes.append(f"update skipped: {exc}")
    else:
        nan = float("nan")
        rough = RoughEstimate(MeasurementVector(nan, nan, nan), (-1, -1))

    z_upd = update_parameters(new_state, frame, lambda_c)
    try:
        csi = ls_csi(block, W, z_upd.doppler, config.link.tx_power, config.pilots.t_sym)
    except EstimationError as exc:
        notes.append(f"csi failed: {exc}")
        csi = np.full(config.geom.m, np.nan + 0j)
    return BlockResult(rough, q_z, z_upd, new_state, csi, z_pred, tuple(notes))
