"""One Monte Carlo trial: truth simulation, block synthesis and tracking.

Every trial owns independent random streams derived from
``SeedSequence([master_seed, trial])``, one per purpose, so the same trial
index sees the same truth, paths and noise whichever chain or combiner runs
it (common random numbers across sweep points).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chanmodel import array_response, draw_noise, draw_paths, large_scale_beta, summation_term, synth_received_block
from ..crlb import CrlbPredictionError, crlb_at
from ..ekf import EkfState, TruthHint, run_block, rough_estimate, select_combiner
from ..estim import EstimationError, design_combiner, ls_csi, ls_summation_term
from ..geomkit import array_frame, evolve_state, measurement_array
from .scenario import Scenario

CHAINS = ("jpct", "esprit+ls")
_STREAMS = ("truth", "paths", "noise", "combiner", "report")


@dataclass
class TrialResult:
    """Per-block arrays, shape ``(N_B, 3)`` for parameters and ``(N_B, M)`` for channels.

    Parameter columns are ``[doppler, elevation, azimuth]``. Variances in
    ``crlb_*`` are NaN where a chain does not produce them.
    """

    truth: np.ndarray
    channels: np.ndarray
    tracked: np.ndarray  # JPCT updated parameters (NaN for esprit+ls)
    rough: np.ndarray
    csi: np.ndarray  # chain's CSI: JPCT or ESPRIT+LS
    rough_csi: np.ndarray  # LS with the rough Doppler
    crlb_filter: np.ndarray  # variances the filter used
    crlb_rough: np.ndarray  # bounds evaluated at the rough estimates
    notes: list


def trial_streams(master_seed: int, trial: int) -> dict:
    seqs = np.random.SeedSequence([int(master_seed), int(trial)]).spawn(len(_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, seqs)}


def simulate_truth(scn: Scenario, rng) -> tuple[np.ndarray, np.ndarray]:
    """Satellite states (deterministic) and GU states (with process noise), each ``(N_B, 6)``."""
    f_sat, f_gu = scn.evolutions()
    q_sat, q_gu = scn.initial_states()
    noise = scn.process_noise
    sats, gus = [q_sat], [q_gu]
    for _ in range(1, scn.n_blocks):
        sats.append(evolve_state(sats[-1], f_sat))
        gus.append(evolve_state(gus[-1], f_gu, noise, rng))
    return np.array(sats), np.array(gus)


def run_trial(scn: Scenario, master_seed: int | None = None, trial: int = 0, chain: str = "jpct", **tracker_overrides) -> TrialResult:
    """Simulate one frame of ``N_B`` blocks and run one estimation chain on it."""
    if chain not in CHAINS:
        raise ValueError(f"chain must be one of {CHAINS}, got {chain!r}")
    seed = scn.seed if master_seed is None else master_seed
    rngs = trial_streams(seed, trial)
    config = scn.tracker_config(**tracker_overrides)
    link, geom, pilots = config.link, config.geom, config.pilots
    n_b, m = scn.n_blocks, geom.m

    sats, gus = simulate_truth(scn, rngs["truth"])
    report = gus[0].copy()
    report += np.array([scn.init_sigma_pos] * 3 + [scn.init_sigma_vel] * 3) * rngs["report"].standard_normal(6)
    cov0 = np.diag([scn.sigma_u**2] * 3 + [scn.sigma_v**2] * 3)
    state = EkfState(sats[0].copy(), report, cov0)

    res = TrialResult(
        truth=np.empty((n_b, 3)),
        channels=np.empty((n_b, m), complex),
        tracked=np.full((n_b, 3), np.nan),
        rough=np.full((n_b, 3), np.nan),
        csi=np.full((n_b, m), np.nan + 0j),
        rough_csi=np.full((n_b, m), np.nan + 0j),
        crlb_filter=np.full((n_b, 3), np.nan),
        crlb_rough=np.full((n_b, 3), np.nan),
        notes=[],
    )
    prev = None
    prev_rough_angles = None
    for n in range(n_b):
        frame = array_frame(sats[n])
        z = measurement_array(sats[n], gus[n], frame, link.lambda_c)
        res.truth[n] = z
        paths = draw_paths(scn.n_paths, link, large_scale_beta(float(np.linalg.norm(sats[n, :3] - gus[n, :3])), link), rngs["paths"])
        c_tilde = summation_term(paths, link, pilots.subcarrier)
        h = c_tilde * array_response(z[1], z[2], geom)
        res.channels[n] = h
        noise = draw_noise(m, pilots.n_pilots, rngs["noise"])
        # drawn for every chain so the combiner stream stays aligned
        W_random = select_combiner(config, n, prev, rngs["combiner"]) if config.combiner == "random" else None

        if chain == "jpct":
            W = W_random if W_random is not None else select_combiner(config, n, prev)
            block = synth_received_block(h, z[0], W, pilots, link, noise=noise)
            truth_hint = TruthHint(float(z[1]), float(z[2]), c_tilde)
            result = run_block(state, block, W, n, config, prev=prev, truth=truth_hint)
            res.tracked[n] = result.updated_params
            res.rough[n] = result.rough.z_re
            res.csi[n] = result.csi
            res.crlb_filter[n] = [result.predicted_cov.var_doppler, result.predicted_cov.var_elev, result.predicted_cov.var_azim]
            res.notes.extend(f"block {n}: {note}" for note in result.notes)
            rough = result.rough.z_re
            if np.all(np.isfinite(rough)):
                res.rough_csi[n] = ls_csi(block, W, rough.doppler, link.tx_power, pilots.t_sym)
                res.crlb_rough[n] = _crlb_at_rough(block, W, rough, config)
            state, prev = result.state, result
        else:
            if W_random is not None:
                W = W_random
            elif config.combiner == "dft" or prev_rough_angles is None:
                W = design_combiner(None, geom, config.m_rf)
            else:
                W = design_combiner(prev_rough_angles, geom, config.m_rf)
            block = synth_received_block(h, z[0], W, pilots, link, noise=noise)
            try:
                est = rough_estimate(block, W, config)
            except EstimationError as exc:
                res.notes.append(f"block {n}: rough estimation failed: {exc}")
                continue
            res.rough[n] = est.z_re
            res.csi[n] = ls_csi(block, W, est.z_re.doppler, link.tx_power, pilots.t_sym)
            res.rough_csi[n] = res.csi[n]
            prev_rough_angles = (est.z_re.elevation, est.z_re.azimuth)
    return res


def _crlb_at_rough(block, W, rough, config) -> np.ndarray:
    angles = (rough.elevation, rough.azimuth)
    link, pilots = config.link, config.pilots
    try:
        c_hat = ls_summation_term(block, W, angles, rough.doppler, link.tx_power, pilots.t_sym, config.geom)
        p = crlb_at(angles, c_hat, W, link.tx_power, link.noise_var, pilots, config.geom)
    except (CrlbPredictionError, EstimationError):
        return np.full(3, np.nan)
    return np.array([p.var_doppler, p.var_elev, p.var_azim])
