"""Parameter sweeps over Monte Carlo trials and CSV output."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .metrics import nmse, rmse, bound_root
from .runner import TrialResult, run_trial
from .scenario import ConfigError, Scenario

AXES = {
    "snr": "snr_db",
    "pilots": "n_pilots",
    "sigma_u": "sigma_u",
    "sigma_v": "sigma_v",
    "blocks": "n_blocks",
}
METHODS = ("jpct", "jpct-genie", "rough", "esprit+ls")
CSV_HEADER = (
    "axis_value",
    "method",
    "combiner",
    "rmse_doppler_hz",
    "rmse_elev_rad",
    "rmse_azim_rad",
    "nmse",
    "crlb_doppler",
    "crlb_elev",
    "crlb_azim",
    "trials",
)


@dataclass
class MetricSeries:
    """One method/combiner curve along a sweep axis.

    ``crlb_*`` hold root-form bounds (same units as the RMSEs): the variances
    the filter used for ``jpct``/``jpct-genie``, the bounds at the rough
    estimates for ``rough``, NaN for ``esprit+ls``.
    """

    axis: str
    method: str
    combiner: str
    values: list = field(default_factory=list)
    rmse_doppler: list = field(default_factory=list)
    rmse_elev: list = field(default_factory=list)
    rmse_azim: list = field(default_factory=list)
    nmse: list = field(default_factory=list)
    crlb_doppler: list = field(default_factory=list)
    crlb_elev: list = field(default_factory=list)
    crlb_azim: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def rows(self):
        for i, v in enumerate(self.values):
            yield (
                v, self.method, self.combiner,
                self.rmse_doppler[i], self.rmse_elev[i], self.rmse_azim[i], self.nmse[i],
                self.crlb_doppler[i], self.crlb_elev[i], self.crlb_azim[i], self.trials[i],
            )


def _chains_for(methods) -> dict:
    """Which simulation chains each requested method needs."""
    chains = {}
    if "jpct" in methods or "rough" in methods:
        chains["jpct"] = ("jpct", {"genie": False})
    if "jpct-genie" in methods:
        chains["jpct-genie"] = ("jpct", {"genie": True})
    if "esprit+ls" in methods:
        chains["esprit+ls"] = ("esprit+ls", {})
    return chains


def _stack(results: list[TrialResult], attr: str) -> np.ndarray:
    return np.stack([getattr(r, attr) for r in results])


def _summarize(results: list[TrialResult], method: str) -> dict:
    truth = _stack(results, "truth")
    if method in ("jpct", "jpct-genie"):
        est, csi, var = _stack(results, "tracked"), _stack(results, "csi"), _stack(results, "crlb_filter")
    elif method == "rough":
        est, csi, var = _stack(results, "rough"), _stack(results, "rough_csi"), _stack(results, "crlb_rough")
    else:
        est, csi, var = _stack(results, "rough"), _stack(results, "csi"), None
    out = {
        "rmse_doppler": rmse(truth[..., 0], est[..., 0]),
        "rmse_elev": rmse(truth[..., 1], est[..., 1]),
        "rmse_azim": rmse(truth[..., 2], est[..., 2]),
        "nmse": nmse(_stack(results, "channels"), csi),
    }
    for i, name in enumerate(("crlb_doppler", "crlb_elev", "crlb_azim")):
        out[name] = float("nan") if var is None else bound_root(var[..., i])
    return out


def run_point(scn: Scenario, trials: int, chain: str, seed: int, **overrides):
    """Run ``trials`` CRN-seeded trials of one chain; returns (results, failure messages)."""
    results, failures = [], []
    for t in range(trials):
        try:
            results.append(run_trial(scn, seed, t, chain=chain, **overrides))
        except Exception as exc:  # counted per point, never fatal
            failures.append(f"trial {t}: {type(exc).__name__}: {exc}")
    return results, failures


def sweep(
    scn: Scenario,
    axis: str,
    values,
    trials: int | None = None,
    methods=("jpct", "rough"),
    combiners=("proposed",),
    seed: int | None = None,
    progress=None,
) -> list[MetricSeries]:
    """Evaluate each method/combiner at every axis value with common random numbers."""
    if axis not in AXES:
        raise ConfigError("axis", f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError("method", f"unknown method(s) {unknown}; choose from {METHODS}")
    values = list(values)
    if not values:
        raise ConfigError("values", "sweep needs at least one value")
    trials = scn.trials if trials is None else trials
    seed = scn.seed if seed is None else seed
    series = {(m, c): MetricSeries(axis, m, c) for c in combiners for m in methods}
    for value in values:
        point = scn.with_overrides(**{AXES[axis]: value})
        for comb in combiners:
            for chain_name, (chain, overrides) in _chains_for(methods).items():
                results, failures = run_point(point, trials, chain, seed, combiner=comb, **overrides)
                if progress is not None:
                    progress(f"{axis}={value} combiner={comb} chain={chain_name}: {len(results)}/{trials} ok")
                owners = {"jpct": ("jpct", "rough"), "jpct-genie": ("jpct-genie",), "esprit+ls": ("esprit+ls",)}[chain_name]
                for method in owners:
                    if method not in methods:
                        continue
                    s = series[(method, comb)]
                    s.values.append(value)
                    s.trials.append(len(results))
                    s.failures.append(failures)
                    stats = _summarize(results, method) if results else dict.fromkeys(
                        ("rmse_doppler", "rmse_elev", "rmse_azim", "nmse", "crlb_doppler", "crlb_elev", "crlb_azim"), float("nan")
                    )
                    for k, v in stats.items():
                        getattr(s, k).append(v)
    return list(series.values())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".9g")


def write_csv(series, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in series:
        for row in s.rows():
            writer.writerow([_fmt(v) for v in row])


def emit_csv(series, path) -> None:
    """Write the series as CSV; floats carry 9 significant digits."""
    with open(path, "w", newline="") as fh:
        write_csv(series, fh)
