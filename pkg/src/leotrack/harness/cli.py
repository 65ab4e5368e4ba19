"""Command-line entry point: ``leotrack {simulate,sweep,crlb,scenario-check}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from ..chanmodel import large_scale_beta
from ..crlb import CrlbPredictionError, crlb_at
from ..ekf import COMBINERS, select_combiner
from ..geomkit import array_frame, measurement_map
from .runner import run_trial
from .scenario import ConfigError, Scenario, describe_keys, load_scenario
from .sweep import AXES, METHODS, emit_csv, sweep, write_csv

log = logging.getLogger("leotrack")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
DEFAULT_VALUES = {
    "snr": "-20,-15,-10,-5,0,5,10,15",
    "pilots": "4,8,16,32",
    "sigma_u": "0,5,10,20",
    "sigma_v": "0,0.5,1,2",
    "blocks": "2,4,6,8,10",
}


def _csv_list(text: str, allowed=None) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if allowed is not None:
        bad = [t for t in items if t not in allowed]
        if bad:
            raise ConfigError("--list", f"unknown entries {bad}; choose from {list(allowed)}")
    return items


def _number(text: str):
    v = float(text)
    return int(v) if v.is_integer() and "." not in text and "e" not in text.lower() else v


def _scenario(args) -> Scenario:
    scn = load_scenario(args.config) if args.config else Scenario()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "genie", False):
        changes["genie"] = True
    return scn.with_overrides(**changes) if changes else scn


def cmd_scenario_check(args) -> int:
    scn = _scenario(args)
    q_sat, q_gu = scn.initial_states()
    z = measurement_map(q_sat, q_gu, array_frame(q_sat), scn.base_link().lambda_c)
    print("scenario OK")
    print(f"noise_var = {scn.resolved_noise_var():.9g} W (snr_db = {scn.snr_db})")
    print(f"block-0 parameters: doppler = {z.doppler:.9g} Hz, elevation = {z.elevation:.9g} rad, azimuth = {z.azimuth:.9g} rad")
    if args.verbose:
        for key, default, note in describe_keys():
            print(f"  {key} (default {default!r}) {note}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _scenario(args)
    combiner = _csv_list(args.combiner, COMBINERS)[0] if args.combiner else scn.combiner
    res = run_trial(scn, scn.seed, args.trial, combiner=combiner)
    header = ["block", "true_doppler", "true_elev", "true_azim", "rough_doppler", "rough_elev", "rough_azim",
              "tracked_doppler", "tracked_elev", "tracked_azim", "nmse"]
    rows = []
    for n in range(scn.n_blocks):
        h, h_hat = res.channels[n], res.csi[n]
        err = float(np.sum(np.abs(h - h_hat) ** 2) / np.sum(np.abs(h) ** 2))
        rows.append([n, *res.truth[n], *res.rough[n], *res.tracked[n], err])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([r[0]] + [format(float(v), ".9g") for v in r[1:]])
    finally:
        if out is not sys.stdout:
            out.close()
    for note in res.notes:
        log.warning(note)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scn = _scenario(args)
    methods = _csv_list(args.method, METHODS)
    combiners = _csv_list(args.combiner, COMBINERS)
    values = [_number(v) for v in _csv_list(args.values or DEFAULT_VALUES[args.axis])]
    series = sweep(scn, args.axis, values, trials=scn.trials, methods=methods, combiners=combiners,
                   seed=scn.seed, progress=log.info)
    failed = sum(len(f) for s in series for f in s.failures)
    if failed:
        log.warning("%d trial(s) failed and were left out", failed)
    if args.out:
        emit_csv(series, args.out)
    else:
        write_csv(series, sys.stdout)
    return EXIT_OK


def cmd_crlb(args) -> int:
    """Bounds at the block-0 geometry with the mean channel power."""
    scn = _scenario(args)
    link = scn.link()
    q_sat, q_gu = scn.initial_states()
    z = measurement_map(q_sat, q_gu, array_frame(q_sat), link.lambda_c)
    beta = large_scale_beta(float(np.linalg.norm(q_sat[:3] - q_gu[:3])), link)
    c_rms = link.gamma * np.sqrt(beta)
    config = scn.tracker_config()
    print("combiner,crlb_doppler_hz,crlb_elev_rad,crlb_azim_rad")
    for comb in _csv_list(args.combiner, COMBINERS):
        cfg = config if comb == config.combiner else scn.tracker_config(combiner=comb)
        W = select_combiner(cfg, 0, None, np.random.default_rng(scn.seed))
        try:
            p = crlb_at((z.elevation, z.azimuth), c_rms, W, link.tx_power, link.noise_var, scn.pilots, scn.geom)
        except CrlbPredictionError as exc:
            print(f"{comb}: bound undefined ({exc})", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"{comb},{np.sqrt(p.var_doppler):.9g},{np.sqrt(p.var_elev):.9g},{np.sqrt(p.var_azim):.9g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leotrack", description="LEO uplink parameter and channel tracking simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False):
        # SUPPRESS keeps a top-level -v from being reset by the subcommand default
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        p.add_argument("--config", metavar="PATH", help="TOML scenario file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        if trials:
            p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
        p.add_argument("--genie", action="store_true", help="use bounds at the true parameters in the filter")

    p = sub.add_parser("simulate", help="run one trial and dump per-block results")
    common(p)
    p.add_argument("--trial", type=int, default=0, help="trial index under the master seed")
    p.add_argument("--combiner", help="proposed | dft | random")
    p.add_argument("--out", metavar="PATH", help="CSV output (stdout when omitted)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep along one axis")
    common(p, trials=True)
    p.add_argument("--axis", choices=sorted(AXES), default="snr")
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--method", default="jpct,rough", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--combiner", default="proposed", help="comma list from proposed,dft,random")
    p.add_argument("--out", metavar="PATH", help="CSV output (stdout when omitted)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("crlb", help="evaluate the bounds at the block-0 configuration")
    common(p)
    p.add_argument("--combiner", default="dft", help="comma list from proposed,dft,random")
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("scenario-check", help="validate a scenario file")
    common(p)
    p.set_defaults(func=cmd_scenario_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
