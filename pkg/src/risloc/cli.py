"""Command-line front end for the simulation harness."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

from .harness import (
    ExperimentConfig,
    TrialContext,
    apply_preset,
    derive_trial_seed,
    run_error_vs_k,
    run_rmse_vs_snr,
    run_trial,
)
from .subspace import build_subspace, gamma_interval_for_ranges


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "preset", None):
        config = apply_preset(config, args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.methods is not None:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    return replace(config, **overrides) if overrides else config


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file (see README for the schema)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    parser.add_argument("--methods", default=None, help="comma-separated method toggle list")
    parser.add_argument("--trials", type=int, default=None, help="override the trial count")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for trials")


def _progress(done, total):
    print(f"\r  trial {done}/{total}", end="", flush=True)
    if done == total:
        print()


def cmd_simulate(args) -> int:
    config = _load_config(args)
    snr_db = math.inf if args.snr.lower() in ("inf", "+inf") else float(args.snr)
    seed = derive_trial_seed(config.seed, snr_db, args.k, args.trial)
    context = TrialContext(config)
    rows = run_trial(config, snr_db, args.k, seed, args.trial, context)
    print(f"single trial: snr={snr_db} dB, k={args.k}, trial={args.trial}, seed={seed}")
    for row in rows:
        if row.status != "ok":
            print(f"  {row.method:10s} {row.status}")
            continue
        print(
            f"  {row.method:10s} rmse_az={row.rmse_azimuth:.3e} rad  "
            f"rmse_el={row.rmse_elevation:.3e} rad  rmse_r={row.rmse_range:.3e} m  "
            f"pos_err={row.positioning_error:.3e} m  iters={row.solver_iters}  "
            f"time={row.wall_time_s:.2f}s"
        )
    return 0


def cmd_rmse_vs_snr(args) -> int:
    config = _load_config(args)
    raw, agg, meta = run_rmse_vs_snr(config, args.out, args.threads, _progress)
    print(f"wrote {raw}\nwrote {agg}\nwrote {meta}")
    return 0


def cmd_error_vs_k(args) -> int:
    config = _load_config(args)
    raw, agg, meta = run_error_vs_k(config, args.out, args.threads, _progress)
    print(f"wrote {raw}\nwrote {agg}\nwrote {meta}")
    return 0


def cmd_calibrate_subspace(args) -> int:
    config = _load_config(args)
    geom = config.geometry.build()
    sub_cfg = config.subspace
    interval = gamma_interval_for_ranges(
        sub_cfg.r_min, sub_cfg.r_max, geom.wavelength, sub_cfg.guard
    )
    print(
        f"chirp-rate interval [{interval[0]:.4f}, {interval[1]:.4f}] rad/m^2 "
        f"(ranges [{sub_cfg.r_min}, {sub_cfg.r_max}] m, guard {sub_cfg.guard:.0%})"
    )
    print(f"{'J':>3s}  {'worst_case_error_h':>20s}  {'worst_case_error_v':>20s}")
    for j in range(1, args.max_j + 1):
        sub_h = build_subspace(geom.n_h, geom.d_h, interval, j, sub_cfg.grid_size)
        sub_v = build_subspace(geom.n_v, geom.d_v, interval, j, sub_cfg.grid_size)
        print(f"{j:3d}  {sub_h.worst_case_error:20.6e}  {sub_v.worst_case_error:20.6e}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="risloc",
        description="Gridless near-field localization benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one verbose trial")
    _add_common(p_sim)
    p_sim.add_argument("--snr", default="15", help="SNR in dB, or 'inf' for noiseless")
    p_sim.add_argument("--k", type=int, default=2, help="number of users")
    p_sim.add_argument("--trial", type=int, default=0, help="trial index (seeds the draw)")
    p_sim.set_defaults(func=cmd_simulate)

    p_snr = sub.add_parser("rmse-vs-snr", help="RMSE versus SNR sweep")
    _add_common(p_snr)
    p_snr.add_argument(
        "--preset", choices=["paper", "reduced"], default=None,
        help="paper: 50 trials, full sweep; reduced: 15 trials, 5 SNR points",
    )
    p_snr.set_defaults(func=cmd_rmse_vs_snr)

    p_k = sub.add_parser("error-vs-k", help="positioning error versus user count")
    _add_common(p_k)
    p_k.add_argument("--preset", choices=["paper", "reduced"], default=None)
    p_k.set_defaults(func=cmd_error_vs_k)

    p_cal = sub.add_parser("calibrate-subspace", help="worst-case chirp error versus J")
    _add_common(p_cal)
    p_cal.add_argument("--max-j", type=int, default=6)
    p_cal.set_defaults(func=cmd_calibrate_subspace)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
