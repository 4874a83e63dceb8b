"""Command-line driver: ``run``, ``design`` and ``validate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, SampledLeaderError
from .simulator import epoch_sync_residuals, invariant_report, run_scenario

OUT_ENV = "SAMPLED_LEADER_OUT"
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def output_dir(cfg, cli_out=None):
    """``--out`` beats the environment variable, which beats the config file."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output.get("dir", f"out/{cfg.name}"))


def write_trajectory_csv(log, path):
    """One row per grid point per follower: ``t, agent_id, x_1..x_n, u_1..u_m, epoch_index``.

    ``n`` and ``m`` are the largest follower dimensions; shorter rows are
    padded with empty cells.
    """
    ids = log.follower_ids
    n = max(log.states[i].shape[1] for i in ids)
    m = max(log.inputs[i].shape[1] for i in ids)
    header = (["t", "agent_id"] + [f"x_{a}" for a in range(1, n + 1)]
              + [f"u_{a}" for a in range(1, m + 1)] + ["epoch_index"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s, t in enumerate(log.times):
            for i in ids:
                x = [repr(float(v)) for v in log.states[i][s]]
                u = [repr(float(v)) for v in log.inputs[i][s]]
                w.writerow([repr(float(t)), i, *x, *([""] * (n - len(x))),
                            *u, *([""] * (m - len(u))), int(log.epoch_index[s])])
    return header


def metrics_summary(sc, log, results, plan=None):
    sync = epoch_sync_residuals(log)
    epochs = []
    for rec, res in zip(log.epochs, sync):
        epochs.append({
            "k": rec.k, "t_start": rec.t_start, "t_end": rec.t_end,
            "leader_sample": rec.leader_sample.tolist(),
            "sync_residual": res,
            "followers": {str(i): {
                "arrival_error": m.arrival_error, "arrival_tol": m.arrival_tol,
                "energy": m.energy, "oracle_energy": m.oracle_energy,
                "max_abs_u": m.max_abs_u, "law_gap": m.law_gap,
            } for i, m in sorted(rec.followers.items())},
        })
    out = {
        "scenario": sc.name,
        "followers": log.follower_ids,
        "steps_per_epoch": sc.steps_per_epoch,
        "sampling_times": [float(t) for t in sc.schedule.times],
        "epochs": epochs,
        "invariants": [{"name": r.name, "passed": bool(r.passed), "worst": r.worst,
                        "limit": r.limit, "detail": r.detail} for r in results],
        "passed": all(r.passed for r in results),
    }
    if plan is not None:
        out["designed_times"] = [float(t) for t in plan.times[1:]]
    return out


def cmd_run(args):
    cfg = cfgmod.load_config(args.scenario)
    sc, plan = cfgmod.build_scenario(cfg, steps=args.steps, deadzone=args.deadzone, seed=args.seed)
    log = run_scenario(sc)
    results = invariant_report(sc, log)
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(log, out / "trajectory.csv")
    summary = metrics_summary(sc, log, results, plan)
    (out / "metrics.json").write_text(json.dumps(summary, indent=2))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.worst:.3e} (limit {r.limit:.3e}; "
              f"{r.detail})")
    print(f"wrote {out / 'trajectory.csv'} and {out / 'metrics.json'}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"invariant failed: {failed[0].name}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def cmd_design(args):
    cfg = cfgmod.load_config(args.scenario)
    plan = cfgmod.design_from_config(cfg, tol=args.tol)
    print(f"scenario {cfg.name}: u_max = {plan.u_max:g}")
    print(f"{'k':>3} {'t_k':>12} {'T_k':>12}  waypoint")
    for row in plan.rows():
        print(f"{row['k']:>3} {row['t']:>12.6f} {row['T']:>12.6f}  "
              f"[{row['position']:g}, {row['velocity']:g}]")
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "plan.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "t", "T", "position", "velocity"])
        w.writeheader()
        w.writerows(plan.rows())
    (out / "plan.json").write_text(json.dumps({
        "u_max": plan.u_max, "times": [float(t) for t in plan.times],
        "durations": [float(d) for d in plan.durations],
        "waypoints": [np.asarray(w).tolist() for w in plan.waypoints],
    }, indent=2))
    print(f"wrote {out / 'plan.csv'} and {out / 'plan.json'}")
    return 0


def cmd_validate(args):
    cfg = cfgmod.load_config(args.path)
    print(f"{args.path}: ok ({len(cfg.followers)} followers, tracking {cfg.tracking})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sampled-leader",
                                description="Distributed sampled-leader following simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and check its invariants")
    r.add_argument("--scenario", required=True,
                   help=f"built-in name ({', '.join(cfgmod.BUILTIN)}) or path to a TOML file")
    r.add_argument("--steps", type=int, help="RK4 steps per epoch")
    r.add_argument("--deadzone", type=int, help="deadzone width in steps")
    r.add_argument("--seed", type=int, help="seed for every perturbation")
    r.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config)")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("design", help="arrival-time design for a waypoint scenario")
    d.add_argument("--scenario", required=True)
    d.add_argument("--tol", type=float, default=1e-6, help="bisection tolerance in seconds")
    d.add_argument("--out", help="output directory")
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("validate", help="check a scenario file and report every problem")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SampledLeaderError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
