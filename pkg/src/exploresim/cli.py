"""Command-line entry point.

Subcommands: train, eval, ablate, render, worldcheck. Options can come from
a JSON config file (--config) with command-line flags taking precedence.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import RunConfig, ablate, evaluate, train, worldcheck


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--world", help="world file path or bundled world name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir", help="output directory root")
    lsd = p.add_mutually_exclusive_group()
    lsd.add_argument("--lsd", dest="lsd_on", action="store_true",
                     default=None, help="enable the stagnation detectors")
    lsd.add_argument("--no-lsd", dest="lsd_on", action="store_false",
                     default=None, help="disable the stagnation detectors")
    pur = p.add_mutually_exclusive_group()
    pur.add_argument("--pur", dest="pur_on", action="store_true",
                     default=None, help="enable the path-penalty reward term")
    pur.add_argument("--no-pur", dest="pur_on", action="store_false",
                     default=None, help="disable the path-penalty reward term")
    p.add_argument("--dt", type=float, help="control period (s)")
    p.add_argument("--resolution", type=float, help="grid cell size (m)")
    p.add_argument("--max-range", type=float, help="sensor range (m)")
    p.add_argument("--max-steps", type=int, help="episode step limit")
    p.add_argument("--sensor-noise", type=float, help="range noise sigma (m)")


def build_parser() -> _Parser:
    parser = _Parser(prog="exploresim",
                     description="2D active-exploration testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the exploration policy")
    _add_common(p_train)
    p_train.add_argument("--total-steps", type=int)
    p_train.add_argument("--max-episodes", type=int)
    p_train.add_argument("--rollout-len", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--max-episode-steps", type=int)

    p_eval = sub.add_parser("eval", help="evaluate a method over trials")
    _add_common(p_eval)
    p_eval.add_argument("--method", choices=("drl", "frontier", "rrt"))
    p_eval.add_argument("--trials", type=int)
    p_eval.add_argument("--checkpoint", help="policy checkpoint (drl method)")
    p_eval.add_argument("--stochastic", action="store_true",
                        help="sample actions instead of greedy selection")

    p_ablate = sub.add_parser("ablate", help="run the three-arm ablation")
    _add_common(p_ablate)
    p_ablate.add_argument("--episodes", type=int,
                          help="training episodes per arm")
    p_ablate.add_argument("--ablate-seeds", type=int, nargs="+",
                          help="seeds trained per arm")
    p_ablate.add_argument("--milestone", type=float,
                          help="coverage milestone for the comparison")
    p_ablate.add_argument("--rollout-len", type=int)
    p_ablate.add_argument("--max-episode-steps", type=int)

    p_render = sub.add_parser("render",
                              help="re-render plots/maps from a run directory")
    p_render.add_argument("run_dir", help="out/<run-id> directory of an eval run")

    p_world = sub.add_parser("worldcheck", help="validate a world file")
    p_world.add_argument("world", help="world file path or bundled name")
    return parser


def _config_from_args(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = RunConfig.from_dict(data)
    for key in ("world", "seed", "out_dir", "method", "trials", "checkpoint"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "lsd_on", None) is not None:
        cfg.lsd_on = args.lsd_on
    if getattr(args, "pur_on", None) is not None:
        cfg.pur_on = args.pur_on
    if getattr(args, "stochastic", False):
        cfg.greedy = False
    for cli_name, sim_key in (("dt", "dt"), ("resolution", "resolution"),
                              ("max_range", "max_range"),
                              ("max_steps", "max_steps"),
                              ("sensor_noise", "noise_sigma")):
        value = getattr(args, cli_name, None)
        if value is not None:
            cfg.sim[sim_key] = value
    for cli_name, train_key in (("total_steps", "total_steps"),
                                ("max_episodes", "max_episodes"),
                                ("rollout_len", "rollout_len"),
                                ("batch_size", "batch_size"),
                                ("lr", "lr"),
                                ("max_episode_steps", "max_episode_steps")):
        value = getattr(args, cli_name, None)
        if value is not None:
            cfg.train[train_key] = value
    for cli_name, ab_key in (("episodes", "episodes"),
                             ("ablate_seeds", "seeds"),
                             ("milestone", "milestone")):
        value = getattr(args, cli_name, None)
        if value is not None:
            cfg.ablate[ab_key] = value
    return cfg


def _cmd_render(run_dir: str) -> dict:
    """Rebuild the plots of an existing eval run from its trial CSVs."""
    import csv

    from . import render as R

    run = Path(run_dir)
    trials_dir = run / "trials"
    if not trials_dir.is_dir():
        raise FileNotFoundError(f"{trials_dir} does not exist")
    series_t, series_p = [], []
    for trial in sorted(trials_dir.glob("trial_*.csv")):
        clocks, paths, covs = [], [], []
        with open(trial, newline="") as fh:
            for row in csv.DictReader(fh):
                clocks.append(float(row["clock"]))
                paths.append(float(row["path_length"]))
                covs.append(float(row["coverage"]))
        label = trial.stem.replace("trial_", "seed ")
        series_t.append((clocks, covs, label))
        series_p.append((paths, covs, label))
    if not series_t:
        raise FileNotFoundError(f"no trial CSVs under {trials_dir}")
    plots = run / "plots"
    plots.mkdir(exist_ok=True)
    R.plot_curves(series_t, "time (s)", "coverage",
                  plots / "coverage_vs_time.svg", gid="coverage-time")
    R.plot_curves(series_p, "path length (m)", "coverage",
                  plots / "coverage_vs_path.svg", gid="coverage-path")
    return {"plots": str(plots), "trials": len(series_t)}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "worldcheck":
            info = worldcheck(args.world)
            print(json.dumps(info, indent=2))
        elif args.command == "render":
            info = _cmd_render(args.run_dir)
            print(json.dumps(info, indent=2))
        elif args.command == "train":
            cfg = _config_from_args(args)
            info = train(cfg)
            print(json.dumps(info, indent=2))
        elif args.command == "eval":
            cfg = _config_from_args(args)
            summary = evaluate(cfg)
            agg = summary["aggregate"]
            print(json.dumps({
                "run_dir": summary["run_dir"],
                "time_s": agg["time_s"],
                "path_length_m": agg["path_length_m"],
                "completeness": agg["completeness"],
                "representative_seed": summary["representative_seed"],
            }, indent=2))
        elif args.command == "ablate":
            cfg = _config_from_args(args)
            report = ablate(cfg)
            print(json.dumps({"run_dir": report["run_dir"],
                              "arms": report["arms"]}, indent=2))
        else:  # pragma: no cover - argparse enforces the choices
            return 1
    except (_UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
