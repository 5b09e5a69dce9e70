"""Batch experiment harness: multi-trial evaluation, training runs, and the
three-arm ablation, with a stable on-disk layout.

Every run writes under out/<run-id>/ where run-id hashes the effective
configuration and seed, so artifacts are reproducible and self-describing:

    out/<run-id>/config.json
    out/<run-id>/trials/trial_<seed>.csv     (eval)
    out/<run-id>/summary.json                (eval)
    out/<run-id>/plots/*.svg
    out/<run-id>/maps/*.pgm + .yaml          (eval)
    out/<run-id>/training_episodes.csv       (train)
    out/<run-id>/training_updates.csv        (train)
    out/<run-id>/checkpoint.json             (train)
    out/<run-id>/ablation.json               (ablate)

summary.json content is timestamp-free: identical config + seed produces
byte-identical bytes.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import render
from .episode import EpisodeRecord, SimConfig, Simulation
from .policy import load_checkpoint, save_checkpoint
from .ppo import TrainConfig, Trainer
from .reward import RewardConfig
from .world import resolve_world

METHODS = ("drl", "frontier", "rrt")

# desk-scale ablation defaults: small maze world, short sensor, fixed
# episode budget — see the ablate() docstring
ABLATION_ARMS = {
    "baseline": {"lsd_on": False, "pur_on": False},
    "lsd": {"lsd_on": True, "pur_on": False},
    "full": {"lsd_on": True, "pur_on": True},
}


@dataclass
class RunConfig:
    world: str = "train4x4"
    method: str = "frontier"
    trials: int = 10
    seed: int = 0
    out_dir: str = "out"
    # detector / reward-term toggles; lsd_on = None resolves by method
    # (on for the learned policy, off for the classical baselines)
    lsd_on: bool | None = None
    pur_on: bool = True
    checkpoint: str | None = None
    greedy: bool = True
    sim: dict = field(default_factory=dict)      # SimConfig field overrides
    train: dict = field(default_factory=dict)    # TrainConfig field overrides
    ablate: dict = field(default_factory=dict)   # ablation settings

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def resolved_lsd(self) -> bool:
        if self.lsd_on is None:
            return self.method == "drl"
        return self.lsd_on

    def run_id(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def build_sim_config(cfg: RunConfig) -> SimConfig:
    sim = SimConfig(lsd_on=cfg.resolved_lsd(),
                    reward=RewardConfig(path_penalty_on=cfg.pur_on))
    for key, value in cfg.sim.items():
        if not hasattr(sim, key):
            raise ValueError(f"unknown sim option {key!r}")
        setattr(sim, key, value)
    return sim


def build_train_config(cfg: RunConfig) -> TrainConfig:
    train = TrainConfig(seed=cfg.seed)
    for key, value in cfg.train.items():
        if not hasattr(train, key):
            raise ValueError(f"unknown train option {key!r}")
        setattr(train, key, value)
    return train


def _canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n"


def _prepare_run_dir(cfg: RunConfig) -> Path:
    run_dir = Path(cfg.out_dir) / cfg.run_id()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(_canonical_json(cfg.to_dict()),
                                         encoding="utf-8")
    return run_dir


def _round(x: float, nd: int = 6) -> float:
    return round(float(x), nd)


TRIAL_COLUMNS = ("step", "clock", "x", "y", "theta", "action", "reward",
                 "delta_c", "d_t", "f_sigma", "coverage", "path_length",
                 "static_counter", "stagnant")


def write_trial_csv(record: EpisodeRecord, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_COLUMNS)
        total = 0.0
        for s in record.steps:
            total += s.d_t
            writer.writerow([s.step, _round(s.clock), _round(s.x), _round(s.y),
                             _round(s.theta), s.action, _round(s.reward),
                             _round(s.delta_c), _round(s.d_t),
                             _round(s.f_sigma, 9), _round(s.coverage, 9),
                             _round(total), s.static_counter,
                             int(s.stagnant)])


def evaluate(cfg: RunConfig) -> dict:
    """Run cfg.trials independent episodes (seeds seed+i) and aggregate.

    Reports per-trial time/path/completeness, their means and standard
    deviations, and the representative trial whose time is closest to the
    mean (ties go to the lower seed).
    """
    cfg.validate()
    world = resolve_world(cfg.world)
    net = None
    if cfg.method == "drl":
        if not cfg.checkpoint or not Path(cfg.checkpoint).exists():
            raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint!r}")
        net, _ = load_checkpoint(cfg.checkpoint)

    run_dir = _prepare_run_dir(cfg)
    trials_dir = run_dir / "trials"
    plots_dir = run_dir / "plots"
    maps_dir = run_dir / "maps"
    for d in (trials_dir, plots_dir, maps_dir):
        d.mkdir(exist_ok=True)

    records = []
    grids = []
    for i in range(cfg.trials):
        seed = cfg.seed + i
        sim_cfg = build_sim_config(cfg)
        if cfg.method == "drl":
            sim = Simulation(world, sim_cfg, seed=seed)
            obs = sim.last_obs
            rng = np.random.default_rng(seed)
            while not sim.done:
                action = net.greedy_action(obs) if cfg.greedy else \
                    net.sample_action(obs, rng)[0]
                obs, _, _, _ = sim.step(action)
            record = sim.make_record()
            grid = sim.grid
        else:
            record, grid = _run_baseline_with_grid(world, cfg.method, sim_cfg, seed)
        records.append(record)
        grids.append(grid)
        write_trial_csv(record, trials_dir / f"trial_{seed}.csv")
        render.write_map_pgm(grid, maps_dir / f"trial_{seed}.pgm",
                             poses=record.poses)

    times = np.array([r.time_s for r in records])
    paths = np.array([r.path_length_m for r in records])
    compl = np.array([r.completeness for r in records])
    mean_time = float(times.mean())
    rep_idx = min(range(len(records)),
                  key=lambda i: (abs(times[i] - mean_time), records[i].seed))

    summary = {
        "run_id": cfg.run_id(),
        "world": world.name,
        "method": cfg.method,
        "trials": [
            {
                "seed": r.seed,
                "time_s": _round(r.time_s),
                "path_length_m": _round(r.path_length_m),
                "completeness": _round(r.completeness, 9),
                "termination_cause": r.termination_cause,
                "steps": r.n_steps,
            }
            for r in records
        ],
        "aggregate": {
            "time_s": {"mean": _round(times.mean()), "std": _round(times.std())},
            "path_length_m": {"mean": _round(paths.mean()), "std": _round(paths.std())},
            "completeness": {"mean": _round(compl.mean(), 9), "std": _round(compl.std(), 9)},
        },
        "representative_seed": records[rep_idx].seed,
    }
    (run_dir / "summary.json").write_text(_canonical_json(summary),
                                          encoding="utf-8")

    render.plot_coverage_vs_time(records, plots_dir / "coverage_vs_time.svg")
    render.plot_coverage_vs_path(records, plots_dir / "coverage_vs_path.svg")
    summary["run_dir"] = str(run_dir)
    return summary


def _run_baseline_with_grid(world, method, sim_cfg, seed):
    from .baselines import explore

    sim = Simulation(world, sim_cfg, seed=seed)
    explore(sim, method, np.random.default_rng(seed))
    return sim.make_record(), sim.grid


def train(cfg: RunConfig, checkpoint_every: int = 25) -> dict:
    """Train the policy on cfg.world; writes curves, checkpoints, and the
    final network. Returns a small summary with file locations."""
    cfg.validate()
    world = resolve_world(cfg.world)
    run_dir = _prepare_run_dir(cfg)
    plots_dir = run_dir / "plots"
    plots_dir.mkdir(exist_ok=True)

    sim_cfg = build_sim_config(cfg)
    train_cfg = build_train_config(cfg)
    sim_cfg.max_steps = train_cfg.max_episode_steps

    trainer = Trainer(world, sim_cfg, train_cfg)

    ep_file = open(run_dir / "training_episodes.csv", "w", newline="")
    ep_writer = csv.writer(ep_file)
    ep_writer.writerow(["episode", "steps", "reward", "time_s", "coverage",
                        "distance", "cause"])
    up_file = open(run_dir / "training_updates.csv", "w", newline="")
    up_writer = csv.writer(up_file)
    up_writer.writerow(["update", "env_steps", "mean_reward", "loss",
                        "policy_loss", "value_loss", "entropy", "approx_kl",
                        "clip_fraction"])

    def on_episode(ep):
        ep_writer.writerow([ep.index, ep.steps, _round(ep.reward),
                            _round(ep.time_s), _round(ep.coverage, 9),
                            _round(ep.distance), ep.cause])

    def on_update(up):
        s = up.stats
        up_writer.writerow([up.index, up.env_steps,
                            _round(up.mean_episode_reward),
                            _round(s.get("loss", 0.0), 9),
                            _round(s.get("policy_loss", 0.0), 9),
                            _round(s.get("value_loss", 0.0), 9),
                            _round(s.get("entropy", 0.0), 9),
                            _round(s.get("approx_kl", 0.0), 9),
                            _round(s.get("clip_fraction", 0.0), 9)])
        if (up.index + 1) % checkpoint_every == 0:
            save_checkpoint(run_dir / f"ckpt_u{up.index + 1}.json",
                            trainer.net, dataclasses.asdict(train_cfg))

    try:
        trainer.run(on_episode=on_episode, on_update=on_update)
    finally:
        ep_file.close()
        up_file.close()

    checkpoint_path = run_dir / "checkpoint.json"
    save_checkpoint(checkpoint_path, trainer.net, dataclasses.asdict(train_cfg))

    rewards = [e.reward for e in trainer.episodes]
    if rewards:
        window = max(1, min(25, len(rewards) // 4))
        smoothed = np.convolve(rewards, np.ones(window) / window, mode="valid")
        render.plot_curves(
            [(np.arange(len(rewards)), np.array(rewards), "episode reward"),
             (np.arange(len(smoothed)) + window - 1, smoothed,
              f"rolling mean ({window})")],
            "episode", "reward", plots_dir / "training_reward.svg",
            gid="train-reward")

    return {
        "run_id": cfg.run_id(),
        "run_dir": str(run_dir),
        "checkpoint": str(checkpoint_path),
        "episodes": len(trainer.episodes),
        "env_steps": trainer.env_steps,
        "updates": len(trainer.updates),
    }


# default desk-scale ablation settings (overridable via cfg.ablate)
ABLATE_DEFAULTS = {
    "episodes": 500,
    "seeds": [0, 1, 2, 3],
    "milestone": 0.5,
    "window": 50,
}


def ablate(cfg: RunConfig) -> dict:
    """Train the three ablation arms and compare their learning curves.

    The arms differ only in the two toggles: episode-ending detectors
    (lsd_on) and the path-inefficiency reward term (pur_on). Each arm trains
    for a fixed number of episodes on every seed in the list; the report
    carries mean first/last reward windows and the mean episode index at
    which each arm first reaches the coverage milestone (arms that never
    reach it count as the episode budget).
    """
    cfg.validate()
    world = resolve_world(cfg.world)
    opts = dict(ABLATE_DEFAULTS)
    opts.update(cfg.ablate)
    episodes = int(opts["episodes"])
    seeds = list(opts["seeds"])
    milestone = float(opts["milestone"])
    window = int(opts["window"])

    run_dir = _prepare_run_dir(cfg)
    plots_dir = run_dir / "plots"
    plots_dir.mkdir(exist_ok=True)

    results = {}
    curves = []
    for arm, toggles in ABLATION_ARMS.items():
        first_means, last_means, milestones = [], [], []
        arm_rewards = []
        for seed in seeds:
            arm_cfg = RunConfig(**{**cfg.to_dict(),
                                   "lsd_on": toggles["lsd_on"],
                                   "pur_on": toggles["pur_on"],
                                   "seed": seed})
            sim_cfg = build_sim_config(arm_cfg)
            train_cfg = build_train_config(arm_cfg)
            train_cfg.max_episodes = episodes
            sim_cfg.max_steps = train_cfg.max_episode_steps
            trainer = Trainer(world, sim_cfg, train_cfg)
            trainer.run()
            eps = trainer.episodes
            rewards = [e.reward for e in eps]
            arm_rewards.append(rewards)
            first_means.append(float(np.mean(rewards[:window])))
            last_means.append(float(np.mean(rewards[-window:])))
            hit = [e.index for e in eps if e.coverage >= milestone]
            milestones.append(hit[0] if hit else episodes)
            with open(run_dir / f"ablate_{arm}_seed{seed}.csv", "w",
                      newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["episode", "steps", "reward", "coverage",
                                 "distance", "cause"])
                for e in eps:
                    writer.writerow([e.index, e.steps, _round(e.reward),
                                     _round(e.coverage, 9), _round(e.distance),
                                     e.cause])
        min_len = min(len(r) for r in arm_rewards)
        mean_curve = np.mean([r[:min_len] for r in arm_rewards], axis=0)
        k = max(1, min(25, min_len // 4))
        smooth = np.convolve(mean_curve, np.ones(k) / k, mode="valid")
        curves.append((np.arange(len(smooth)) + k - 1, smooth, arm))
        results[arm] = {
            "lsd_on": toggles["lsd_on"],
            "pur_on": toggles["pur_on"],
            "seeds": seeds,
            "mean_first_window_reward": _round(np.mean(first_means)),
            "mean_last_window_reward": _round(np.mean(last_means)),
            "mean_episodes_to_milestone": _round(np.mean(milestones), 3),
            "milestone": milestone,
        }

    render.plot_curves(curves, "episode", "reward (rolling mean)",
                       plots_dir / "ablation_reward.svg", gid="ablate-reward")
    report = {
        "run_id": cfg.run_id(),
        "world": world.name,
        "episodes": episodes,
        "window": window,
        "arms": results,
    }
    (run_dir / "ablation.json").write_text(_canonical_json(report),
                                           encoding="utf-8")
    report["run_dir"] = str(run_dir)
    return report


def worldcheck(path_or_name: str) -> dict:
    """Load and validate a world; report its vital statistics."""
    world = resolve_world(path_or_name)
    return {
        "name": world.name,
        "bounds": list(world.bounds),
        "segments": int(len(world.segments)),
        "circles": int(len(world.circles)),
        "free_area_m2": _round(world.free_area),
        "t_max_s": world.t_max,
        "start": list(world.start),
    }
