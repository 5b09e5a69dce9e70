"""Step reward combining coverage gain, pose uncertainty and a path penalty.

Three branches: a collision ends the episode at a large negative constant;
a step that grew the map earns 1 + tanh(scale / uncertainty) plus the path
penalty; any other step earns a small idle constant plus the path penalty.
The penalty itself fires only when the per-step efficiency (new area per
meter moved) drops below a threshold while the robot actually moved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class RewardConfig:
    eta_scale: float = 1.0
    idle_reward: float = 0.001
    collision_reward: float = -100.0
    penalty_gain: float = 0.1
    eff_threshold: float = 0.001    # m^2 per meter
    dist_threshold: float = 0.001   # meters
    path_penalty_on: bool = True    # ablation switch for the penalty term


@dataclass
class StepOutcome:
    delta_c: float          # m^2 newly mapped this step
    d_t: float              # meters traveled this step
    f_sigma: float          # D-optimality of the pose covariance, > 0
    done_collision: bool = False


def exploration_efficiency(delta_c: float, d_t: float) -> float:
    """New area per meter traveled; +inf for a zero-length step (no penalty
    can fire then, since the penalty also requires d_t above its threshold)."""
    if d_t == 0.0:
        return math.inf
    return delta_c / d_t


def path_penalty(delta_c: float, d_t: float, cfg: RewardConfig) -> float:
    """-penalty_gain * d_t when efficiency is below threshold and the step
    was long enough to matter; 0 otherwise. Never positive."""
    if delta_c < 0 or d_t < 0:
        raise ValueError("delta_c and d_t must be non-negative")
    eta_t = exploration_efficiency(delta_c, d_t)
    if eta_t < cfg.eff_threshold and d_t > cfg.dist_threshold:
        return -cfg.penalty_gain * d_t
    return 0.0


def step_reward(outcome: StepOutcome, cfg: RewardConfig) -> float:
    if outcome.done_collision:
        return cfg.collision_reward
    p_t = path_penalty(outcome.delta_c, outcome.d_t, cfg) if cfg.path_penalty_on else 0.0
    if outcome.delta_c > 0.0:
        if outcome.f_sigma <= 0.0:
            raise ValueError("f_sigma must be positive")
        return 1.0 + math.tanh(cfg.eta_scale / outcome.f_sigma) + p_t
    return cfg.idle_reward + p_t
