"""Closed-loop simulation episode: sense, detect, act, map, score.

One Simulation owns everything an episode mutates (robot state, grid,
belief, detectors, logs), so independent episodes can run concurrently on
copies. Both the learned policy and the classical planners drive the same
step() method, which keeps every method's metrics pipeline identical by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import world as w
from .detectors import StagnationDetector, StaticDetector
from .mapping import GroundTruth, OccupancyGrid, coverage
from .reward import RewardConfig, StepOutcome, step_reward
from .sensor import downsample_normalize, scan
from .uncertainty import PoseBelief, d_optimality, observe_correct, propagate

TERMINATION_CAUSES = ("collision", "static", "stagnation", "coverage",
                      "step_limit", "complete", "abort")


@dataclass
class SimConfig:
    dt: float = w.DEFAULT_DT
    resolution: float = 0.05
    num_beams: int = 360
    num_samples: int = 24
    max_range: float = 3.5
    robot_radius: float = w.DEFAULT_ROBOT_RADIUS
    linear_speed: float = w.LINEAR_SPEED
    turn_rate: float = w.TURN_RATE
    noise_sigma: float = 0.0
    q_xy: float = 1e-4
    q_theta: float = 1e-4
    reobserve_gain: float = 0.5
    initial_pose_var: float = 1e-6
    max_steps: int = 5000
    success_coverage: float = 0.95
    lsd_on: bool = True
    similarity_alpha: float = 0.98
    continuity_omega: int = 10
    stagnation_window: float = 20.0
    stagnation_beta: float = 0.05
    # when True, detector-triggered termination pays the collision reward
    # instead of the idle branch
    detector_collision_reward: bool = False
    reward: RewardConfig = field(default_factory=RewardConfig)


@dataclass
class StepLog:
    step: int
    clock: float
    action: int
    reward: float
    delta_c: float
    d_t: float
    f_sigma: float
    coverage: float
    static_counter: int
    stagnant: bool
    x: float
    y: float
    theta: float


@dataclass
class EpisodeRecord:
    world_name: str
    seed: int
    steps: list[StepLog]
    poses: list[tuple[float, float, float]]
    events: list[dict]
    termination_cause: str
    time_s: float
    path_length_m: float
    completeness: float
    total_reward: float

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def coverage_vs_time(self):
        t = np.array([s.clock for s in self.steps])
        c = np.array([s.coverage for s in self.steps])
        return t, c

    def coverage_vs_path(self):
        d = np.cumsum([s.d_t for s in self.steps])
        c = np.array([s.coverage for s in self.steps])
        return d, c


class Simulation:
    """Stateful episode; create one per trial (or copy the world, which is
    immutable and shared)."""

    def __init__(self, world_map: w.WorldMap, cfg: SimConfig | None = None,
                 seed: int = 0, slip_from: int | None = None):
        self.world = world_map
        self.cfg = cfg or SimConfig()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        # injected wheel slip: actions with index >= slip_from move nothing
        self.slip_from = slip_from
        self.truth = GroundTruth(world_map, self.cfg.resolution,
                                 world_map.start[:2])
        self.reset()

    # ------------------------------------------------------------------ setup
    def reset(self) -> np.ndarray:
        cfg = self.cfg
        sx, sy, stheta = self.world.start
        self.state = w.RobotState(x=sx, y=sy, theta=stheta,
                                  radius=cfg.robot_radius)
        self.grid = OccupancyGrid(self.world, cfg.resolution)
        self.belief = PoseBelief.initial((sx, sy, stheta), cfg.initial_pose_var)
        self.static_detector = StaticDetector(alpha=cfg.similarity_alpha,
                                              omega=cfg.continuity_omega)
        self.stagnation_detector = StagnationDetector.for_environment(
            self.world.free_area, self.world.t_max,
            beta=cfg.stagnation_beta, window=cfg.stagnation_window)
        self.steps: list[StepLog] = []
        self.poses = [(sx, sy, stheta)]
        self.events: list[dict] = []
        self.path_length = 0.0
        self.total_reward = 0.0
        self.done = False
        self.termination_cause: str | None = None
        self.step_count = 0

        first = self._sense()
        self.last_scan = first
        self.grid.integrate_scan(self.state.pose, first)
        norm = downsample_normalize(first, cfg.num_samples)
        if cfg.lsd_on:
            self.static_detector.update(norm)
        self.coverage_now = self.truth.coverage_of(self.grid)
        self.last_obs = self._observation(norm)
        return self.last_obs

    def _sense(self):
        return scan(self.state.pose, self.world, max_range=self.cfg.max_range,
                    num_beams=self.cfg.num_beams,
                    noise_sigma=self.cfg.noise_sigma,
                    rng=self.rng if self.cfg.noise_sigma > 0 else None)

    def _observation(self, norm) -> np.ndarray:
        return np.concatenate([norm.values, [self.coverage_now]])

    @property
    def obs_size(self) -> int:
        return self.cfg.num_samples + 1

    # ------------------------------------------------------------------- step
    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self.done:
            raise RuntimeError("episode already terminated")
        cfg = self.cfg
        action = w.Action(int(action))
        self.step_count += 1

        slipping = self.slip_from is not None and self.step_count >= self.slip_from
        if slipping:
            cmd_v, cmd_w = w.action_velocity(action, cfg.linear_speed, cfg.turn_rate)
            new_state = replace(self.state, v=cmd_v, omega=cmd_w,
                                clock=self.state.clock + cfg.dt)
            collided, d_t = False, 0.0
        else:
            new_state, collided, d_t = w.step(self.state, self.world, action,
                                              dt=cfg.dt, v=cfg.linear_speed,
                                              turn_rate=cfg.turn_rate)
        self.state = new_state
        self.path_length += d_t
        self.poses.append(self.state.pose)

        # covariance proxy: inflate through the motion Jacobian, then pin the
        # mean to the true pose (localization itself is not simulated)
        self.belief = propagate(self.belief, action, cfg.dt, q_xy=cfg.q_xy,
                                q_theta=cfg.q_theta, v=cfg.linear_speed,
                                turn_rate=cfg.turn_rate)
        self.belief.mean[:] = self.state.pose

        lidar = self._sense()
        self.last_scan = lidar
        self.belief = observe_correct(self.belief, lidar, self.grid,
                                      pose=self.state.pose,
                                      gain=cfg.reobserve_gain)
        delta_c = self.grid.integrate_scan(self.state.pose, lidar)
        f_sigma = d_optimality(self.belief.sigma)
        reward = step_reward(
            StepOutcome(delta_c=delta_c, d_t=d_t, f_sigma=f_sigma,
                        done_collision=collided), cfg.reward)

        report = coverage(self.grid, self.truth, delta_c=delta_c, dt=cfg.dt)
        self.coverage_now = report.c_t

        norm = downsample_normalize(lidar, cfg.num_samples)
        static_flag = stagnant_flag = False
        if cfg.lsd_on:
            static_flag = self.static_detector.update(norm)
            stagnant_flag = self.stagnation_detector.update(
                report.c_dot, cfg.linear_speed, self.state.clock)

        cause = None
        if collided:
            cause = "collision"
        elif static_flag:
            cause = "static"
        elif stagnant_flag:
            cause = "stagnation"
        elif report.c_t >= cfg.success_coverage:
            cause = "coverage"
        elif self.step_count >= cfg.max_steps:
            cause = "step_limit"

        if cause in ("static", "stagnation"):
            self.events.append({
                "t": self.state.clock,
                "type": cause,
                "counter": self.static_detector.counter,
                **self.stagnation_detector.window_stats(),
            })
            if cfg.detector_collision_reward:
                reward = cfg.reward.collision_reward

        self.total_reward += reward
        self.steps.append(StepLog(
            step=self.step_count, clock=self.state.clock, action=int(action),
            reward=reward, delta_c=delta_c, d_t=d_t, f_sigma=f_sigma,
            coverage=report.c_t, static_counter=self.static_detector.counter,
            stagnant=stagnant_flag, x=self.state.x, y=self.state.y,
            theta=self.state.theta))

        if cause is not None:
            self.done = True
            self.termination_cause = cause
        self.last_obs = self._observation(norm)
        return self.last_obs, reward, self.done, {"cause": cause,
                                                  "delta_c": delta_c,
                                                  "d_t": d_t}

    def terminate(self, cause: str):
        """External termination (planner exhausted, executor gave up)."""
        if cause not in TERMINATION_CAUSES:
            raise ValueError(f"unknown termination cause {cause!r}")
        self.done = True
        self.termination_cause = cause

    def make_record(self) -> EpisodeRecord:
        if not self.done:
            raise RuntimeError("episode still running")
        return EpisodeRecord(
            world_name=self.world.name, seed=self.seed, steps=self.steps,
            poses=self.poses, events=self.events,
            termination_cause=self.termination_cause,
            time_s=self.state.clock, path_length_m=self.path_length,
            completeness=self.coverage_now, total_reward=self.total_reward)


def run_episode(world_map: w.WorldMap, net, cfg: SimConfig | None = None,
                seed: int = 0, greedy: bool = False,
                slip_from: int | None = None) -> EpisodeRecord:
    """Roll one policy-driven episode to termination."""
    sim = Simulation(world_map, cfg, seed=seed, slip_from=slip_from)
    obs = sim.last_obs
    rng = np.random.default_rng(seed)
    while not sim.done:
        if greedy:
            action = net.greedy_action(obs)
        else:
            action, _, _ = net.sample_action(obs, rng)
        obs, _, _, _ = sim.step(action)
    return sim.make_record()
