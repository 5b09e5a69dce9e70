"""2D active-exploration testbed.

Vector-geometry worlds, a raycast range sensor, occupancy-grid mapping with
coverage accounting, a pose-uncertainty proxy, a coverage/uncertainty/path
reward, stagnation detectors, a from-scratch PPO agent, and frontier/RRT
baselines, tied together by a batch evaluation harness and CLI.
"""
from .world import (Action, RobotState, WorldMap, check_collision, load_world,
                    make_world, bundled_world_path, resolve_world, step)
from .sensor import LidarScan, NormalizedScan, downsample_normalize, scan
from .mapping import (FREE, OCCUPIED, UNKNOWN, CoverageReport, GroundTruth,
                      OccupancyGrid, coverage)
from .uncertainty import PoseBelief, d_optimality, observe_correct, propagate
from .reward import RewardConfig, StepOutcome, path_penalty, step_reward
from .detectors import (StagnationDetector, StaticDetector, compute_epsilon,
                        cosine_similarity)
from .policy import AdamOptimizer, PolicyValueNet, load_checkpoint, save_checkpoint
from .ppo import (RolloutBuffer, TrainConfig, Trainer, gae_advantages,
                  ppo_loss_and_grad, ppo_update)
from .episode import EpisodeRecord, SimConfig, Simulation, run_episode
from .baselines import (ExplorationComplete, FrontierSet, RrtTree,
                        detect_frontiers, explore, follow_waypoints,
                        plan_to_frontier, rrt_explore_step,
                        run_baseline_episode)
from .harness import RunConfig, ablate, evaluate, train, worldcheck

__version__ = "0.1.0"
