"""Clipped-surrogate policy optimization on top of the manual-gradient net.

The loss is the standard composite: negative clipped surrogate plus a
value-function MSE term minus an entropy bonus. Its gradient is assembled
analytically — the surrogate contributes through d(ratio)/d(logits), the
entropy and value terms through their closed forms — and pushed through the
network's exact backward pass. ppo_update then runs several epochs of
shuffled minibatch Adam steps over one rollout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .episode import Simulation
from .policy import AdamOptimizer, PolicyValueNet, log_softmax


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss or gradient appears during an update."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


@dataclass
class TrainConfig:
    batch_size: int = 64              # minibatch size per gradient step
    max_episode_steps: int = 5000
    total_steps: int = 350_000        # environment steps over the whole run
    gamma: float = 0.99
    lr: float = 3e-4
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    rollout_len: int = 2048
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    normalize_advantages: bool = True
    seed: int = 0
    max_episodes: int | None = None   # optional early stop by episode count


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    logprob: float
    reward: float
    value: float
    done: bool


class RolloutBuffer:
    def __init__(self, capacity: int, obs_size: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.logprobs = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0

    def add(self, obs, action, logprob, reward, value, done):
        i = self.size
        if i >= self.capacity:
            raise IndexError("rollout buffer full")
        self.obs[i] = obs
        self.actions[i] = action
        self.logprobs[i] = logprob
        self.rewards[i] = reward
        self.values[i] = value
        self.dones[i] = done
        self.size = i + 1

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def clear(self):
        self.size = 0


def gae_advantages(rewards, values, dones, gamma: float, lam: float,
                   bootstrap_value: float = 0.0):
    """Generalized advantage estimates and returns (= advantages + values).

    dones[t] marks the end of an episode at step t; both the bootstrap and
    the recursive term are masked there so estimates never leak across
    episode boundaries.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    if n == 0:
        raise ValueError("empty transition sequence")
    advantages = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        advantages[t] = carry
    return advantages, advantages + values


def ppo_loss_and_grad(net: PolicyValueNet, obs, actions, old_logprobs,
                      advantages, returns, clip_eps: float,
                      value_coef: float = 0.5, entropy_coef: float = 0.01):
    """Composite loss, its exact parameter gradient, and diagnostics."""
    obs = np.atleast_2d(obs)
    actions = np.asarray(actions, dtype=np.int64)
    old_logprobs = np.asarray(old_logprobs, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    returns = np.asarray(returns, dtype=float)
    n = len(actions)

    logits, values, cache = net.forward_batch(obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp_act = logp_all[np.arange(n), actions]

    ratio = np.exp(logp_act - old_logprobs)
    clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) \
        if np.isfinite(clip_eps) else ratio
    unclipped = ratio * advantages
    clipped = clipped_ratio * advantages
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -float(np.mean(surrogate))

    value_err = values - returns
    value_loss = float(np.mean(value_err ** 2))

    entropy_per = -np.sum(probs * logp_all, axis=1)
    entropy = float(np.mean(entropy_per))

    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy

    # d(surrogate)/d(ratio): the unclipped branch wins at ties; when the
    # clipped branch is strictly smaller the clip is binding, so its
    # derivative is zero.
    dsurr_dratio = np.where(unclipped <= clipped, advantages, 0.0)
    dlogp_act = -(dsurr_dratio * ratio) / n
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(n), actions] = 1.0
    dlogits = dlogp_act[:, None] * (one_hot - probs)
    # entropy bonus: dH/dlogits = -p * (logp + H); the loss carries -coef*H
    dlogits += entropy_coef * probs * (logp_all + entropy_per[:, None]) / n
    dvalues = value_coef * 2.0 * value_err / n

    grad = net.backward_from_outputs(cache, dlogits, dvalues)

    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old_logprobs - logp_act)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps))
        if np.isfinite(clip_eps) else 0.0,
    }
    return loss, grad, stats


def ppo_update(net: PolicyValueNet, optimizer: AdamOptimizer,
               buffer: RolloutBuffer, cfg: TrainConfig,
               rng: np.random.Generator, bootstrap_value: float = 0.0) -> dict:
    """Run epochs of shuffled-minibatch updates over one rollout."""
    n = buffer.size
    if n < cfg.batch_size:
        raise ValueError(f"rollout ({n}) smaller than batch size ({cfg.batch_size})")
    obs = buffer.obs[:n]
    actions = buffer.actions[:n]
    old_logprobs = buffer.logprobs[:n]
    advantages, returns = gae_advantages(
        buffer.rewards[:n], buffer.values[:n], buffer.dones[:n],
        cfg.gamma, cfg.gae_lambda, bootstrap_value)
    if cfg.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    agg: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad, stats = ppo_loss_and_grad(
                net, obs[idx], actions[idx], old_logprobs[idx],
                advantages[idx], returns[idx], cfg.clip_eps,
                cfg.value_coef, cfg.entropy_coef)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(
                    f"non-finite loss/gradient in update (loss={loss})", stats)
            optimizer.step(net.params, grad)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in agg.items()}


@dataclass
class EpisodeSummary:
    index: int
    steps: int
    reward: float
    time_s: float
    coverage: float
    distance: float
    cause: str


@dataclass
class UpdateSummary:
    index: int
    env_steps: int
    mean_episode_reward: float
    stats: dict = field(default_factory=dict)


class Trainer:
    """Single-environment training loop: collect a rollout (possibly spanning
    several episodes), update, repeat until the step or episode budget runs
    out."""

    def __init__(self, world_map, sim_cfg, train_cfg: TrainConfig,
                 net: PolicyValueNet | None = None):
        self.world = world_map
        self.sim_cfg = sim_cfg
        self.cfg = train_cfg
        self.rng = np.random.default_rng(train_cfg.seed)
        self.env = Simulation(world_map, sim_cfg, seed=train_cfg.seed)
        self.net = net or PolicyValueNet(self.env.obs_size, rng=self.rng)
        self.optimizer = AdamOptimizer(self.net.n_params, lr=train_cfg.lr)
        self.episodes: list[EpisodeSummary] = []
        self.updates: list[UpdateSummary] = []
        self.env_steps = 0

    def _budget_left(self) -> bool:
        if self.env_steps >= self.cfg.total_steps:
            return False
        if self.cfg.max_episodes is not None and \
                len(self.episodes) >= self.cfg.max_episodes:
            return False
        return True

    def run(self, on_episode=None, on_update=None):
        buffer = RolloutBuffer(self.cfg.rollout_len, self.env.obs_size)
        obs = self.env.reset()
        recent_rewards: list[float] = []
        while self._budget_left():
            buffer.clear()
            while not buffer.full and self._budget_left():
                action, logprob, value = self.net.sample_action(obs, self.rng)
                next_obs, reward, done, _ = self.env.step(action)
                buffer.add(obs, action, logprob, reward, value, done)
                self.env_steps += 1
                obs = next_obs
                if done or self.env.step_count >= self.cfg.max_episode_steps:
                    if not done:
                        self.env.terminate("step_limit")
                    summary = EpisodeSummary(
                        index=len(self.episodes), steps=self.env.step_count,
                        reward=self.env.total_reward,
                        time_s=self.env.state.clock,
                        coverage=self.env.coverage_now,
                        distance=self.env.path_length,
                        cause=self.env.termination_cause)
                    self.episodes.append(summary)
                    recent_rewards.append(summary.reward)
                    if on_episode:
                        on_episode(summary)
                    obs = self.env.reset()
            if buffer.size < self.cfg.batch_size:
                break
            # bootstrap with the value of the observation after the last
            # stored transition (zero if that transition closed an episode)
            last_value = 0.0 if buffer.dones[buffer.size - 1] else \
                self.net.forward(obs)[1]
            stats = ppo_update(self.net, self.optimizer, buffer, self.cfg,
                               self.rng, bootstrap_value=last_value)
            mean_recent = float(np.mean(recent_rewards[-20:])) if recent_rewards else 0.0
            update = UpdateSummary(index=len(self.updates),
                                   env_steps=self.env_steps,
                                   mean_episode_reward=mean_recent,
                                   stats=stats)
            self.updates.append(update)
            if on_update:
                on_update(update)
        return self.net
