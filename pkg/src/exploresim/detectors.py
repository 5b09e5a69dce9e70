"""Stagnation detectors that end unproductive episodes early.

Two independent monitors run once per control step:

* StaticDetector — compares consecutive normalized scans by cosine
  similarity. A run of near-identical scans means the robot is not actually
  moving (wheel slip, a blocked base), regardless of what odometry claims.
  The flag raises once the run length of above-threshold similarities
  reaches the continuity threshold.

* StagnationDetector — watches the map expansion rate. If every sample in
  a trailing time window stays below an environment-adaptive threshold
  while motion commands are active, exploration has stalled even though
  the robot is driving. A robot deliberately pausing (zero commanded
  speed) never trips it.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .sensor import NormalizedScan

SIMILARITY_THRESHOLD = 0.98
CONTINUITY_THRESHOLD = 10
STAGNATION_WINDOW = 20.0
STAGNATION_BETA = 0.05


def cosine_similarity(a, b) -> float:
    """Inner product of a and b over the product of their Euclidean norms."""
    va = a.values if isinstance(a, NormalizedScan) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, NormalizedScan) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.dot(va, vb)) / (na * nb)


def compute_epsilon(a_env: float, t_max: float, beta: float = STAGNATION_BETA) -> float:
    """Adaptive minimum expansion rate: beta * area / typical exploration time."""
    if a_env <= 0 or t_max <= 0 or beta <= 0:
        raise ValueError("a_env, t_max and beta must all be positive")
    return beta * a_env / t_max


@dataclass
class StaticDetector:
    alpha: float = SIMILARITY_THRESHOLD
    omega: int = CONTINUITY_THRESHOLD
    counter: int = 0
    prev: np.ndarray | None = None
    last_similarity: float | None = None

    def update(self, scan: NormalizedScan) -> bool:
        """Feed one scan; returns the static flag (run length >= omega).

        The first scan only primes the comparison and cannot raise the flag.
        """
        values = scan.values if isinstance(scan, NormalizedScan) else np.asarray(scan, dtype=float)
        if self.prev is None:
            self.prev = np.array(values, dtype=float)
            return False
        sim = cosine_similarity(self.prev, values)
        self.last_similarity = sim
        self.counter = self.counter + 1 if sim > self.alpha else 0
        self.prev = np.array(values, dtype=float)
        return self.counter >= self.omega

    def reset(self):
        self.counter = 0
        self.prev = None
        self.last_similarity = None


@dataclass
class StagnationDetector:
    epsilon: float
    window: float = STAGNATION_WINDOW
    history: deque = field(default_factory=deque)
    first_t: float | None = None
    last_t: float | None = None

    @classmethod
    def for_environment(cls, a_env: float, t_max: float,
                        beta: float = STAGNATION_BETA,
                        window: float = STAGNATION_WINDOW) -> "StagnationDetector":
        return cls(epsilon=compute_epsilon(a_env, t_max, beta), window=window)

    def update(self, c_dot: float, speed_cmd: float, now: float) -> bool:
        """Record one expansion-rate sample; returns the stagnation flag.

        The flag requires (a) at least `window` seconds of history, (b) every
        sample inside the closed trailing window below epsilon, and (c) an
        active motion command.
        """
        if self.last_t is not None and now < self.last_t:
            raise ValueError(f"time went backwards: {now} < {self.last_t}")
        self.last_t = now
        if self.first_t is None:
            self.first_t = now
        self.history.append((now, c_dot))
        cutoff = now - self.window - 1e-9
        while self.history and self.history[0][0] < cutoff:
            self.history.popleft()
        if speed_cmd <= 0.0:
            return False
        if now - self.first_t < self.window - 1e-9:
            return False
        return all(rate < self.epsilon for _, rate in self.history)

    def window_stats(self) -> dict:
        rates = [rate for _, rate in self.history]
        return {
            "samples": len(rates),
            "max_rate": max(rates) if rates else None,
            "epsilon": self.epsilon,
            "window": self.window,
        }

    def reset(self):
        self.history.clear()
        self.first_t = None
        self.last_t = None
