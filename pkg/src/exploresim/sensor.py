"""Raycast range sensor: 360-beam scans and the normalized downsample fed
to the learning agent.

Beam i leaves the robot at heading + i degrees, counterclockwise. A beam
that hits nothing within max_range reports exactly max_range, so the
normalized values always land in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import WorldMap

MAX_RANGE = 3.5
NUM_BEAMS = 360


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray        # (num_beams,) meters, in (0, max_range]
    max_range: float = MAX_RANGE

    @property
    def num_beams(self) -> int:
        return len(self.ranges)


@dataclass(frozen=True)
class NormalizedScan:
    values: np.ndarray        # (n,) range ratios in [0, 1]
    n: int


def beam_angles(theta: float, num_beams: int = NUM_BEAMS) -> np.ndarray:
    return theta + np.arange(num_beams) * (2.0 * np.pi / num_beams)


def _ray_segment_dists(ox, oy, dx, dy, segs: np.ndarray) -> np.ndarray:
    """Per-beam distance to the nearest segment hit (inf when none).

    dx, dy are (B,) beam directions; segs is (S, 4). Solves
    o + t*d = p1 + u*(p2-p1) with t >= 0, u in [0, 1].
    """
    p1x, p1y = segs[:, 0], segs[:, 1]
    sx, sy = segs[:, 2] - p1x, segs[:, 3] - p1y
    denom = dx[:, None] * sy[None, :] - dy[:, None] * sx[None, :]   # (B, S)
    qx, qy = p1x[None, :] - ox, p1y[None, :] - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qx * sy[None, :] - qy * sx[None, :]) / denom
        u = (qx * dy[:, None] - qy * dx[:, None]) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= -1e-12) & (u <= 1.0 + 1e-12)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


def _ray_circle_dists(ox, oy, dx, dy, circles: np.ndarray) -> np.ndarray:
    """Per-beam distance to the nearest circle hit (inf when none)."""
    cx, cy, r = circles[:, 0], circles[:, 1], circles[:, 2]
    ocx, ocy = cx[None, :] - ox, cy[None, :] - oy      # (1, C)
    b = dx[:, None] * ocx + dy[:, None] * ocy          # (B, C)
    c = ocx * ocx + ocy * ocy - (r * r)[None, :]
    disc = b * b - c
    hit = disc >= 0.0
    sqrt_disc = np.sqrt(np.where(hit, disc, 0.0))
    t_near = b - sqrt_disc
    t_far = b + sqrt_disc
    # take the near root when in front of the origin; the far root covers
    # the degenerate origin-inside-circle case
    t = np.where(t_near >= 0.0, t_near, np.where(t_far >= 0.0, t_far, np.inf))
    t = np.where(hit, t, np.inf)
    return t.min(axis=1)


def scan(pose, world: WorldMap, max_range: float = MAX_RANGE,
         num_beams: int = NUM_BEAMS, noise_sigma: float = 0.0,
         rng: np.random.Generator | None = None) -> LidarScan:
    """Cast num_beams rays from pose = (x, y, theta) and return ranges.

    Optional Gaussian range noise (noise_sigma > 0) perturbs each beam;
    results are clipped back into (0, max_range].
    """
    x, y, theta = pose
    angles = beam_angles(theta, num_beams)
    dx, dy = np.cos(angles), np.sin(angles)

    dists = _ray_segment_dists(x, y, dx, dy, world.all_segments)
    if len(world.circles):
        dists = np.minimum(dists, _ray_circle_dists(x, y, dx, dy, world.circles))
    ranges = np.minimum(dists, max_range)

    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        ranges = ranges + rng.normal(0.0, noise_sigma, size=num_beams)
        ranges = np.clip(ranges, 1e-6, max_range)
    return LidarScan(ranges=ranges, max_range=max_range)


def downsample_normalize(lidar: LidarScan, n: int = 24) -> NormalizedScan:
    """Uniform-stride subsample of the raw scan, normalized by max range.

    n must divide the beam count; value k is ranges[k * (beams / n)] / max_range.
    """
    beams = lidar.num_beams
    if n <= 0 or beams % n != 0:
        raise ValueError(f"sample count {n} must divide {beams}")
    stride = beams // n
    values = lidar.ranges[::stride] / lidar.max_range
    return NormalizedScan(values=values, n=n)
