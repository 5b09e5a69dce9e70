import math

import numpy as np
import pytest

from exploresim.sensor import LidarScan, downsample_normalize, scan
from exploresim.world import make_world


def march_oracle(pose, world, angle, max_range=3.5, step=0.001):
    """1 mm ray-marching reference: first sample blocked by bounds, a circle
    interior, or a crossed wall segment."""
    x, y, _ = pose
    ts = np.arange(0.0, max_range + step, step)
    px = x + ts * math.cos(angle)
    py = y + ts * math.sin(angle)
    xmin, ymin, xmax, ymax = world.bounds
    blocked = (px < xmin) | (px > xmax) | (py < ymin) | (py > ymax)
    for cx, cy, r in world.circles:
        blocked |= (px - cx) ** 2 + (py - cy) ** 2 < r * r
    hit_t = max_range
    idx = np.nonzero(blocked)[0]
    if len(idx):
        hit_t = ts[idx[0]]
    for x1, y1, x2, y2 in world.segments:
        sx, sy = x2 - x1, y2 - y1
        side = (px - x1) * sy - (py - y1) * sx
        cross = np.nonzero(np.diff(np.sign(side)) != 0)[0]
        for i in cross:
            length_sq = sx * sx + sy * sy
            u = ((px[i] - x1) * sx + (py[i] - y1) * sy) / length_sq
            if -1e-3 <= u <= 1.0 + 1e-3:
                hit_t = min(hit_t, ts[i + 1])
                break
    return min(hit_t, max_range)


def test_open_room_clamps_to_max_range():
    w = make_world("big", [0, 0, 10, 10])
    s = scan((5.0, 5.0, 0.3), w)
    assert np.all(s.ranges == 3.5)


def test_perpendicular_wall_distance():
    w = make_world("room", [0, 0, 10, 10])
    s = scan((1.0, 5.0, math.pi), w)
    assert s.ranges[0] == pytest.approx(1.0, abs=1e-9)


def test_circle_hit_distance():
    w = make_world("c", [-5, -5, 5, 5], circles=[[2, 0, 0.5]])
    s = scan((0.0, 0.0, 0.0), w)
    assert s.ranges[0] == pytest.approx(1.5, abs=1e-9)


def test_downsample_all_max():
    s = LidarScan(ranges=np.full(360, 3.5))
    norm = downsample_normalize(s, 24)
    assert norm.n == 24 and len(norm.values) == 24
    assert np.all(norm.values == 1.0)


def test_downsample_picks_strided_beams():
    ranges = np.full(360, 3.5)
    ranges[0] = 1.75
    ranges[1] = 0.7          # not on the stride; must not appear
    norm = downsample_normalize(LidarScan(ranges=ranges), 24)
    assert norm.values[0] == pytest.approx(0.5)
    assert np.all(norm.values[1:] == 1.0)


def test_downsample_requires_divisor():
    with pytest.raises(ValueError):
        downsample_normalize(LidarScan(ranges=np.full(360, 3.5)), 7)


def test_downsample_idempotent():
    rng = np.random.default_rng(7)
    ranges = rng.uniform(0.5, 3.5, 360)
    once = downsample_normalize(LidarScan(ranges=ranges), 24)
    again = downsample_normalize(
        LidarScan(ranges=once.values * 3.5, max_range=3.5), 24)
    assert np.array_equal(once.values, again.values)


def test_raycast_matches_marching_oracle(rng):
    worlds = [
        make_world("a", [0, 0, 6, 5], circles=[[2, 2, 0.5], [4.5, 3.5, 0.7]]),
        make_world("b", [0, 0, 8, 4], segments=[[3, 0, 3, 2.5], [5, 4, 5, 1.5]]),
        make_world("c", [-3, -3, 3, 3], segments=[[-1, -1, 1, -1]],
                   circles=[[1.5, 1.5, 0.6]]),
    ]
    for w in worlds:
        for _ in range(30):
            while True:
                x = rng.uniform(w.bounds[0] + 0.2, w.bounds[2] - 0.2)
                y = rng.uniform(w.bounds[1] + 0.2, w.bounds[3] - 0.2)
                if not any((x - cx) ** 2 + (y - cy) ** 2 < (r + 0.05) ** 2
                           for cx, cy, r in w.circles):
                    break
            theta = rng.uniform(-math.pi, math.pi)
            s = scan((x, y, theta), w)
            for beam in rng.integers(0, 360, size=4):
                angle = theta + beam * math.pi / 180.0
                expected = march_oracle((x, y, theta), w, angle)
                assert abs(s.ranges[beam] - expected) <= 2e-3


def test_noise_requires_rng_and_stays_in_band():
    w = make_world("room", [0, 0, 10, 10])
    with pytest.raises(ValueError):
        scan((5, 5, 0), w, noise_sigma=0.01)
    s = scan((5, 5, 0), w, noise_sigma=0.02, rng=np.random.default_rng(0))
    assert np.all(s.ranges > 0) and np.all(s.ranges <= 3.5)
