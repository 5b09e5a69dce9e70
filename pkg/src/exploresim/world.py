"""Ground-truth world geometry, robot kinematics and collision handling.

A world is an axis-aligned rectangular room containing zero-width wall
segments and circular obstacles. The robot is a disc moving under unicycle
kinematics driven by three discrete commands (forward, arc left, arc right).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

# Default command velocities: every action keeps the same linear speed, the
# turn commands add a symmetric yaw rate (there is no turn-in-place action).
LINEAR_SPEED = 0.2
TURN_RATE = 0.4
DEFAULT_DT = 0.5
DEFAULT_ROBOT_RADIUS = 0.1

# Strict-inequality slack for the closed-containment boundary convention:
# a disc exactly touching a wall is not in collision.
_CONTACT_EPS = 1e-9


class WorldError(ValueError):
    """Raised when a world file fails to parse or validate."""


class Action(IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2


def action_velocity(action: Action, v: float = LINEAR_SPEED,
                    turn_rate: float = TURN_RATE) -> tuple[float, float]:
    """Map a discrete action to its commanded (v, omega) pair."""
    if action == Action.FORWARD:
        return v, 0.0
    if action == Action.TURN_LEFT:
        return v, turn_rate
    if action == Action.TURN_RIGHT:
        return v, -turn_rate
    raise ValueError(f"unknown action {action!r}")


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    # fmod can land exactly on +pi for inputs like -pi - 2^-52
    return -math.pi if wrapped >= math.pi else wrapped


@dataclass(frozen=True)
class WorldMap:
    """Immutable ground-truth environment.

    segments is an (n, 4) array of wall endpoints [x1, y1, x2, y2];
    circles is an (m, 3) array of [cx, cy, r]. free_area is the bounds
    area minus the obstacle discs (walls have zero width), used as the
    environment-area estimate for the adaptive stagnation threshold.
    """
    name: str
    bounds: tuple[float, float, float, float]
    segments: np.ndarray
    circles: np.ndarray
    free_area: float
    t_max: float = 600.0
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # closed boundary ring + interior walls, precomputed for the raycaster
    all_segments: np.ndarray = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return (x - margin >= xmin and x + margin <= xmax
                and y - margin >= ymin and y + margin <= ymax)


def _boundary_segments(bounds) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    return np.array([
        [xmin, ymin, xmax, ymin],
        [xmax, ymin, xmax, ymax],
        [xmax, ymax, xmin, ymax],
        [xmin, ymax, xmin, ymin],
    ], dtype=float)


def make_world(name, bounds, segments=(), circles=(), t_max=600.0,
               start=None) -> WorldMap:
    """Build and validate a WorldMap from plain geometry."""
    bounds = tuple(float(b) for b in bounds)
    if len(bounds) != 4:
        raise WorldError("bounds must be [xmin, ymin, xmax, ymax]")
    xmin, ymin, xmax, ymax = bounds
    if not (xmax > xmin and ymax > ymin):
        raise WorldError(f"bounds must have positive extent, got {bounds}")

    seg = np.asarray(list(segments), dtype=float).reshape(-1, 4)
    circ = np.asarray(list(circles), dtype=float).reshape(-1, 3)

    for x1, y1, x2, y2 in seg:
        for (px, py) in ((x1, y1), (x2, y2)):
            if not (xmin <= px <= xmax and ymin <= py <= ymax):
                raise WorldError(
                    f"segment endpoint ({px}, {py}) outside bounds {bounds}")
    for cx, cy, r in circ:
        if r <= 0:
            raise WorldError(f"circle radius must be positive, got {r}")
        if not (xmin <= cx - r and cx + r <= xmax
                and ymin <= cy - r and cy + r <= ymax):
            raise WorldError(
                f"circle ({cx}, {cy}, r={r}) not contained in bounds {bounds}")

    area = (xmax - xmin) * (ymax - ymin)
    free_area = area - float(np.sum(np.pi * circ[:, 2] ** 2)) if len(circ) else area
    if free_area <= 0:
        raise WorldError("free-space area must be positive")
    if t_max <= 0:
        raise WorldError("t_max must be positive")

    if start is None:
        start = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0, 0.0)
    start = (float(start[0]), float(start[1]), wrap_angle(float(start[2])))

    all_seg = np.vstack([_boundary_segments(bounds), seg]) if len(seg) else \
        _boundary_segments(bounds)
    return WorldMap(name=str(name), bounds=bounds, segments=seg, circles=circ,
                    free_area=free_area, t_max=float(t_max), start=start,
                    all_segments=all_seg)


def load_world(path) -> WorldMap:
    """Load a world from a JSON file.

    Expected keys: bounds [xmin, ymin, xmax, ymax], segments [[x1,y1,x2,y2],...],
    circles [[cx,cy,r],...], name. Optional: t_max (seconds, default 600) and
    start [x, y, theta] (default: room center).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise WorldError(f"cannot read world file {path}: {exc}") from exc
    if not isinstance(data, dict) or "bounds" not in data:
        raise WorldError(f"world file {path} is missing 'bounds'")
    return make_world(
        name=data.get("name", path.stem),
        bounds=data["bounds"],
        segments=data.get("segments", ()),
        circles=data.get("circles", ()),
        t_max=data.get("t_max", 600.0),
        start=data.get("start"),
    )


def bundled_world_path(name: str) -> Path:
    """Path to a world shipped with the package (name without .json)."""
    ref = resources.files("exploresim") / "worlds" / f"{name}.json"
    with resources.as_file(ref) as p:
        if not p.exists():
            raise WorldError(f"no bundled world named {name!r}")
        return Path(p)


def resolve_world(spec: str) -> WorldMap:
    """Load a world from a filesystem path or a bundled world name."""
    p = Path(spec)
    if p.exists():
        return load_world(p)
    return load_world(bundled_world_path(spec))


@dataclass(frozen=True)
class RobotState:
    """Robot pose plus last commanded velocities and the simulation clock."""
    x: float
    y: float
    theta: float
    v: float = 0.0
    omega: float = 0.0
    radius: float = DEFAULT_ROBOT_RADIUS
    clock: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


def advance_pose(x: float, y: float, theta: float, v: float, omega: float,
                 t: float) -> tuple[float, float, float]:
    """Exact unicycle integration over time t (arc when omega != 0)."""
    if abs(omega) < 1e-12:
        return x + v * t * math.cos(theta), y + v * t * math.sin(theta), theta
    radius = v / omega
    theta2 = theta + omega * t
    return (x + radius * (math.sin(theta2) - math.sin(theta)),
            y + radius * (math.cos(theta) - math.cos(theta2)),
            theta2)


def _point_segment_dist_sq(px, py, segs: np.ndarray) -> np.ndarray:
    x1, y1, x2, y2 = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    dx, dy = x2 - x1, y2 - y1
    len_sq = dx * dx + dy * dy
    t = np.where(len_sq > 0, ((px - x1) * dx + (py - y1) * dy) / np.where(len_sq > 0, len_sq, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx, cy = x1 + t * dx, y1 + t * dy
    return (px - cx) ** 2 + (py - cy) ** 2


def check_collision(x: float, y: float, radius: float, world: WorldMap) -> bool:
    """True iff the robot disc overlaps a wall, an obstacle, or leaves bounds.

    Containment is closed: a disc exactly touching the boundary is legal.
    """
    xmin, ymin, xmax, ymax = world.bounds
    slack = radius - _CONTACT_EPS
    if (x - slack < xmin or x + slack > xmax
            or y - slack < ymin or y + slack > ymax):
        return True
    if len(world.segments):
        if np.any(_point_segment_dist_sq(x, y, world.segments) < slack * slack):
            return True
    if len(world.circles):
        d = np.hypot(world.circles[:, 0] - x, world.circles[:, 1] - y)
        if np.any(d < world.circles[:, 2] + slack):
            return True
    return False


def step(state: RobotState, world: WorldMap, action: Action,
         dt: float = DEFAULT_DT, v: float = LINEAR_SPEED,
         turn_rate: float = TURN_RATE) -> tuple[RobotState, bool, float]:
    """Advance the robot one control period.

    Returns (new_state, collided, d_t). On contact the pose is clamped to
    the last collision-free point of the swept arc (found by sampling the
    arc and bisecting the bracketing interval), so the post-state never
    penetrates an obstacle. d_t is the straight-line distance between the
    old and new positions.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd_v, cmd_w = action_velocity(action, v=v, turn_rate=turn_rate)

    def pose_at(frac: float):
        return advance_pose(state.x, state.y, state.theta, cmd_v, cmd_w, frac * dt)

    # Coarse sweep: samples spaced well below the robot radius.
    travel = abs(cmd_v) * dt
    n_samples = max(2, int(math.ceil(travel / max(state.radius * 0.5, 1e-3))))
    collided = False
    lo, hi = 0.0, 1.0
    for i in range(1, n_samples + 1):
        frac = i / n_samples
        px, py, _ = pose_at(frac)
        if check_collision(px, py, state.radius, world):
            collided = True
            lo, hi = (i - 1) / n_samples, frac
            break

    if collided:
        for _ in range(8):
            mid = 0.5 * (lo + hi)
            px, py, _ = pose_at(mid)
            if check_collision(px, py, state.radius, world):
                hi = mid
            else:
                lo = mid
        final_frac = lo
    else:
        final_frac = 1.0

    nx, ny, ntheta = pose_at(final_frac)
    d_t = math.hypot(nx - state.x, ny - state.y)
    new_state = replace(state, x=nx, y=ny, theta=wrap_angle(ntheta),
                        v=cmd_v, omega=cmd_w, clock=state.clock + dt)
    return new_state, collided, d_t
