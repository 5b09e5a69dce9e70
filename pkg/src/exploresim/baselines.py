"""Classical exploration baselines: nearest-frontier and RRT planners.

Both planners emit waypoint paths that the shared executor follows using
the same three discrete motion commands, timestep and metrics pipeline as
the learned policy, so cross-method comparisons measure the strategy, not
the plumbing.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .episode import EpisodeRecord, Simulation
from .mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from .world import WorldMap, Action, wrap_angle

MIN_CLUSTER_SIZE = 3
RRT_GOAL_BIAS = 0.1
RRT_STEP_LEN = 0.3
RRT_NODE_CAP = 5000


class ExplorationComplete(Exception):
    """Signal: the planner found no remaining reachable frontier."""


@dataclass
class FrontierSet:
    clusters: list        # list of (k, 2) int arrays of (row, col) cells
    centroids: np.ndarray  # (n, 2) world coordinates

    def __len__(self):
        return len(self.clusters)


def frontier_mask(cells: np.ndarray) -> np.ndarray:
    """Free cells with at least one Unknown 4-neighbor."""
    unknown = cells == UNKNOWN
    near_unknown = np.zeros_like(unknown)
    near_unknown[1:, :] |= unknown[:-1, :]
    near_unknown[:-1, :] |= unknown[1:, :]
    near_unknown[:, 1:] |= unknown[:, :-1]
    near_unknown[:, :-1] |= unknown[:, 1:]
    return (cells == FREE) & near_unknown


def detect_frontiers(grid: OccupancyGrid,
                     min_cluster_size: int = MIN_CLUSTER_SIZE) -> FrontierSet:
    """All maximal 8-connected frontier clusters of at least the minimum size."""
    if not np.any(grid.cells == FREE):
        raise ValueError("grid has no free cells")
    mask = frontier_mask(grid.cells)
    ny, nx = mask.shape
    seen = np.zeros_like(mask)
    clusters = []
    for r0, c0 in zip(*np.nonzero(mask)):
        if seen[r0, c0]:
            continue
        stack = [(r0, c0)]
        seen[r0, c0] = True
        cluster = []
        while stack:
            r, c = stack.pop()
            cluster.append((r, c))
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < ny and 0 <= nc < nx and mask[nr, nc] \
                            and not seen[nr, nc]:
                        seen[nr, nc] = True
                        stack.append((nr, nc))
        if len(cluster) >= min_cluster_size:
            clusters.append(np.array(cluster, dtype=int))

    centroids = np.zeros((len(clusters), 2))
    for i, cl in enumerate(clusters):
        cx, cy = grid.cell_centers(cl[:, 0].astype(float), cl[:, 1].astype(float))
        centroids[i] = (float(np.mean(cx)), float(np.mean(cy)))
    return FrontierSet(clusters=clusters, centroids=centroids)


def _inflated_blocked(grid: OccupancyGrid, clearance_cells: int) -> np.ndarray:
    """Occupied cells dilated by a square clearance, plus a border band
    (the robot disc must stay inside the room)."""
    blocked = grid.cells == OCCUPIED
    if clearance_cells > 0:
        occ = blocked
        out = blocked.copy()
        for dr in range(-clearance_cells, clearance_cells + 1):
            for dc in range(-clearance_cells, clearance_cells + 1):
                if dr == 0 and dc == 0:
                    continue
                src = occ[max(0, -dr):occ.shape[0] - max(0, dr),
                          max(0, -dc):occ.shape[1] - max(0, dc)]
                out[max(0, dr):out.shape[0] - max(0, -dr),
                    max(0, dc):out.shape[1] - max(0, -dc)] |= src
        blocked = out
        blocked[:clearance_cells, :] = True
        blocked[-clearance_cells:, :] = True
        blocked[:, :clearance_cells] = True
        blocked[:, -clearance_cells:] = True
    return blocked


def astar(passable: np.ndarray, start: tuple[int, int],
          goal: tuple[int, int]) -> list | None:
    """Unit-cost 8-connected A* (Chebyshev heuristic), so the number of
    moves matches an unweighted BFS distance. Returns cells or None."""
    ny, nx = passable.shape
    if not passable[start] or not passable[goal]:
        return None

    def h(cell):
        return max(abs(cell[0] - goal[0]), abs(cell[1] - goal[1]))

    open_heap = [(h(start), 0, start)]
    g_score = {start: 0}
    came_from = {}
    counter = 0
    while open_heap:
        _, _, current = heapq.heappop(open_heap)
        if current == goal:
            path = [current]
            while current in came_from:
                current = came_from[current]
                path.append(current)
            return path[::-1]
        g_here = g_score[current]
        r, c = current
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < ny and 0 <= nc < nx) or not passable[nr, nc]:
                    continue
                tentative = g_here + 1
                if tentative < g_score.get((nr, nc), 1 << 30):
                    g_score[(nr, nc)] = tentative
                    came_from[(nr, nc)] = current
                    counter += 1
                    heapq.heappush(open_heap, (tentative + h((nr, nc)),
                                               counter, (nr, nc)))
    return None


def _snap_to_passable(passable: np.ndarray, cell, max_radius: int = 8):
    if passable[cell]:
        return cell
    r0, c0 = cell
    ny, nx = passable.shape
    for radius in range(1, max_radius + 1):
        best = None
        for dr in range(-radius, radius + 1):
            for dc in range(-radius, radius + 1):
                if max(abs(dr), abs(dc)) != radius:
                    continue
                r, c = r0 + dr, c0 + dc
                if 0 <= r < ny and 0 <= c < nx and passable[r, c]:
                    d = dr * dr + dc * dc
                    if best is None or d < best[0]:
                        best = (d, (r, c))
        if best:
            return best[1]
    return None


def plan_to_frontier(grid: OccupancyGrid, pose_xy, frontiers: FrontierSet,
                     clearance_cells: int = 0) -> list[tuple[float, float]]:
    """Path (world coordinates) to the nearest reachable frontier.

    Candidates are ranked by Euclidean distance from the robot to the
    cluster centroid, ties broken by smaller centroid x then y. The goal
    cell is the cluster cell nearest its centroid (the centroid itself may
    fall off the cluster). Raises ExplorationComplete when no candidate is
    reachable.
    """
    if len(frontiers) == 0:
        raise ExplorationComplete("no frontier clusters remain")
    passable = (grid.cells == FREE) & ~_inflated_blocked(grid, clearance_cells)
    start = _snap_to_passable(passable, grid.cell_index(*pose_xy))
    if start is None:
        raise ExplorationComplete("robot cell is walled off at this clearance")

    px, py = pose_xy
    order = sorted(
        range(len(frontiers)),
        key=lambda i: (math.hypot(frontiers.centroids[i][0] - px,
                                  frontiers.centroids[i][1] - py),
                       frontiers.centroids[i][0], frontiers.centroids[i][1]))
    for i in order:
        cluster = frontiers.clusters[i]
        ccx, ccy = frontiers.centroids[i]
        cx, cy = grid.cell_centers(cluster[:, 0].astype(float),
                                   cluster[:, 1].astype(float))
        by_centroid = np.argsort((cx - ccx) ** 2 + (cy - ccy) ** 2, kind="stable")
        goal = None
        for j in by_centroid[:16]:
            cand = (int(cluster[j, 0]), int(cluster[j, 1]))
            snapped = _snap_to_passable(passable, cand, max_radius=clearance_cells + 2)
            if snapped is not None:
                goal = snapped
                break
        if goal is None:
            continue
        cells = astar(passable, start, goal)
        if cells is not None:
            xs, ys = grid.cell_centers(np.array([r for r, _ in cells], dtype=float),
                                       np.array([c for _, c in cells], dtype=float))
            return list(zip(xs.tolist(), ys.tolist()))
    raise ExplorationComplete("no reachable frontier at this clearance")


# --------------------------------------------------------------------- RRT
@dataclass
class RrtTree:
    goal_bias: float = RRT_GOAL_BIAS
    step_len: float = RRT_STEP_LEN
    node_cap: int = RRT_NODE_CAP
    nodes: np.ndarray = None
    parents: list = field(default_factory=list)
    size: int = 0
    bias_target: tuple[float, float] | None = None
    # frontier cells frozen at seed time; the grid does not change while
    # the robot stands still and plans
    frontier_cells: np.ndarray = None

    def seed(self, pose_xy, grid: OccupancyGrid):
        self.nodes = np.zeros((self.node_cap, 2))
        self.nodes[0] = pose_xy
        self.parents = [-1]
        self.size = 1
        self.frontier_cells = frontier_mask(grid.cells)
        unknown = np.argwhere(grid.cells == UNKNOWN)
        if len(unknown):
            ux, uy = grid.cell_centers(unknown[:, 0].astype(float),
                                       unknown[:, 1].astype(float))
            d = (ux - pose_xy[0]) ** 2 + (uy - pose_xy[1]) ** 2
            k = int(np.argmin(d))
            self.bias_target = (float(ux[k]), float(uy[k]))

    def path_to(self, index: int):
        path = []
        while index >= 0:
            path.append((float(self.nodes[index, 0]), float(self.nodes[index, 1])))
            index = self.parents[index]
        return path[::-1]


def _walk_edge(grid: OccupancyGrid, a, b, frontier: np.ndarray,
               blocked: np.ndarray | None = None):
    """Sweep the cells under segment a->b. Returns (ok, endpoint): blocked
    edges fail; an edge that crosses a frontier cell is cut short there (the
    steering stops early on the goal band, like it would on an obstacle)."""
    ax, ay = a
    bx, by = b
    n = max(2, int(math.hypot(bx - ax, by - ay) / (grid.resolution * 0.5)) + 1)
    for t in np.linspace(0.0, 1.0, n):
        px, py = ax + t * (bx - ax), ay + t * (by - ay)
        r, c = grid.cell_index(px, py)
        if not grid.in_grid(r, c):
            return False, b
        if blocked is not None and blocked[r, c]:
            return False, b
        if blocked is None and grid.cells[r, c] == OCCUPIED:
            return False, b
        if t > 0.0 and frontier[r, c]:
            return True, (px, py)
    return True, b


def rrt_explore_step(grid: OccupancyGrid, pose_xy, tree: RrtTree,
                     rng: np.random.Generator,
                     blocked: np.ndarray | None = None):
    """Grow the tree by one node; returns a root-to-node path once a node
    lands on a frontier cell, else None.

    Sampling is uniform over the grid extent with a goal-biased draw toward
    the unknown region nearest the root. Edges may cross Unknown space but
    never Occupied cells. Raises ExplorationComplete when the map has no
    unknown cells left or the node cap is exhausted.
    """
    if not np.any(grid.cells == UNKNOWN):
        raise ExplorationComplete("map fully classified")
    if tree.nodes is None or tree.size == 0:
        tree.seed(pose_xy, grid)
    if tree.size >= tree.node_cap:
        raise ExplorationComplete("tree node cap reached without a frontier")

    ox, oy = grid.origin
    if tree.bias_target is not None and rng.random() < tree.goal_bias:
        sample = tree.bias_target
    else:
        sample = (ox + rng.random() * grid.nx * grid.resolution,
                  oy + rng.random() * grid.ny * grid.resolution)

    live = tree.nodes[:tree.size]
    d2 = (live[:, 0] - sample[0]) ** 2 + (live[:, 1] - sample[1]) ** 2
    nearest = int(np.argmin(d2))
    nx_, ny_ = live[nearest]
    dist = math.hypot(sample[0] - nx_, sample[1] - ny_)
    if dist < 1e-9:
        return None
    frac = min(1.0, tree.step_len / dist)
    new = (nx_ + frac * (sample[0] - nx_), ny_ + frac * (sample[1] - ny_))

    ok, new = _walk_edge(grid, (nx_, ny_), new, tree.frontier_cells, blocked)
    if not ok:
        return None
    idx = tree.size
    tree.nodes[idx] = new
    tree.parents.append(nearest)
    tree.size += 1

    r, c = grid.cell_index(*new)
    if grid.in_grid(r, c) and tree.frontier_cells[r, c]:
        return tree.path_to(idx)
    return None


# ----------------------------------------------------------------- executor
def _obstacle_cloud(sim: Simulation, reach: float = 1.5) -> np.ndarray:
    """Obstacle evidence near the robot: surface points from the latest scan
    plus mapped Occupied cell centers. Only sensed data — never ground truth."""
    lidar = sim.last_scan
    x, y, theta = sim.state.pose
    hit = lidar.ranges < lidar.max_range - 1e-9
    parts = []
    if np.any(hit):
        angles = theta + np.nonzero(hit)[0] * (2.0 * np.pi / lidar.num_beams)
        r = lidar.ranges[hit]
        parts.append(np.column_stack([x + r * np.cos(angles),
                                      y + r * np.sin(angles)]))
    grid = sim.grid
    res = grid.resolution
    r0 = max(0, int((y - reach - grid.origin[1]) / res))
    r1 = min(grid.ny, int((y + reach - grid.origin[1]) / res) + 1)
    c0 = max(0, int((x - reach - grid.origin[0]) / res))
    c1 = min(grid.nx, int((x + reach - grid.origin[0]) / res) + 1)
    occ = np.argwhere(grid.cells[r0:r1, c0:c1] == OCCUPIED)
    if len(occ):
        cy = grid.origin[1] + (occ[:, 0] + r0 + 0.5) * res
        cx = grid.origin[0] + (occ[:, 1] + c0 + 0.5) * res
        parts.append(np.column_stack([cx, cy]))
    return np.vstack(parts) if parts else np.zeros((0, 2))


def _arc_clearance(sim: Simulation, pose, action: Action,
                   cloud: np.ndarray) -> float:
    """Minimum surface clearance along the one-step swept arc of an action
    (distance to the nearest obstacle evidence minus the robot radius, also
    bounded by the wall slack at the room boundary)."""
    from .world import action_velocity, advance_pose

    cfg = sim.cfg
    v, omega = action_velocity(action, cfg.linear_speed, cfg.turn_rate)
    x, y, theta = pose
    xmin, ymin, xmax, ymax = sim.world.bounds
    clearance = math.inf
    for frac in (0.34, 0.67, 1.0):
        px, py, _ = advance_pose(x, y, theta, v, omega, frac * cfg.dt)
        slack = min(px - xmin, xmax - px, py - ymin, ymax - py) - cfg.robot_radius
        clearance = min(clearance, slack)
        if len(cloud):
            d2 = (cloud[:, 0] - px) ** 2 + (cloud[:, 1] - py) ** 2
            clearance = min(clearance, math.sqrt(float(d2.min())) - cfg.robot_radius)
    return clearance


def _arc_end(sim: Simulation, pose, action: Action):
    from .world import action_velocity, advance_pose
    v, omega = action_velocity(action, sim.cfg.linear_speed, sim.cfg.turn_rate)
    return advance_pose(pose[0], pose[1], pose[2], v, omega, sim.cfg.dt)


_ALL_ACTIONS = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


def _escape_exists(sim: Simulation, pose, cloud: np.ndarray, margin: float,
                   open_clearance: float, horizon: int = 16) -> bool:
    """Whether some committed manoeuvre (hold one action for the whole
    horizon — up to a full U-turn) keeps the margin throughout and ends with
    healthy clearance.

    The turning circle (v / turn_rate = 0.5 m) is wide relative to the
    sensor margin, so an action is only safe if such an escape can still
    complete after it. Committed arcs are used rather than greedy
    re-steering: greedy rollouts can dither above the margin inside a pocket
    that no executable manoeuvre actually leaves."""
    for action in _ALL_ACTIONS:
        cur = pose
        ok = True
        for _ in range(horizon):
            if _arc_clearance(sim, cur, action, cloud) < margin:
                ok = False
                break
            cur = _arc_end(sim, cur, action)
        if ok and max(_arc_clearance(sim, cur, a, cloud)
                      for a in _ALL_ACTIONS) >= open_clearance:
            return True
    return False


def _pick_action(sim: Simulation, err: float, turn_threshold: float,
                 margin: float = 0.05, open_clearance: float = 0.15) -> Action:
    """Heading-greedy action choice with an escape-manoeuvre safety veto.

    An action is admissible when its own swept arc keeps the margin and a
    committed escape manoeuvre from its endpoint exists. With every action
    inadmissible, steer for maximum immediate clearance (buying time while
    the stuck/replan logic reroutes).
    """
    if abs(err) <= turn_threshold:
        ranked = [Action.FORWARD,
                  Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT,
                  Action.TURN_RIGHT if err > 0 else Action.TURN_LEFT]
    elif err > 0:
        ranked = [Action.TURN_LEFT, Action.FORWARD, Action.TURN_RIGHT]
    else:
        ranked = [Action.TURN_RIGHT, Action.FORWARD, Action.TURN_LEFT]
    cloud = _obstacle_cloud(sim, reach=2.0)
    pose = sim.state.pose
    for action in ranked:
        if _arc_clearance(sim, pose, action, cloud) < margin:
            continue
        if _escape_exists(sim, _arc_end(sim, pose, action), cloud, margin,
                          open_clearance):
            return action
    return max(ranked, key=lambda a: _arc_clearance(sim, pose, a, cloud))


def follow_waypoints(sim: Simulation, path, lookahead: float = 0.6,
                     final_tol: float = 0.08, turn_threshold: float = 0.15,
                     stuck_limit: int = 60, max_steps: int | None = None) -> str:
    """Drive the simulation along a waypoint path with the discrete actions.

    Pure-pursuit style: track progress as the nearest path point in a
    forward window, steer toward the point one lookahead further along the
    path (the lookahead exceeds the 0.5 m turning radius, or nearby targets
    would be orbited forever), and swap any arc that would cross sensed
    obstacles for the best safe alternative. Returns one of "path_done",
    "blocked", "stuck", "terminated".
    """
    if not len(path):
        raise ValueError("empty path")
    pts = np.asarray(path, dtype=float).reshape(-1, 2)
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    index = 0
    top_index = 0
    since_progress = 0
    steps = 0
    while not sim.done:
        x, y, theta = sim.state.pose
        window_end = min(len(pts), index + 40)
        d2 = (pts[index:window_end, 0] - x) ** 2 + (pts[index:window_end, 1] - y) ** 2
        index += int(np.argmin(d2))

        if math.hypot(pts[-1, 0] - x, pts[-1, 1] - y) < final_tol:
            return "path_done"

        # replan as soon as the remaining path crosses newly seen obstacles
        for wx, wy in pts[index:index + 20]:
            r, c = sim.grid.cell_index(wx, wy)
            if sim.grid.in_grid(r, c) and sim.grid.cells[r, c] == OCCUPIED:
                return "blocked"

        if index > top_index:
            top_index = index
            since_progress = 0
        else:
            since_progress += 1
            if since_progress >= stuck_limit:
                return "stuck"

        target = min(int(np.searchsorted(arc, arc[index] + lookahead)),
                     len(pts) - 1)
        wx, wy = pts[target]
        err = wrap_angle(math.atan2(wy - y, wx - x) - theta)
        sim.step(_pick_action(sim, err, turn_threshold))
        steps += 1
        if max_steps is not None and steps >= max_steps:
            return "stuck"
    return "terminated"


def _truncate_path(path, trim: float = 0.5):
    """Drop the tail of a path: a frontier is observed by the scanner from
    afar, and driving all the way onto it drags the robot into corner
    pockets the arc kinematics cannot leave."""
    pts = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return path
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    total = float(seg.sum())
    keep = max(total - min(trim, total / 2.0), 1e-9)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    end = int(np.searchsorted(cum, keep)) + 1
    return [tuple(p) for p in pts[:max(end, 2)]]


def _plan_frontier_path(sim: Simulation, clearance_cells: int):
    frontiers = detect_frontiers(sim.grid)
    for clearance in range(clearance_cells, -1, -1):
        try:
            return plan_to_frontier(sim.grid, (sim.state.x, sim.state.y),
                                    frontiers, clearance_cells=clearance)
        except ExplorationComplete:
            if clearance == 0:
                raise
    raise ExplorationComplete("unreachable")


def _plan_rrt_path(sim: Simulation, rng, clearance_cells: int,
                   max_attempts: int = 50_000):
    blocked = _inflated_blocked(sim.grid, clearance_cells)
    tree = RrtTree()
    for _ in range(max_attempts):
        path = rrt_explore_step(sim.grid, (sim.state.x, sim.state.y), tree,
                                rng, blocked=blocked)
        if path is not None:
            return path
    raise ExplorationComplete("sampling budget exhausted without a frontier")


def explore(sim: Simulation, method: str, rng: np.random.Generator,
            clearance_margin: float = 0.15, max_failures: int = 8):
    """Drive an existing Simulation to termination with a plan-and-follow
    loop for the chosen baseline planner."""
    if method not in ("frontier", "rrt"):
        raise ValueError(f"unknown baseline method {method!r}")
    clearance_cells = int(math.ceil(
        (sim.cfg.robot_radius + clearance_margin) / sim.cfg.resolution))
    failures = 0
    while not sim.done:
        try:
            if method == "frontier":
                path = _plan_frontier_path(sim, clearance_cells)
            else:
                path = _plan_rrt_path(sim, rng, clearance_cells)
        except ExplorationComplete:
            sim.terminate("complete")
            break
        reason = follow_waypoints(sim, _truncate_path(path))
        if reason == "stuck":
            failures += 1
            if failures >= max_failures:
                sim.terminate("abort")
                break
        else:
            failures = 0


def run_baseline_episode(world_map: WorldMap, method: str,
                         cfg=None, seed: int = 0,
                         clearance_margin: float = 0.15) -> EpisodeRecord:
    """Run a full plan-and-follow exploration episode for one baseline."""
    sim = Simulation(world_map, cfg, seed=seed)
    explore(sim, method, np.random.default_rng(seed),
            clearance_margin=clearance_margin)
    return sim.make_record()
