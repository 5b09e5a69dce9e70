"""Occupancy-grid belief map and coverage accounting.

Cells hold one of three states. A scan is rasterized in polar form: every
cell whose center falls inside a beam's swept wedge and within its measured
range becomes Free, and each beam that hit something marks the cell behind
the hit point Occupied. Using wedge coverage (nearest beam by angle) instead
of per-beam line traversal means a full revolution classifies the entire
sensing disc, with no unmarked slivers between adjacent beams far from the
robot.

Cells never return to Unknown; re-observation may flip Free and Occupied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensor import LidarScan
from .world import WorldMap

UNKNOWN = np.uint8(0)
FREE = np.uint8(1)
OCCUPIED = np.uint8(2)

DEFAULT_RESOLUTION = 0.05

# PGM gray levels of the de-facto occupancy map file convention
PGM_VALUES = {int(UNKNOWN): 205, int(FREE): 254, int(OCCUPIED): 0}


@dataclass
class CoverageReport:
    c_t: float            # fraction of reachable free space sensed so far
    delta_c: float        # m^2 newly classified this step
    c_dot: float          # m^2/s expansion rate (delta_c / dt)
    completeness: float   # equals c_t under this coverage definition


class OccupancyGrid:
    """Belief map aligned to a world's bounds.

    known_cells / known_free_cells are maintained incrementally and always
    match a full recount of the cell array.
    """

    def __init__(self, world: WorldMap, resolution: float = DEFAULT_RESOLUTION):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.origin = (world.bounds[0], world.bounds[1])
        self.nx = max(1, int(math.ceil(world.width / resolution - 1e-9)))
        self.ny = max(1, int(math.ceil(world.height / resolution - 1e-9)))
        self.cells = np.full((self.ny, self.nx), UNKNOWN, dtype=np.uint8)
        self.known_cells = 0
        self.known_free_cells = 0

    def copy(self) -> "OccupancyGrid":
        dup = object.__new__(OccupancyGrid)
        dup.resolution = self.resolution
        dup.origin = self.origin
        dup.nx, dup.ny = self.nx, self.ny
        dup.cells = self.cells.copy()
        dup.known_cells = self.known_cells
        dup.known_free_cells = self.known_free_cells
        return dup

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing world point (x, y)."""
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def in_grid(self, row: int, col: int) -> bool:
        return 0 <= row < self.ny and 0 <= col < self.nx

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray):
        cx = self.origin[0] + (cols + 0.5) * self.resolution
        cy = self.origin[1] + (rows + 0.5) * self.resolution
        return cx, cy

    def endpoint_cells(self, pose, scan: LidarScan):
        """For each beam: (hit, row, col) of the cell just past the hit point.

        hit is False for beams clamped at max range (no terminal cell).
        The endpoint is nudged a hair along the beam so the selected cell
        sits on the obstacle side of the surface.
        """
        x, y, theta = pose
        angles = theta + np.arange(scan.num_beams) * (2.0 * np.pi / scan.num_beams)
        hit = scan.ranges < scan.max_range - 1e-9
        ex = x + (scan.ranges + 1e-6) * np.cos(angles)
        ey = y + (scan.ranges + 1e-6) * np.sin(angles)
        cols = np.floor((ex - self.origin[0]) / self.resolution).astype(int)
        rows = np.floor((ey - self.origin[1]) / self.resolution).astype(int)
        inside = (rows >= 0) & (rows < self.ny) & (cols >= 0) & (cols < self.nx)
        return hit & inside, rows, cols

    def integrate_scan(self, pose, scan: LidarScan) -> float:
        """Fold one scan into the grid; returns delta_c in m^2.

        delta_c counts cells that left the Unknown state during this call,
        scaled by the cell area.
        """
        x, y, theta = pose
        res = self.resolution
        reach = scan.max_range + res

        r0 = max(0, int((y - reach - self.origin[1]) / res))
        r1 = min(self.ny, int((y + reach - self.origin[1]) / res) + 1)
        c0 = max(0, int((x - reach - self.origin[0]) / res))
        c1 = min(self.nx, int((x + reach - self.origin[0]) / res) + 1)
        if r0 >= r1 or c0 >= c1:
            return 0.0

        window = self.cells[r0:r1, c0:c1]
        before = window.copy()

        rows = np.arange(r0, r1)
        cols = np.arange(c0, c1)
        cy = self.origin[1] + (rows + 0.5) * res
        cx = self.origin[0] + (cols + 0.5) * res
        dy = (cy - y)[:, None]
        dx = (cx - x)[None, :]
        dist = np.hypot(dx, dy)

        beam_step = 2.0 * np.pi / scan.num_beams
        beam = np.round((np.arctan2(dy, dx) - theta) / beam_step).astype(int)
        beam %= scan.num_beams
        # a cell is freed only when its own beam and both angular neighbors
        # reach past it; a lone grazing beam next to an obstacle limb must
        # not wipe the surface cells the hitting beam painted
        see_through = np.minimum(scan.ranges,
                                 np.minimum(np.roll(scan.ranges, 1),
                                            np.roll(scan.ranges, -1)))
        free = dist <= see_through[beam] + 1e-12
        window[free] = FREE

        hit, hrows, hcols = self.endpoint_cells(pose, scan)
        self.cells[hrows[hit], hcols[hit]] = OCCUPIED

        after = self.cells[r0:r1, c0:c1]
        newly_known = int(np.count_nonzero((before == UNKNOWN) & (after != UNKNOWN)))
        self.known_cells += newly_known
        self.known_free_cells += int(np.count_nonzero(after == FREE)) \
            - int(np.count_nonzero(before == FREE))
        return newly_known * res * res

    def to_pgm_bytes(self) -> bytes:
        """Binary P5 image of the grid (row 0 of the image = top = max y)."""
        img = np.full((self.ny, self.nx), PGM_VALUES[int(UNKNOWN)], dtype=np.uint8)
        img[self.cells == FREE] = PGM_VALUES[int(FREE)]
        img[self.cells == OCCUPIED] = PGM_VALUES[int(OCCUPIED)]
        header = f"P5\n{self.nx} {self.ny}\n255\n".encode("ascii")
        return header + img[::-1].tobytes()

    def map_yaml(self, image_name: str) -> str:
        ox, oy = self.origin
        return (f"image: {image_name}\n"
                f"resolution: {self.resolution}\n"
                f"origin: [{ox}, {oy}, 0.0]\n"
                "negate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n")


class GroundTruth:
    """Rasterized true map of a world plus the reachable-free-cell set.

    The coverage denominator is the set of free cells flood-connected
    (4-neighborhood) to the start cell, so sealed voids cannot make full
    coverage unattainable.
    """

    def __init__(self, world: WorldMap, resolution: float, start_xy):
        grid = OccupancyGrid(world, resolution)
        rows = np.arange(grid.ny)
        cols = np.arange(grid.nx)
        cy = grid.origin[1] + (rows + 0.5) * resolution
        cx = grid.origin[0] + (cols + 0.5) * resolution

        blocked = np.zeros((grid.ny, grid.nx), dtype=bool)
        for ccx, ccy, r in world.circles:
            blocked |= (cx[None, :] - ccx) ** 2 + (cy[:, None] - ccy) ** 2 < r * r
        for x1, y1, x2, y2 in world.segments:
            n = max(2, int(math.hypot(x2 - x1, y2 - y1) / (resolution * 0.25)) + 1)
            ts = np.linspace(0.0, 1.0, n)
            px, py = x1 + ts * (x2 - x1), y1 + ts * (y2 - y1)
            cc = np.clip(((px - grid.origin[0]) / resolution).astype(int), 0, grid.nx - 1)
            rr = np.clip(((py - grid.origin[1]) / resolution).astype(int), 0, grid.ny - 1)
            blocked[rr, cc] = True

        self.resolution = float(resolution)
        self.blocked = blocked
        self.reachable = _flood_fill(~blocked, grid.cell_index(*start_xy[:2]))
        self.reachable_free_cells = int(np.count_nonzero(self.reachable))
        if self.reachable_free_cells == 0:
            raise ValueError("start pose is inside an obstacle cell")

    def coverage_of(self, grid: OccupancyGrid) -> float:
        sensed = (grid.cells != UNKNOWN) & self.reachable
        return float(np.count_nonzero(sensed)) / self.reachable_free_cells


def _flood_fill(open_mask: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    ny, nx = open_mask.shape
    seen = np.zeros_like(open_mask, dtype=bool)
    sr, sc = seed
    if not (0 <= sr < ny and 0 <= sc < nx) or not open_mask[sr, sc]:
        return seen
    stack = [(sr, sc)]
    seen[sr, sc] = True
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < ny and 0 <= nc < nx and open_mask[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return seen


def coverage(grid: OccupancyGrid, truth: GroundTruth, delta_c: float = 0.0,
             dt: float = 1.0) -> CoverageReport:
    """Coverage ratio of the reachable free space, with this step's expansion."""
    c = truth.coverage_of(grid)
    return CoverageReport(c_t=c, delta_c=delta_c, c_dot=delta_c / dt,
                          completeness=c)
