"""Report rendering: coverage curves as SVG figures and occupancy maps as
PGM images with the driven trajectory burned in.

SVG output is scrubbed of volatile metadata (dates, hash salts) so repeated
runs of the same experiment produce identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .mapping import FREE, OCCUPIED, OccupancyGrid, PGM_VALUES, UNKNOWN  # noqa: E402

TRAJECTORY_GRAY = 128

plt.rcParams["svg.hashsalt"] = "exploresim"


def world_to_image(grid: OccupancyGrid, x: float, y: float) -> tuple[int, int]:
    """(col, row) pixel of a world point in the exported image (row 0 = top)."""
    row, col = grid.cell_index(x, y)
    return col, grid.ny - 1 - row


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_curves(series, xlabel: str, ylabel: str, path, gid: str = "curve"):
    """Line plot of (x, y, label) triples; each line carries an id in the
    SVG so tests and tools can locate its path data."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for i, (x, y, label) in enumerate(series):
        (line,) = ax.plot(x, y, label=label)
        line.set_gid(f"{gid}-{i}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend(loc="lower right")
    fig.tight_layout()
    _save_svg(fig, path)


def plot_coverage_vs_time(records, path):
    plot_curves([(r.coverage_vs_time()[0], r.coverage_vs_time()[1],
                  f"seed {r.seed}") for r in records],
                "time (s)", "coverage", path, gid="coverage-time")


def plot_coverage_vs_path(records, path):
    plot_curves([(r.coverage_vs_path()[0], r.coverage_vs_path()[1],
                  f"seed {r.seed}") for r in records],
                "path length (m)", "coverage", path, gid="coverage-path")


def grid_image(grid: OccupancyGrid) -> np.ndarray:
    """Gray-level image of the grid in map orientation (row 0 = min y)."""
    img = np.full((grid.ny, grid.nx), PGM_VALUES[int(UNKNOWN)], dtype=np.uint8)
    img[grid.cells == FREE] = PGM_VALUES[int(FREE)]
    img[grid.cells == OCCUPIED] = PGM_VALUES[int(OCCUPIED)]
    return img


def rasterize_polyline(grid: OccupancyGrid, poses) -> list[tuple[int, int]]:
    """Cells (row, col) under the polyline through the given poses."""
    cells = []
    pts = [(p[0], p[1]) for p in poses]
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        n = max(2, int(np.hypot(x1 - x0, y1 - y0) / (grid.resolution * 0.5)) + 1)
        for t in np.linspace(0.0, 1.0, n):
            r, c = grid.cell_index(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
            if grid.in_grid(r, c):
                if not cells or cells[-1] != (r, c):
                    cells.append((r, c))
    if len(pts) == 1:
        r, c = grid.cell_index(*pts[0])
        if grid.in_grid(r, c):
            cells.append((r, c))
    return cells


def write_map_pgm(grid: OccupancyGrid, path, poses=None):
    """P5 occupancy image (254 free / 0 occupied / 205 unknown), trajectory
    drawn at gray 128, plus the map-metadata YAML sidecar."""
    path = Path(path)
    img = grid_image(grid)
    if poses:
        for r, c in rasterize_polyline(grid, poses):
            img[r, c] = TRAJECTORY_GRAY
    header = f"P5\n{grid.nx} {grid.ny}\n255\n".encode("ascii")
    path.write_bytes(header + img[::-1].tobytes())
    path.with_suffix(".yaml").write_text(grid.map_yaml(path.name),
                                         encoding="utf-8")


def read_pgm(path) -> np.ndarray:
    """Parse the P5 files written by write_map_pgm back into an array."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    width, height = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos:pos + width * height],
                         dtype=np.uint8).reshape(height, width)


def render_record(record, grid: OccupancyGrid, out_dir):
    """All report artifacts for one episode: both coverage curves and the
    trajectory map."""
    if record.n_steps == 0:
        raise ValueError("cannot render an empty episode record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot_coverage_vs_time([record], out / "coverage_vs_time.svg")
    plot_coverage_vs_path([record], out / "coverage_vs_path.svg")
    write_map_pgm(grid, out / f"map_seed{record.seed}.pgm", poses=record.poses)
    return out
