"""Occupancy grid storage, DDA ray tracing, Bayesian updates and map entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .sensor import CLAMP_EPS, SensorModel


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0


@dataclass
class OccupancyGrid2D:
    """Row-major grid of occupancy probabilities, cell (ix, iy) at iy * width + ix."""

    width_cells: int
    height_cells: int
    resolution: float
    cells: np.ndarray = field(repr=False)
    clamp_eps: float = CLAMP_EPS

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.shape != (self.width_cells * self.height_cells,):
            raise ValueError("cells length must equal width_cells * height_cells")
        np.clip(self.cells, self.clamp_eps, 1.0 - self.clamp_eps, out=self.cells)

    @property
    def shape(self):
        return self.height_cells, self.width_cells

    def as_array(self) -> np.ndarray:
        """(height, width) view; row iy holds cells with y index iy."""
        return self.cells.reshape(self.height_cells, self.width_cells)

    def copy(self) -> "OccupancyGrid2D":
        return OccupancyGrid2D(self.width_cells, self.height_cells, self.resolution,
                               self.cells.copy(), self.clamp_eps)

    def contains(self, x: float, y: float) -> bool:
        return (0.0 <= x < self.width_cells * self.resolution
                and 0.0 <= y < self.height_cells * self.resolution)

    def cell_of(self, x: float, y: float) -> int:
        if not self.contains(x, y):
            raise ValueError(f"point ({x}, {y}) outside grid")
        ix = int(math.floor(x / self.resolution))
        iy = int(math.floor(y / self.resolution))
        return iy * self.width_cells + ix

    def cell_center(self, idx: int) -> tuple[float, float]:
        iy, ix = divmod(int(idx), self.width_cells)
        return (ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution


def new_grid(width_cells: int, height_cells: int, resolution: float,
             prior: float = 0.5, clamp_eps: float = CLAMP_EPS) -> OccupancyGrid2D:
    if width_cells < 1 or height_cells < 1:
        raise ValueError("grid dimensions must be positive")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if not 0.0 < prior < 1.0:
        raise ValueError("prior must lie in (0, 1)")
    cells = np.full(width_cells * height_cells, float(prior))
    return OccupancyGrid2D(width_cells, height_cells, float(resolution), cells, clamp_eps)


# ---------------------------------------------------------------------------
# ray tracing

@dataclass(frozen=True)
class RayTrace:
    cell_indices: np.ndarray
    boundaries: np.ndarray
    occupancies: np.ndarray

    @property
    def n(self) -> int:
        return len(self.cell_indices)


@njit(cache=True)
def dda_trace(x0, y0, angle, max_range, res, width, height, out_idx, out_bounds):
    """Grid traversal from (x0, y0); fills out_idx / out_bounds, returns cell count.

    out_bounds[0] = 0 and out_bounds[i + 1] is the exit distance of cell i.
    The last boundary is max_range or the distance to the grid edge.
    """
    dx = math.cos(angle)
    dy = math.sin(angle)
    if abs(dx) < 1e-15:
        dx = 0.0
    if abs(dy) < 1e-15:
        dy = 0.0
    ix = int(math.floor(x0 / res))
    iy = int(math.floor(y0 / res))
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tie = 1e-12 * res
    out_bounds[0] = 0.0
    n = 0
    cap = out_idx.shape[0]
    while n < cap:
        out_idx[n] = iy * width + ix
        if dx != 0.0:
            tx = ((ix + (1 if dx > 0 else 0)) * res - x0) / dx
        else:
            tx = np.inf
        if dy != 0.0:
            ty = ((iy + (1 if dy > 0 else 0)) * res - y0) / dy
        else:
            ty = np.inf
        t = min(tx, ty)
        if t >= max_range:
            out_bounds[n + 1] = max_range
            return n + 1
        if t > out_bounds[n]:
            out_bounds[n + 1] = t
            n += 1
        # else: the origin sits on a grid line facing away from its cell; the
        # zero-length cell is dropped and the slot reused for the next one
        if abs(tx - ty) <= tie:
            ix += sx
            iy += sy
        elif tx < ty:
            ix += sx
        else:
            iy += sy
        if ix < 0 or iy < 0 or ix >= width or iy >= height:
            return n
    return n


def ray_trace(grid: OccupancyGrid2D, origin: Pose, angle: float, max_range: float) -> RayTrace:
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    if not grid.contains(origin.x, origin.y):
        raise ValueError("origin outside grid")
    cap = int(2 * max_range / grid.resolution) + 4
    idx = np.empty(cap, dtype=np.int64)
    bnd = np.empty(cap + 1)
    n = dda_trace(origin.x, origin.y, angle, max_range, grid.resolution,
                  grid.width_cells, grid.height_cells, idx, bnd)
    idx = idx[:n].copy()
    return RayTrace(idx, bnd[:n + 1].copy(), grid.cells[idx].copy())


# ---------------------------------------------------------------------------
# Bayesian update

@njit(cache=True)
def update_cells(cells, idx, bounds, n, z, delta_occ, delta_emp, eps):
    """Odds update along one traced beam with measured range z (in place)."""
    for i in range(n):
        if bounds[i + 1] <= z:
            d = delta_emp
        elif bounds[i] <= z:
            d = delta_occ
        else:
            break
        c = idx[i]
        o = cells[c]
        r = o / (1.0 - o) * d
        o = r / (1.0 + r)
        if o < eps:
            o = eps
        elif o > 1.0 - eps:
            o = 1.0 - eps
        cells[c] = o


def bayes_update(grid: OccupancyGrid2D, ray: RayTrace, measured_range: float,
                 sensor: SensorModel) -> OccupancyGrid2D:
    """Apply the inverse sensor model for one beam; mutates and returns grid."""
    if measured_range < 0:
        raise ValueError("measured range must be non-negative")
    if measured_range > sensor.max_range:
        raise ValueError("measured range exceeds max_range")
    update_cells(grid.cells, ray.cell_indices, ray.boundaries, ray.n, float(measured_range),
                 sensor.delta_occ, sensor.delta_emp, grid.clamp_eps)
    return grid


def cell_entropy(o):
    o = np.asarray(o, dtype=float)
    return -(o * np.log(o) + (1.0 - o) * np.log1p(-o))


def entropy(grid: OccupancyGrid2D) -> float:
    """Map entropy in nats."""
    return float(np.sum(cell_entropy(grid.cells)))


# ---------------------------------------------------------------------------
# PGM I/O

def write_pgm(path, values: np.ndarray) -> None:
    """Write a 2-D array of values in [0, 1] as 8-bit binary PGM (row 0 first)."""
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array")
    img = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def save_grid_pgm(path, grid: OccupancyGrid2D) -> None:
    write_pgm(path, grid.as_array())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM into floats in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    pix = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    if pix.size != w * h:
        raise ValueError("truncated PGM data")
    return pix.reshape(h, w).astype(float) / maxval


def load_grid_pgm(path, resolution: float, clamp_eps: float = CLAMP_EPS) -> OccupancyGrid2D:
    a = read_pgm(path)
    h, w = a.shape
    return OccupancyGrid2D(w, h, float(resolution), a.ravel().copy(), clamp_eps)
