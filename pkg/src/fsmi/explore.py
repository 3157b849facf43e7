"""Synthetic 2-D exploration: worlds, noisy scans, MI surfaces and two planners.

The robot is a point that teleports between cell centres.  It scans with a
ring of beams at every 0.2 m of travel and at the start of each step.  The
information planner scores frontier-adjacent goals by path MI over path
length.  The frontier planner drives to the nearest frontier cluster.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .grid import OccupancyGrid2D, Pose, dda_trace, entropy, new_grid, update_cells
from .mi import _f_args, _fidx, _phi, _phi_args
from .sensor import MiTables, SensorModel, build_tables

MI_ALGOS = ("fsmi", "approx_fsmi", "uniform_fsmi", "csqmi_approx")
PLANNERS = ("frontier",) + tuple("info_" + a for a in MI_ALGOS)

FREE_BELOW = 0.3
UNKNOWN_BAND = 0.05
PATH_STEP = 0.2


class PlanningError(RuntimeError):
    """No reachable goal is left; callers treat this as exploration complete."""


class WorldGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticWorld:
    occupied: np.ndarray = field(repr=False)
    seed: int
    size: float
    resolution: float
    start: Pose

    @property
    def shape(self):
        return self.occupied.shape

    @property
    def width_cells(self) -> int:
        return self.occupied.shape[1]

    @property
    def height_cells(self) -> int:
        return self.occupied.shape[0]


@dataclass(frozen=True)
class Scan:
    pose: Pose
    angles: np.ndarray
    ranges: np.ndarray


@dataclass(frozen=True)
class PlanResult:
    goal: int
    path: np.ndarray
    length: float
    score: float = 0.0
    candidates: int = 1


@dataclass(frozen=True)
class StepRecord:
    step: int
    x: float
    y: float
    goal_x: float
    goal_y: float
    increment_m: float
    path_len_m: float
    entropy_nats: float


@dataclass
class ExplorationLog:
    planner: str
    records: list = field(default_factory=list)
    reason: str = "max_steps"
    mi_beams: int = 0
    mi_ns: int = 0

    @property
    def total_path_m(self) -> float:
        return self.records[-1].path_len_m if self.records else 0.0

    @property
    def final_entropy(self) -> float:
        return self.records[-1].entropy_nats if self.records else float("nan")

    @property
    def us_per_beam(self) -> float:
        return self.mi_ns / self.mi_beams / 1e3 if self.mi_beams else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "x", "y", "goal_x", "goal_y", "path_len_m", "entropy_nats"])
        for r in self.records:
            w.writerow([r.step, f"{r.x:.3f}", f"{r.y:.3f}", f"{r.goal_x:.3f}",
                        f"{r.goal_y:.3f}", f"{r.path_len_m:.4f}", f"{r.entropy_nats:.6f}"])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# worlds

def _free_connected(free: np.ndarray, start) -> bool:
    lab, _ = ndimage.label(free)
    return bool(np.all(lab[free] == lab[start]))


def _split_rooms(rng, occ, res, rooms, keep):
    """Binary space partition: split the largest room with a one-door wall."""
    n = occ.shape[0]
    door = max(2, int(round(1.0 / res)))
    min_side = max(door + 4, int(round(3.0 / res)))
    boxes = [(1, 1, n - 1, n - 1)]          # y0, x0, y1, x1 (exclusive)
    for _ in range(rooms):
        boxes.sort(key=lambda b: (b[2] - b[0]) * (b[3] - b[1]))
        y0, x0, y1, x1 = boxes.pop()
        vertical = (x1 - x0) >= (y1 - y0)
        lo, hi = (x0, x1) if vertical else (y0, y1)
        if hi - lo < 2 * min_side + 1:
            boxes.append((y0, x0, y1, x1))
            break
        pos = int(rng.integers(lo + min_side, hi - min_side))
        a0, a1 = (y0, y1) if vertical else (x0, x1)
        gap = int(rng.integers(a0, a1 - door + 1))
        if vertical:
            occ[y0:y1, pos] = True
            occ[gap:gap + door, pos] = False
            keep[max(gap - 1, 0):gap + door + 1, pos - 2:pos + 3] = True
            boxes += [(y0, x0, y1, pos), (y0, pos + 1, y1, x1)]
        else:
            occ[pos, x0:x1] = True
            occ[pos, gap:gap + door] = False
            keep[pos - 2:pos + 3, max(gap - 1, 0):gap + door + 1] = True
            boxes += [(y0, x0, pos, x1), (pos + 1, x0, y1, x1)]


def _draw_world(rng, n, res, density, rooms):
    occ = np.zeros((n, n), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    keep = np.zeros_like(occ)
    _split_rooms(rng, occ, res, rooms, keep)
    walls = occ.copy()
    # rectangular clutter until the target fraction of cells is covered
    target = density * (n - 2) ** 2
    lo, hi = max(1, int(round(0.3 / res))), max(2, int(round(1.0 / res)))
    covered = 0
    tries = 0
    while covered < target and tries < 10000:
        tries += 1
        h, w = rng.integers(lo, hi + 1, size=2)
        y, x = rng.integers(1, n - 1, size=2)
        if keep[y:y + h, x:x + w].any():
            continue
        block = occ[y:y + h, x:x + w]
        covered += int(np.count_nonzero(~block))
        block[...] = True
    occ |= walls
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    return occ


def generate_world(seed: int, size: float = 18.0, resolution: float = 0.1,
                   obstacle_density: float = 0.04, room_count: int = 2,
                   retries: int = 20) -> SyntheticWorld:
    """Closed arena split into rooms joined by 1 m doors, plus box clutter.

    Free space is checked for connectivity by flood fill; a failed draw is
    retried with the next sub-seed.
    """
    n = int(round(size / resolution))
    if n < 32:
        raise ValueError("size / resolution must give at least 32 x 32 cells")
    if not 0.0 <= obstacle_density < 1.0:
        raise ValueError("obstacle_density must lie in [0, 1)")
    if room_count < 0:
        raise ValueError("room_count must be >= 0")
    c = n // 2
    for attempt in range(retries):
        rng = np.random.default_rng([int(seed), attempt])
        occ = _draw_world(rng, n, resolution, obstacle_density, room_count)
        # keep a clear patch around the start
        occ[c - 2:c + 3, c - 2:c + 3] = False
        free = ~occ
        if _free_connected(free, (c, c)):
            start = Pose((c + 0.5) * resolution, (c + 0.5) * resolution)
            return SyntheticWorld(occ, int(seed), float(size), float(resolution), start)
    raise WorldGenerationError(f"no connected world after {retries} attempts")


# ---------------------------------------------------------------------------
# scanning

def beam_angles(n_beams: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n_beams) / n_beams


@njit(cache=True)
def _cast(occ_flat, W, H, res, x, y, angles, maxr, out):
    cap = int(2 * maxr / res) + 4
    idx = np.empty(cap, dtype=np.int64)
    bnd = np.empty(cap + 1)
    for b in range(angles.shape[0]):
        n = dda_trace(x, y, angles[b], maxr, res, W, H, idx, bnd)
        r = maxr
        for i in range(n):
            if occ_flat[idx[i]]:
                r = min(0.5 * (bnd[i] + bnd[i + 1]), maxr)
                break
        out[b] = r


def simulate_scan(world: SyntheticWorld, pose: Pose, sensor: SensorModel, n_beams: int = 180,
                  rng: np.random.Generator | None = None, noise_seed: int | None = None) -> Scan:
    """True ranges by ray casting, plus N(0, sigma^2) noise on returns.

    A return is centred on the first occupied cell along the beam, which is
    where the MI measurement model places it.  Beams that reach max_range
    without a hit report exactly max_range.
    """
    if n_beams < 1:
        raise ValueError("n_beams must be positive")
    res = world.resolution
    ix, iy = int(pose.x // res), int(pose.y // res)
    if not (0 <= ix < world.width_cells and 0 <= iy < world.height_cells):
        raise ValueError("pose outside world")
    if world.occupied[iy, ix]:
        raise ValueError("pose lies in an occupied cell")
    if rng is None:
        rng = np.random.default_rng(noise_seed)
    ang = beam_angles(n_beams) + pose.theta
    r = np.empty(n_beams)
    _cast(world.occupied.ravel(), world.width_cells, world.height_cells, res,
          pose.x, pose.y, ang, sensor.max_range, r)
    hit = r < sensor.max_range
    noise = rng.normal(0.0, sensor.sigma, n_beams)
    r = np.where(hit, np.clip(r + noise, 0.0, sensor.max_range), r)
    return Scan(pose, ang, r)


@njit(cache=True)
def _integrate(cells, W, H, res, x, y, angles, ranges, maxr, d_occ, d_emp, eps):
    cap = int(2 * maxr / res) + 4
    idx = np.empty(cap, dtype=np.int64)
    bnd = np.empty(cap + 1)
    for b in range(angles.shape[0]):
        n = dda_trace(x, y, angles[b], maxr, res, W, H, idx, bnd)
        update_cells(cells, idx, bnd, n, ranges[b], d_occ, d_emp, eps)


def integrate_scan(grid: OccupancyGrid2D, scan: Scan, sensor: SensorModel) -> OccupancyGrid2D:
    """Inverse-sensor update for every beam of scan (in place)."""
    _integrate(grid.cells, grid.width_cells, grid.height_cells, grid.resolution,
               scan.pose.x, scan.pose.y, scan.angles, scan.ranges, sensor.max_range,
               sensor.delta_occ, sensor.delta_emp, grid.clamp_eps)
    return grid


# ---------------------------------------------------------------------------
# per-beam MI on traced cells (any widths, optional marking)

ALGO_ID = {a: i for i, a in enumerate(MI_ALGOS)}


@njit(cache=True)
def _beam_value(algo, occ, lo, mark, n, bext, cext, C, P, W, fvals, fa, fb,
                tab, pa, pb, D, Hu, sigma):
    # C[k] for k = 1..n with marked cells carrying no information
    nf = fvals.shape[0]
    q = 0.0
    for k in range(n):
        if mark[k]:
            C[k + 1] = q
            continue
        i = _fidx(lo[k], fa, fb, nf)
        C[k + 1] = q + fvals[i]
        q += fvals[nf - 1 - i]
    E = 1.0
    for j in range(n):
        p = E * occ[j]
        P[j + 1] = p
        E -= p
    P[n + 1] = E
    total = 0.0
    if algo == 0 or algo == 1:
        for j in range(1, n + 2):
            mu = cext[j - 1]
            if algo == 0:
                k0, k1 = 1, n
            else:
                k0, k1 = max(1, j - D), min(n, j + D)
            if k0 > k1:
                continue
            prev = _phi(bext[k0 - 1] - mu, tab, pa, pb)
            s = 0.0
            for k in range(k0, k1 + 1):
                cur = _phi(bext[k] - mu, tab, pa, pb)
                s += C[k] * (cur - prev)
                prev = cur
            total += P[j] * s
        return total
    if algo == 2:
        # prefix sums of C reuse W as scratch
        W[0] = 0.0
        for i in range(1, n + 1):
            W[i] = W[i - 1] + C[i]
        for j in range(1, n + 2):
            hi = min(n, j + Hu)
            lo_ = max(0, j - Hu - 1)
            total += P[j] * (W[hi] - W[lo_])
        return total / (2 * Hu + 1)
    # CSQMI: marked cells count as resolved, so they are snapped to a clamp bound
    E = 1.0
    S = 1.0
    for j in range(n):
        o = occ[j]
        if mark[j]:
            o = 1e-4 if o < 0.5 else 1.0 - 1e-4
        p = E * o
        P[j + 1] = p
        E -= p
    P[n + 1] = E
    for l in range(n + 1, 0, -1):
        W[l] = P[l] * P[l] * S
        if l <= n:
            o = occ[l - 1]
            if mark[l - 1]:
                o = 1e-4 if o < 0.5 else 1.0 - 1e-4
            S *= 1.0 - 2.0 * o * (1.0 - o)
    var2 = 2.0 * sigma * sigma
    k0 = 1.0 / math.sqrt(2.0 * math.pi * var2)
    inv = 0.5 / var2
    a = 0.0
    b = 0.0
    c = 0.0
    for j in range(1, n + 2):
        a += W[j]
        sb = 0.0
        sc = 0.0
        for l in range(max(1, j - D), min(n + 1, j + D) + 1):
            d = cext[l - 1] - cext[j - 1]
            kk = k0 * math.exp(-d * d * inv)
            sb += P[l] * kk
            sc += W[l] * kk
        b += P[j] * sb
        c += P[j] * sc
    a *= k0
    return math.log(a) + math.log(S * b) - 2.0 * math.log(c)


@njit(cache=True)
def _poses_mi(cells, Wc, Hc, res, xs, ys, angles, maxr, marks, use_marks, algo,
              fvals, fa, fb, tab, pa, pb, D, Hu, sigma, out):
    """out[p] = MI of a full scan at pose p.  With use_marks, cells seen by
    earlier poses are marked and carry no information for later ones."""
    cap = int(2 * maxr / res) + 4
    idx = np.empty(cap, dtype=np.int64)
    bnd = np.empty(cap + 2)
    occ = np.empty(cap)
    lo = np.empty(cap)
    mk = np.zeros(cap, dtype=np.uint8)
    cext = np.empty(cap + 1)
    C = np.zeros(cap + 2)
    P = np.zeros(cap + 2)
    Wb = np.zeros(cap + 2)
    for p in range(xs.shape[0]):
        tot = 0.0
        for b in range(angles.shape[0]):
            n = dda_trace(xs[p], ys[p], angles[b], maxr, res, Wc, Hc, idx, bnd)
            for i in range(n):
                o = cells[idx[i]]
                occ[i] = o
                lo[i] = math.log(o / (1.0 - o))
                mk[i] = marks[idx[i]] if use_marks else 0
                cext[i] = 0.5 * (bnd[i] + bnd[i + 1])
            bnd[n + 1] = bnd[n] + bnd[n] / n
            cext[n] = 0.5 * (bnd[n] + bnd[n + 1])
            tot += _beam_value(algo, occ, lo, mk, n, bnd, cext, C, P, Wb, fvals, fa, fb,
                               tab, pa, pb, D, Hu, sigma)
        out[p] = tot
        if use_marks:
            for b in range(angles.shape[0]):
                n = dda_trace(xs[p], ys[p], angles[b], maxr, res, Wc, Hc, idx, bnd)
                for i in range(n):
                    marks[idx[i]] = 1


@dataclass(frozen=True)
class MiSettings:
    algorithm: str = "approx_fsmi"
    n_beams: int = 180
    delta: int = 3
    H: int = 0


def _mi_args(grid: OccupancyGrid2D, tables: MiTables, settings: MiSettings):
    if settings.algorithm not in ALGO_ID:
        raise ValueError(f"unknown algorithm {settings.algorithm!r}")
    s = tables.sensor
    fvals, fa, fb = _f_args(tables)
    tab, pa, pb = _phi_args(tables)
    return (fvals, fa, fb, tab, pa, pb, int(settings.delta), int(settings.H), s.sigma)


def poses_information(grid: OccupancyGrid2D, tables: MiTables, xs, ys,
                      settings: MiSettings = MiSettings(), marked: bool = False) -> np.ndarray:
    """MI of a scan at each (x, y).  With marked=True the poses form one path."""
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    out = np.zeros(xs.shape[0])
    marks = np.zeros(grid.cells.shape[0], dtype=np.uint8)
    _poses_mi(grid.cells, grid.width_cells, grid.height_cells, grid.resolution, xs, ys,
              beam_angles(settings.n_beams), tables.sensor.max_range, marks, marked,
              ALGO_ID[settings.algorithm], *_mi_args(grid, tables, settings), out)
    return out


def mi_surface(grid: OccupancyGrid2D, sensor: SensorModel, candidate_poses,
               algorithm: str = "approx_fsmi", n_beams: int = 180,
               tables: MiTables | None = None, delta: int = 3, H: int = 0) -> np.ndarray:
    """Sum of per-beam MI for a scan at each candidate pose (no marking)."""
    if algorithm not in MI_ALGOS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    tables = tables or build_tables(sensor)
    pts = np.array([(p.x, p.y) if isinstance(p, Pose) else tuple(p) for p in candidate_poses],
                   dtype=float).reshape(-1, 2)
    return poses_information(grid, tables, pts[:, 0], pts[:, 1],
                             MiSettings(algorithm, n_beams, delta, H), marked=False)


# ---------------------------------------------------------------------------
# graph search

def traversable(grid: OccupancyGrid2D, free_below: float = FREE_BELOW) -> np.ndarray:
    return grid.as_array() < free_below


def _grid_graph(trav: np.ndarray, res: float) -> csr_matrix:
    """8-connected graph over traversable cells; diagonals need both side cells free."""
    h, w = trav.shape
    ids = np.arange(h * w).reshape(h, w)
    rows, cols, wts = [], [], []
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        ys = slice(0, h - dy)
        yd = slice(dy, h)
        xs = slice(max(0, -dx), w - max(0, dx))
        xd = slice(max(0, dx), w + min(0, dx))
        ok = trav[ys, xs] & trav[yd, xd]
        if dx and dy:
            ok &= trav[ys, xd] & trav[yd, xs]
        a, b = ids[ys, xs][ok], ids[yd, xd][ok]
        c = res * (math.sqrt(2.0) if dx and dy else 1.0)
        rows += [a, b]
        cols += [b, a]
        wts += [np.full(a.size, c)] * 2
    r, c_, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(wts)
    return csr_matrix((v, (r, c_)), shape=(h * w, h * w))


def free_believed(grid: OccupancyGrid2D, band: float = UNKNOWN_BAND) -> np.ndarray:
    """Cells leaning free: below the unknown band."""
    return grid.as_array() < 0.5 - band


_NEIGHBOURS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


def shortest_paths(grid: OccupancyGrid2D, start: int, free_below: float = FREE_BELOW,
                   band: float = UNKNOWN_BAND):
    """Dijkstra distances (m) and predecessors from cell start.

    Paths run over traversable cells.  A free-believed cell that is not yet
    traversable can still end a path, one hop from traversable space.
    """
    trav = traversable(grid, free_below)
    # the robot stands on its start cell whatever the map now says about it
    trav.ravel()[start] = True
    dist, pred = dijkstra(_grid_graph(trav, grid.resolution), indices=start,
                          return_predecessors=True)
    h, w = trav.shape
    d2 = dist.reshape(h, w)
    last = free_believed(grid, band) & ~trav
    best = np.full((h, w), np.inf)
    via = np.full((h, w), -9999, dtype=np.int64)
    ids = np.arange(h * w).reshape(h, w)
    big = np.pad(d2, 1, constant_values=np.inf)
    tp = np.pad(trav, 1, constant_values=False)
    ip = np.pad(ids, 1, constant_values=-1)
    for dy, dx in _NEIGHBOURS:
        nd = big[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        if dx and dy:
            nd = np.where(tp[1 + dy:1 + dy + h, 1:1 + w] & tp[1:1 + h, 1 + dx:1 + dx + w],
                          nd, np.inf)
        cand = nd + grid.resolution * (math.sqrt(2.0) if dx and dy else 1.0)
        better = last & (cand < best)
        best[better] = cand[better]
        via[better] = ip[1 + dy:1 + dy + h, 1 + dx:1 + dx + w][better]
    fill = last & np.isfinite(best)
    dist = dist.copy()
    pred = pred.copy()
    dist[fill.ravel()] = best[fill]
    pred[fill.ravel()] = via[fill]
    return dist, pred


def extract_path(pred: np.ndarray, goal: int) -> np.ndarray:
    out = [goal]
    while pred[out[-1]] >= 0:
        out.append(int(pred[out[-1]]))
    return np.array(out[::-1], dtype=np.int64)


def path_length(grid: OccupancyGrid2D, path) -> float:
    xy = np.array([grid.cell_center(c) for c in path]).reshape(-1, 2)
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T))) if len(xy) > 1 else 0.0


def path_samples(grid: OccupancyGrid2D, path, step: float = PATH_STEP) -> np.ndarray:
    """Points every step metres along the polyline through path cell centres,
    excluding the start and always including the end."""
    xy = np.array([grid.cell_center(c) for c in path]).reshape(-1, 2)
    if len(xy) < 2:
        return xy[-1:].copy()
    seg = np.hypot(*np.diff(xy, axis=0).T)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    s = np.arange(step, total - 1e-9, step)
    s = np.append(s, total)
    return np.column_stack([np.interp(s, cum, xy[:, 0]), np.interp(s, cum, xy[:, 1])])


# ---------------------------------------------------------------------------
# frontiers and planners

def frontier_mask(grid: OccupancyGrid2D, band: float = UNKNOWN_BAND) -> np.ndarray:
    """Free-believed cells with an unknown 4-neighbour."""
    a = grid.as_array()
    unknown = np.abs(a - 0.5) < band
    near = np.zeros_like(unknown)
    near[1:, :] |= unknown[:-1, :]
    near[:-1, :] |= unknown[1:, :]
    near[:, 1:] |= unknown[:, :-1]
    near[:, :-1] |= unknown[:, 1:]
    return (a < 0.5 - band) & near


def frontier_clusters(mask: np.ndarray, min_size: int = 1) -> list[np.ndarray]:
    """8-connected clusters as arrays of flat cell indices, in label order."""
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    flat = lab.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.concatenate(([0], np.cumsum(counts)))
    out = []
    for i in range(1, n + 1):
        cells = order[starts[i]:starts[i + 1]]
        if cells.size >= min_size:
            out.append(np.sort(cells))
    return out


def _centroid_cell(grid: OccupancyGrid2D, cells: np.ndarray, dist: np.ndarray) -> int | None:
    ok = cells[np.isfinite(dist[cells])]
    if ok.size == 0:
        return None
    iy, ix = np.divmod(ok, grid.width_cells)
    d2 = (iy - iy.mean()) ** 2 + (ix - ix.mean()) ** 2
    return int(ok[np.lexsort((ok, d2))[0]])


def _start_cell(grid: OccupancyGrid2D, start) -> int:
    if isinstance(start, Pose):
        return grid.cell_of(start.x, start.y)
    return int(start)


def plan_nearest_frontier(grid: OccupancyGrid2D, start, min_cluster: int = 3,
                          free_below: float = FREE_BELOW, band: float = UNKNOWN_BAND) -> PlanResult:
    """Go to the centroid-nearest reachable cell of the closest frontier cluster."""
    s = _start_cell(grid, start)
    dist, pred = shortest_paths(grid, s, free_below, band)
    best = None
    for cl in frontier_clusters(frontier_mask(grid, band), min_cluster):
        d = dist[cl]
        if not np.any(np.isfinite(d)):
            continue
        key = (float(d.min()), int(cl[0]))
        if best is None or key < best[0]:
            best = (key, cl)
    if best is None:
        raise PlanningError("no reachable frontier")
    goal = _centroid_cell(grid, best[1], dist)
    path = extract_path(pred, goal)
    return PlanResult(goal, path, float(dist[goal]), 0.0, 1)


def candidate_goals(grid: OccupancyGrid2D, dist: np.ndarray, max_candidates: int = 32,
                    min_cluster: int = 3, free_below: float = FREE_BELOW,
                    band: float = UNKNOWN_BAND, reach: float = 1.0,
                    spacing: float = 0.5) -> np.ndarray:
    """Reachable goals on and around the frontier.

    Centroid cells of reachable frontier clusters come first.  The rest are
    reachable free cells within reach metres of a clustered frontier cell,
    taken on a lattice of the given spacing.  With no reachable frontier cluster the
    result is empty, so both planners share one completion test.
    """
    fmask = frontier_mask(grid, band)
    clusters = frontier_clusters(fmask, min_cluster)
    picks = set()
    for cl in clusters:
        c = _centroid_cell(grid, cl, dist)
        if c is not None:
            picks.add(c)
    if not picks:
        return np.zeros(0, dtype=np.int64)
    picks = sorted(picks, key=lambda c: (dist[c], c))[:max_candidates]
    a = grid.as_array()
    seeds = np.zeros_like(fmask)
    for cl in clusters:
        seeds.ravel()[cl] = True
    near = ndimage.distance_transform_edt(~seeds) * grid.resolution <= reach
    stride = max(1, int(round(spacing / grid.resolution)))
    lattice = np.zeros_like(near)
    lattice[::stride, ::stride] = True
    ok = (near & lattice & (a < free_below)).ravel() & np.isfinite(dist)
    rest = np.setdiff1d(np.flatnonzero(ok), picks)
    room = max_candidates - len(picks)
    if room > 0 and rest.size:
        take = np.unique(np.linspace(0, rest.size - 1, min(room, rest.size)).round().astype(int))
        picks += [int(c) for c in rest[take]]
    return np.array(sorted(picks), dtype=np.int64)


def plan_information_path(grid: OccupancyGrid2D, sensor: SensorModel, start,
                          algorithm: str = "approx_fsmi", tables: MiTables | None = None,
                          n_beams: int = 180, delta: int = 3, H: int = 0,
                          max_candidates: int = 32, min_cluster: int = 3,
                          free_below: float = FREE_BELOW, band: float = UNKNOWN_BAND,
                          candidates=None, min_travel: float = 0.5,
                          stats: ExplorationLog | None = None) -> PlanResult:
    """Goal maximising path MI / path length; ties go to the lowest cell index."""
    tables = tables or build_tables(sensor)
    settings = MiSettings(algorithm, n_beams, delta, H)
    s = _start_cell(grid, start)
    dist, pred = shortest_paths(grid, s, free_below, band)
    if candidates is None:
        candidates = candidate_goals(grid, dist, max_candidates, min_cluster, free_below, band)
    else:
        candidates = np.array([c for c in candidates if np.isfinite(dist[c])], dtype=np.int64)
    if candidates.size == 0:
        raise PlanningError("no reachable candidate goals")
    # a goal must be a real move; fall back to near goals only when nothing else is left
    far = candidates[dist[candidates] >= min_travel]
    if far.size:
        candidates = far
    best = None
    for c in np.sort(candidates):
        path = extract_path(pred, int(c))
        pts = path_samples(grid, path)
        t0 = time.perf_counter_ns()
        gain = float(poses_information(grid, tables, pts[:, 0], pts[:, 1], settings, True).sum())
        if stats is not None:
            stats.mi_ns += time.perf_counter_ns() - t0
            stats.mi_beams += len(pts) * n_beams
        length = max(float(dist[c]), grid.resolution)
        ratio = gain / length
        if best is None or ratio > best[0]:
            best = (ratio, int(c), path, float(dist[c]))
    return PlanResult(best[1], best[2], best[3], best[0], int(candidates.size))


# ---------------------------------------------------------------------------
# exploration loop

@dataclass(frozen=True)
class ExploreConfig:
    n_beams: int = 180
    entropy_threshold: float = 0.5
    max_steps: int = 200
    noise_seed: int = 0
    delta: int = 3
    H: int = 0
    max_candidates: int = 32
    min_cluster: int = 3
    free_below: float = FREE_BELOW
    band: float = UNKNOWN_BAND


def _scan_at(world, grid, sensor, x, y, n_beams, rng):
    # motion is idealized: a pose the map wrongly believes free yields no scan
    res = world.resolution
    if world.occupied[int(y // res), int(x // res)]:
        return
    scan = simulate_scan(world, Pose(x, y), sensor, n_beams, rng=rng)
    integrate_scan(grid, scan, sensor)


def run_exploration(world: SyntheticWorld, sensor: SensorModel, planner: str = "frontier",
                    entropy_threshold: float | None = None, max_steps: int | None = None,
                    config: ExploreConfig = ExploreConfig(), tables: MiTables | None = None,
                    snapshot=None) -> ExplorationLog:
    """Scan, update, plan, move; stop when a step gains less than the threshold.

    snapshot(step, grid) is called after every step when given.
    """
    if planner not in PLANNERS:
        raise ValueError(f"unknown planner {planner!r}")
    thr = config.entropy_threshold if entropy_threshold is None else entropy_threshold
    steps = config.max_steps if max_steps is None else max_steps
    if steps < 0:
        raise ValueError("max_steps must be >= 0")
    tables = tables or build_tables(sensor)
    rng = np.random.default_rng([world.seed, config.noise_seed])
    grid = new_grid(world.width_cells, world.height_cells, world.resolution)
    log = ExplorationLog(planner)
    x, y = world.start.x, world.start.y
    total = 0.0
    h = entropy(grid)
    log.records.append(StepRecord(0, x, y, x, y, 0.0, 0.0, h))
    for step in range(1, steps + 1):
        _scan_at(world, grid, sensor, x, y, config.n_beams, rng)
        try:
            if planner == "frontier":
                plan = plan_nearest_frontier(grid, Pose(x, y), config.min_cluster,
                                             config.free_below, config.band)
            else:
                plan = plan_information_path(
                    grid, sensor, Pose(x, y), planner[len("info_"):], tables,
                    config.n_beams, config.delta, config.H, config.max_candidates,
                    config.min_cluster, config.free_below, config.band, stats=log)
        except PlanningError:
            h_new = entropy(grid)
            log.records.append(StepRecord(step, x, y, x, y, 0.0, total, h_new))
            if snapshot is not None:
                snapshot(step, grid)
            log.reason = "complete"
            break
        pts = path_samples(grid, plan.path)
        for px, py in pts[:-1]:
            _scan_at(world, grid, sensor, px, py, config.n_beams, rng)
        gx, gy = grid.cell_center(plan.goal)
        total += plan.length
        h_new = entropy(grid)
        log.records.append(StepRecord(step, x, y, gx, gy, plan.length, total, h_new))
        if snapshot is not None:
            snapshot(step, grid)
        x, y = gx, gy
        if h - h_new < thr:
            log.reason = "converged"
            break
        h = h_new
    return log
