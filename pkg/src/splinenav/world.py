"""Grid-world model: occupancy, ego-centric range sensing, ground-truth
collision checks, and a Dijkstra shortest-path oracle.

Conventions: cell (i, j[, k]) spans [i*c, (i+1)*c) x ... in meters, axis order
matches coordinate order, and the workspace origin sits at the grid corner.
The boundary ring of cells is always occupied, so the workspace is closed.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

WORLD_FILE_VERSION = 1


class InfeasibleQuery(ValueError):
    """Start or goal violates a feasibility precondition."""


@dataclass(frozen=True)
class WorldModel:
    """Immutable occupancy world; True cells are obstacles."""

    cell_size: float
    occupancy: np.ndarray  # bool, shape = cells per axis
    seed: int

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if not self._boundary_closed():
            raise ValueError("boundary cells must all be obstacles")
        if not (~occ).any():
            raise ValueError("world has no free cell")

    def _boundary_closed(self) -> bool:
        occ = self.occupancy
        for axis in range(occ.ndim):
            first = np.take(occ, 0, axis=axis)
            last = np.take(occ, occ.shape[axis] - 1, axis=axis)
            if not (first.all() and last.all()):
                return False
        return True

    @property
    def dims(self) -> int:
        return self.occupancy.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.occupancy.shape

    @property
    def bounds(self) -> np.ndarray:
        """Axis-aligned extent in meters (origin at zero)."""
        return np.asarray(self.shape, dtype=np.float64) * self.cell_size

    def cell_of(self, position) -> tuple[int, ...]:
        p = np.asarray(position, dtype=np.float64)
        idx = np.floor(p / self.cell_size).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def cell_center(self, cell) -> np.ndarray:
        return (np.asarray(cell, dtype=np.float64) + 0.5) * self.cell_size

    def is_free_position(self, position) -> bool:
        return not bool(self.occupancy[self.cell_of(position)])

    def free_cell_indices(self) -> np.ndarray:
        """(k, dims) integer array of free cells."""
        return np.argwhere(~self.occupancy)


@dataclass(frozen=True)
class RobotState:
    """Pose and collision radius; heading is yaw about the z axis."""

    position: np.ndarray
    heading: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        if self.radius <= 0:
            raise ValueError("robot radius must be positive")


@dataclass(frozen=True)
class RangeObservation:
    """W ray distances across a field of view centered on the heading."""

    ranges: np.ndarray
    fov: float
    max_range: float

    def __post_init__(self):
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=np.float64))


# ---------------------------------------------------------------------------
# frames


def rotation_matrix(heading: float, dims: int) -> np.ndarray:
    """World-from-robot rotation (yaw about z; identity on extra axes)."""
    c, s = math.cos(heading), math.sin(heading)
    rot = np.eye(dims)
    rot[0, 0], rot[0, 1] = c, -s
    rot[1, 0], rot[1, 1] = s, c
    return rot


def world_from_robot(position, heading: float, points: np.ndarray) -> np.ndarray:
    rot = rotation_matrix(heading, len(position))
    return np.asarray(points, dtype=np.float64) @ rot.T + np.asarray(position, dtype=np.float64)


def robot_from_world(position, heading: float, points: np.ndarray) -> np.ndarray:
    rot = rotation_matrix(heading, len(position))
    return (np.asarray(points, dtype=np.float64) - np.asarray(position, dtype=np.float64)) @ rot


# ---------------------------------------------------------------------------
# sensing


def ray_range(world: WorldModel, origin: np.ndarray, direction: np.ndarray, max_range: float) -> float:
    """Exact grid traversal: distance to the first obstacle-cell boundary."""
    c = world.cell_size
    shape = world.shape
    cell = list(world.cell_of(origin))
    step = [0] * world.dims
    t_max = [math.inf] * world.dims
    t_delta = [math.inf] * world.dims
    for ax in range(world.dims):
        d = direction[ax]
        if d > 0:
            step[ax] = 1
            t_max[ax] = ((cell[ax] + 1) * c - origin[ax]) / d
            t_delta[ax] = c / d
        elif d < 0:
            step[ax] = -1
            t_max[ax] = (cell[ax] * c - origin[ax]) / d
            t_delta[ax] = -c / d
    while True:
        ax = min(range(world.dims), key=lambda a: t_max[a])
        t = t_max[ax]
        if t >= max_range:
            return max_range
        cell[ax] += step[ax]
        if not (0 <= cell[ax] < shape[ax]):
            return max_range  # left the grid (cannot happen with a closed boundary)
        if world.occupancy[tuple(cell)]:
            return t
        t_max[ax] += t_delta[ax]


def render_scan(world: WorldModel, state: RobotState, rays: int, fov: float, max_range: float) -> RangeObservation:
    """Cast `rays` beams at heading + fov*(i/(rays-1) - 1/2), in the horizontal plane."""
    if not world.is_free_position(state.position):
        raise InfeasibleQuery(f"scan origin {state.position} is inside an obstacle")
    ranges = np.empty(rays)
    for i in range(rays):
        angle = state.heading + fov * (i / (rays - 1) - 0.5) if rays > 1 else state.heading
        direction = np.zeros(world.dims)
        direction[0] = math.cos(angle)
        direction[1] = math.sin(angle)
        ranges[i] = ray_range(world, state.position, direction, max_range)
    return RangeObservation(ranges=ranges, fov=fov, max_range=max_range)


# ---------------------------------------------------------------------------
# ground-truth collision


def obstacle_clearance(world: WorldModel, point, search_radius: float) -> float:
    """Distance from a point to the nearest obstacle-cell region, exact within
    `search_radius` (returns inf if no obstacle is that close)."""
    p = np.asarray(point, dtype=np.float64)
    c = world.cell_size
    lo = np.floor((p - search_radius) / c).astype(int)
    hi = np.floor((p + search_radius) / c).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(world.shape) - 1)
    best = math.inf
    for cell in product(*[range(lo[a], hi[a] + 1) for a in range(world.dims)]):
        if not world.occupancy[cell]:
            continue
        box_lo = np.asarray(cell, dtype=np.float64) * c
        gap = np.maximum(np.maximum(box_lo - p, p - (box_lo + c)), 0.0)
        dist = float(np.linalg.norm(gap))
        if dist < best:
            best = dist
    return best


def point_collides(world: WorldModel, point, radius: float) -> bool:
    """True iff the point lies within `radius` of any obstacle-cell region."""
    if world.occupancy[world.cell_of(point)]:
        return True
    return obstacle_clearance(world, point, radius + world.cell_size) <= radius


def collides(world: WorldModel, points, radius: float) -> bool:
    """Ground-truth collision of a polyline of points against occupancy.

    `points` may be a Trajectory or an (N, dims) array in world frame. This
    is the fear-label source; it never consults the smoothed cost map.
    """
    values = getattr(points, "values", points)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    return any(point_collides(world, p, radius) for p in values)


# ---------------------------------------------------------------------------
# shortest-path oracle


def _inflation_offsets(dims: int, radius: float, cell_size: float) -> np.ndarray:
    """Boolean stamp of cell offsets whose box lies within `radius` of a cell center."""
    reach = int(math.ceil(radius / cell_size)) + 1
    size = 2 * reach + 1
    stamp = np.zeros((size,) * dims, dtype=bool)
    for off in product(range(-reach, reach + 1), repeat=dims):
        per_axis = [max(abs(o) - 0.5, 0.0) * cell_size for o in off]
        if math.sqrt(sum(a * a for a in per_axis)) <= radius:
            stamp[tuple(o + reach for o in off)] = True
    return stamp


def inflate_occupancy(world: WorldModel, radius: float) -> np.ndarray:
    """Cells where a disc robot of `radius` centered at the cell center collides."""
    from scipy.ndimage import binary_dilation

    stamp = _inflation_offsets(world.dims, radius, world.cell_size)
    return binary_dilation(world.occupancy, structure=stamp)


def _neighbor_moves(dims: int) -> list[tuple[tuple[int, ...], float]]:
    moves = []
    for off in product((-1, 0, 1), repeat=dims):
        if all(o == 0 for o in off):
            continue
        moves.append((off, math.sqrt(sum(o * o for o in off))))
    return moves


def shortest_path_length(world: WorldModel, start, goal, radius: float) -> float:
    """Length in meters of the shortest 8-/26-connected grid path over the
    radius-inflated occupancy; math.inf when the goal is unreachable."""
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if np.array_equal(start, goal):
        return 0.0
    blocked = inflate_occupancy(world, radius)
    s = world.cell_of(start)
    g = world.cell_of(goal)
    if blocked[s]:
        raise InfeasibleQuery(f"start {start} infeasible after inflation by {radius}")
    if blocked[g]:
        raise InfeasibleQuery(f"goal {goal} infeasible after inflation by {radius}")
    if s == g:
        return 0.0
    moves = _neighbor_moves(world.dims)
    shape = world.shape
    dist = np.full(shape, np.inf)
    dist[s] = 0.0
    heap = [(0.0, s)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell == g:
            return d * world.cell_size
        if d > dist[cell]:
            continue
        for off, cost in moves:
            nxt = tuple(cell[a] + off[a] for a in range(world.dims))
            if any(not (0 <= nxt[a] < shape[a]) for a in range(world.dims)):
                continue
            if blocked[nxt]:
                continue
            nd = d + cost
            if nd < dist[nxt]:
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return math.inf


# ---------------------------------------------------------------------------
# world file I/O: single JSON document, occupancy as row-major RLE bit runs


def _rle_encode(flat: np.ndarray) -> str:
    tokens = []
    run_val = bool(flat[0])
    run_len = 0
    for v in flat:
        if bool(v) == run_val:
            run_len += 1
        else:
            tokens.append(f"{int(run_val)}x{run_len}")
            run_val = bool(v)
            run_len = 1
    tokens.append(f"{int(run_val)}x{run_len}")
    return ",".join(tokens)


def _rle_decode(text: str, size: int) -> np.ndarray:
    out = np.empty(size, dtype=bool)
    pos = 0
    for token in text.split(","):
        val, count = token.split("x")
        count = int(count)
        out[pos : pos + count] = bool(int(val))
        pos += count
    if pos != size:
        raise ValueError(f"RLE stream has {pos} cells, expected {size}")
    return out


def world_to_json(world: WorldModel) -> str:
    doc = {
        "version": WORLD_FILE_VERSION,
        "dims": world.dims,
        "cell_size": world.cell_size,
        "bounds": [float(b) for b in world.bounds],
        "seed": world.seed,
        "occupancy": _rle_encode(world.occupancy.ravel(order="C")),
    }
    return json.dumps(doc, sort_keys=True)


def world_from_json(text: str) -> WorldModel:
    doc = json.loads(text)
    if doc["version"] != WORLD_FILE_VERSION:
        raise ValueError(f"unsupported world file version {doc['version']}")
    cell_size = float(doc["cell_size"])
    shape = tuple(round(b / cell_size) for b in doc["bounds"])
    if len(shape) != doc["dims"]:
        raise ValueError("bounds and dims disagree")
    occ = _rle_decode(doc["occupancy"], int(np.prod(shape))).reshape(shape, order="C")
    return WorldModel(cell_size=cell_size, occupancy=occ, seed=int(doc["seed"]))


def save_world(world: WorldModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(world_to_json(world))
        fh.write("\n")


def load_world(path) -> WorldModel:
    with open(path, "r", encoding="utf-8") as fh:
        return world_from_json(fh.read())
