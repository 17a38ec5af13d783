"""Procedural training/evaluation worlds: rooms, corridors, forest scatter.

Each family is a pure function of (seed, config); identical inputs give
bit-identical occupancy grids. 3-D worlds extrude the 2-D layout along z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import WorldModel

FAMILIES = ("rooms", "corridors", "forest-scatter")
_FAMILY_IDS = {name: i for i, name in enumerate(FAMILIES)}


class WorldGenError(ValueError):
    """Configuration cannot produce a usable world."""


@dataclass(frozen=True)
class WorldGenConfig:
    cells: tuple[int, ...] = (64, 64)  # per axis, each >= 16
    cell_size: float = 0.1
    # forest-scatter: obstacle discs per square meter of interior, disc radii in meters
    scatter_density: float = 0.3
    scatter_radius: tuple[float, float] = (0.1, 0.35)
    # rooms: BSP recursion floor (cells) and doorway width (cells);
    # doors must clear the inflated robot (diameter + 2 cells at the defaults)
    room_min_size: int = 12
    door_width: int = 6
    # corridors: passage width (cells) on the carving lattice
    corridor_width: int = 6

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if any(c < 16 for c in self.cells):
            raise WorldGenError(f"need >= 16 cells per axis, got {self.cells}")
        if len(self.cells) not in (2, 3):
            raise WorldGenError("only 2-D and 3-D worlds are supported")

    @property
    def dims(self) -> int:
        return len(self.cells)


def _boundary_ring(occ: np.ndarray) -> None:
    for axis in range(occ.ndim):
        idx = [slice(None)] * occ.ndim
        idx[axis] = 0
        occ[tuple(idx)] = True
        idx[axis] = occ.shape[axis] - 1
        occ[tuple(idx)] = True


def _gen_forest(rng: np.random.Generator, config: WorldGenConfig) -> np.ndarray:
    nx, ny = config.cells[0], config.cells[1]
    occ2d = np.zeros((nx, ny), dtype=bool)
    c = config.cell_size
    interior_area = (nx - 2) * (ny - 2) * c * c
    count = max(1, round(config.scatter_density * interior_area))
    xs = (np.arange(nx) + 0.5) * c
    ys = (np.arange(ny) + 0.5) * c
    for _ in range(count):
        center = rng.uniform([c, c], [(nx - 1) * c, (ny - 1) * c])
        radius = rng.uniform(*config.scatter_radius)
        dx = xs[:, None] - center[0]
        dy = ys[None, :] - center[1]
        occ2d |= dx * dx + dy * dy <= radius * radius
    return occ2d


def _split_rooms(rng: np.random.Generator, occ2d: np.ndarray, x0: int, x1: int, y0: int, y1: int, config: WorldGenConfig) -> None:
    """Recursive binary partition of [x0,x1) x [y0,y1) with doored walls."""
    w, h = x1 - x0, y1 - y0
    min_side = config.room_min_size
    can_split_x = w >= 2 * min_side + 1
    can_split_y = h >= 2 * min_side + 1
    if not can_split_x and not can_split_y:
        return
    if can_split_x and (not can_split_y or rng.random() < w / (w + h)):
        sx = int(rng.integers(x0 + min_side, x1 - min_side))
        occ2d[sx, y0:y1] = True
        door = int(rng.integers(y0, y1 - config.door_width + 1))
        occ2d[sx, door : door + config.door_width] = False
        _split_rooms(rng, occ2d, x0, sx, y0, y1, config)
        _split_rooms(rng, occ2d, sx + 1, x1, y0, y1, config)
    else:
        sy = int(rng.integers(y0 + min_side, y1 - min_side))
        occ2d[x0:x1, sy] = True
        door = int(rng.integers(x0, x1 - config.door_width + 1))
        occ2d[door : door + config.door_width, sy] = False
        _split_rooms(rng, occ2d, x0, x1, y0, sy, config)
        _split_rooms(rng, occ2d, x0, x1, sy + 1, y1, config)


def _gen_rooms(rng: np.random.Generator, config: WorldGenConfig) -> np.ndarray:
    nx, ny = config.cells[0], config.cells[1]
    occ2d = np.zeros((nx, ny), dtype=bool)
    _split_rooms(rng, occ2d, 1, nx - 1, 1, ny - 1, config)
    return occ2d


def _gen_corridors(rng: np.random.Generator, config: WorldGenConfig) -> np.ndarray:
    """Depth-first maze on a coarse lattice, carved out of solid rock."""
    nx, ny = config.cells[0], config.cells[1]
    w = config.corridor_width
    pitch = w + 1  # passage plus one wall cell
    gx = max(2, (nx - 2) // pitch)
    gy = max(2, (ny - 2) // pitch)
    occ2d = np.ones((nx, ny), dtype=bool)

    def carve_node(ix: int, iy: int) -> None:
        x = 1 + ix * pitch
        y = 1 + iy * pitch
        occ2d[x : x + w, y : y + w] = False

    def carve_link(a: tuple[int, int], b: tuple[int, int]) -> None:
        ax, ay = 1 + a[0] * pitch, 1 + a[1] * pitch
        bx, by = 1 + b[0] * pitch, 1 + b[1] * pitch
        x0, x1 = min(ax, bx), max(ax, bx)
        y0, y1 = min(ay, by), max(ay, by)
        occ2d[x0 : x1 + w, y0 : y1 + w] = False

    visited = np.zeros((gx, gy), dtype=bool)
    stack = [(0, 0)]
    visited[0, 0] = True
    carve_node(0, 0)
    while stack:
        node = stack[-1]
        options = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx_, ny_ = node[0] + dx, node[1] + dy
            if 0 <= nx_ < gx and 0 <= ny_ < gy and not visited[nx_, ny_]:
                options.append((nx_, ny_))
        if not options:
            stack.pop()
            continue
        nxt = options[rng.integers(len(options))]
        visited[nxt] = True
        carve_link(node, nxt)
        stack.append(nxt)
    # a few extra links so the maze is not a tree (gives alternative routes)
    extras = max(1, (gx * gy) // 6)
    for _ in range(extras):
        ix = int(rng.integers(0, gx - 1))
        iy = int(rng.integers(0, gy))
        if rng.random() < 0.5:
            carve_link((ix, iy), (ix + 1, iy))
        else:
            iy = int(rng.integers(0, gy - 1))
            carve_link((ix, iy), (ix, iy + 1))
    return occ2d


def _largest_free_component(occ: np.ndarray) -> int:
    from scipy.ndimage import label

    structure = np.ones((3,) * occ.ndim, dtype=bool)
    labels, count = label(~occ, structure=structure)
    if count == 0:
        return 0
    return int(np.bincount(labels.ravel())[1:].max())


def generate_world(family: str, seed: int, config: WorldGenConfig) -> WorldModel:
    """Build a deterministic world; raises WorldGenError if no usable free
    start/goal pair survives the obstacle layout."""
    if family not in _FAMILY_IDS:
        raise WorldGenError(f"unknown family {family!r}, expected one of {FAMILIES}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), _FAMILY_IDS[family])))
    if family == "forest-scatter":
        occ2d = _gen_forest(rng, config)
    elif family == "rooms":
        occ2d = _gen_rooms(rng, config)
    else:
        occ2d = _gen_corridors(rng, config)

    if config.dims == 3:
        occ = np.repeat(occ2d[:, :, None], config.cells[2], axis=2)
    else:
        occ = occ2d
    _boundary_ring(occ)

    if _largest_free_component(occ) < 2:
        raise WorldGenError(f"family={family} seed={seed}: no free start/goal pair left")
    return WorldModel(cell_size=config.cell_size, occupancy=occ, seed=seed)
