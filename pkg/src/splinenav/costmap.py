"""Smoothed distance-to-free cost maps with differentiable multilinear sampling.

The map concentrates cost inside obstacles (each obstacle cell carries its
Euclidean distance to the nearest free cell center); Gaussian smoothing then
spreads that cost outward so trajectories feel a pushing gradient before
contact. Values are non-negative everywhere and exactly zero far from
obstacles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve1d

from . import autodiff as ad
from .autodiff import Tensor
from .world import WorldModel

COSTMAP_FILE_VERSION = 1

# default penalty pushing out-of-bounds samples back toward the workspace
OUT_OF_BOUNDS_SLOPE = 1.0  # cost units per meter


@dataclass(frozen=True)
class CostMap:
    """Dense non-negative cost grid; origin is the center of cell (0, ..., 0)."""

    grid: np.ndarray
    cell_size: float
    origin: np.ndarray
    sigma: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        if (grid < 0).any():
            raise ValueError("cost map values must be non-negative")

    @property
    def dims(self) -> int:
        return self.grid.ndim


def _squared_dt_1d(f: np.ndarray) -> np.ndarray:
    """Lower envelope of parabolas: exact 1-D squared distance transform."""
    n = f.shape[0]
    d = np.empty(n)
    v = np.zeros(n, dtype=int)
    z = np.empty(n + 1)
    z[0], z[1] = -math.inf, math.inf
    k = 0
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = math.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def distance_to_free(occupancy: np.ndarray, cell_size: float) -> np.ndarray:
    """Exact Euclidean distance (meters) from each obstacle cell center to the
    nearest free cell center; free cells map to 0."""
    occ = np.asarray(occupancy, dtype=bool)
    if not (~occ).any():
        raise ValueError("every cell is an obstacle; distance to free is undefined")
    # finite stand-in for +inf keeps the envelope arithmetic exact in float64
    far = 4.0 * float(sum(s * s for s in occ.shape)) + 4.0
    d2 = np.where(occ, far, 0.0)
    for axis in range(occ.ndim):
        d2 = np.apply_along_axis(_squared_dt_1d, axis, d2)
    return np.sqrt(d2) * cell_size


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian, truncated at ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    reach = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-reach, reach + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_smooth(field: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders."""
    kernel = gaussian_kernel(sigma)
    out = np.asarray(field, dtype=np.float64)
    for axis in range(out.ndim):
        out = convolve1d(out, kernel, axis=axis, mode="nearest")
    return out


def build_costmap(world: WorldModel, sigma: float, normalize: bool = True) -> CostMap:
    """distance_to_free -> gaussian_smooth -> (optional) peak normalization.

    Values are rounded through float32 at the end so the raw export format
    round-trips the in-memory grid bit-exactly.
    """
    field = distance_to_free(world.occupancy, world.cell_size)
    smoothed = gaussian_smooth(field, sigma)
    if normalize:
        peak = smoothed.max()
        if peak > 0:
            smoothed = smoothed / peak
    grid = smoothed.astype(np.float32).astype(np.float64)
    origin = np.full(world.dims, 0.5 * world.cell_size)
    return CostMap(grid=grid, cell_size=world.cell_size, origin=origin, sigma=sigma)


# ---------------------------------------------------------------------------
# differentiable sampling


def sample_values_and_grads(cm: CostMap, points: np.ndarray, oob_slope: float = OUT_OF_BOUNDS_SLOPE) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation at (P, d) points with analytic spatial gradient.

    Out-of-bounds coordinates clamp to the border cell and add a linear
    penalty `oob_slope` per meter of overshoot, so the map is total and its
    gradient always points back toward the workspace.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = cm.dims
    shape = np.asarray(cm.grid.shape)
    hi = (shape - 1).astype(np.float64)
    u = (pts - cm.origin) / cm.cell_size
    uc = np.clip(u, 0.0, hi)
    base = np.floor(uc).astype(int)
    base = np.minimum(base, shape - 2)
    base = np.maximum(base, 0)
    frac = uc - base

    values = np.zeros(pts.shape[0])
    grad_frac = np.zeros_like(pts)
    for corner in product((0, 1), repeat=d):
        w = np.where(np.asarray(corner, dtype=bool), frac, 1.0 - frac)  # (P, d)
        cell_values = cm.grid[tuple((base + np.asarray(corner)).T)]
        values += w.prod(axis=1) * cell_values
        for axis in range(d):
            others = np.delete(w, axis, axis=1).prod(axis=1)
            sign = 1.0 if corner[axis] else -1.0
            grad_frac[:, axis] += sign * others * cell_values

    inside = (u >= 0.0) & (u <= hi)  # clamped axes carry no interpolation gradient
    grads = grad_frac * inside / cm.cell_size

    over_hi = np.maximum(u - hi, 0.0)
    over_lo = np.maximum(-u, 0.0)
    values += oob_slope * cm.cell_size * (over_hi + over_lo).sum(axis=1)
    grads += oob_slope * ((u > hi).astype(np.float64) - (u < 0.0).astype(np.float64))
    return values, grads


def sample(cm: CostMap, point) -> float:
    """Cost value at a single position (total function, see sampling docs)."""
    values, _ = sample_values_and_grads(cm, np.asarray(point, dtype=np.float64))
    return float(values[0])


def sample_with_gradient(cm: CostMap, point) -> tuple[float, np.ndarray]:
    values, grads = sample_values_and_grads(cm, np.asarray(point, dtype=np.float64))
    return float(values[0]), grads[0]


def sample_costs(cm: CostMap, points) -> Tensor:
    """Tape-aware batched sampling: (P, d) points -> (P,) costs with exact
    analytic gradients registered for the backward pass."""
    pts = points if isinstance(points, Tensor) else Tensor(points)
    values, grads = sample_values_and_grads(cm, pts.value)
    return ad.custom_op((pts,), values, lambda g: (g[:, None] * grads,))


# ---------------------------------------------------------------------------
# export: PGM preview + JSON sidecar + raw float32 dump (exact round-trip)


def _require_2d(cm: CostMap) -> None:
    if cm.dims != 2:
        raise ValueError("PGM preview is only defined for 2-D cost maps")


def costmap_to_pgm(cm: CostMap) -> tuple[bytes, float]:
    """16-bit P5 image (top row = max y); returns (bytes, scale factor)."""
    _require_2d(cm)
    peak = float(cm.grid.max())
    scale = 65535.0 / peak if peak > 0 else 1.0
    pixels = np.round(cm.grid * scale).astype(">u2")
    image = pixels.T[::-1]  # columns = x, rows = y downward
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode("ascii")
    return header + image.tobytes(), scale


def export_costmap(cm: CostMap, basepath) -> dict:
    """Write <base>.json, <base>.f32 and (2-D only) <base>.pgm; returns sidecar."""
    base = Path(basepath)
    scale = 1.0
    if cm.dims == 2:
        pgm, scale = costmap_to_pgm(cm)
        base.with_suffix(".pgm").write_bytes(pgm)
    sidecar = {
        "version": COSTMAP_FILE_VERSION,
        "cell_size": cm.cell_size,
        "origin": [float(x) for x in cm.origin],
        "sigma": cm.sigma,
        "scale": scale,
        "shape": list(cm.grid.shape),
    }
    base.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8")
    base.with_suffix(".f32").write_bytes(np.ascontiguousarray(cm.grid, dtype="<f4").tobytes())
    return sidecar


def load_costmap(basepath) -> CostMap:
    base = Path(basepath)
    sidecar = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    if sidecar["version"] != COSTMAP_FILE_VERSION:
        raise ValueError(f"unsupported cost-map file version {sidecar['version']}")
    shape = tuple(sidecar["shape"])
    raw = np.frombuffer(base.with_suffix(".f32").read_bytes(), dtype="<f4")
    grid = raw.reshape(shape).astype(np.float64)
    return CostMap(
        grid=grid,
        cell_size=float(sidecar["cell_size"]),
        origin=np.asarray(sidecar["origin"], dtype=np.float64),
        sigma=float(sidecar["sigma"]),
    )
