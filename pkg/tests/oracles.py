"""Independent oracles for the test suite.

Everything here is deliberately naive (brute force, dense solves, fine-step
sampling, finite differences) and shares no code with the implementation
paths it checks.
"""

from __future__ import annotations

import heapq
import math
from itertools import product

import numpy as np


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function over a flat copy of x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        hi = flat.copy()
        lo = flat.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (f(hi.reshape(x.shape)) - f(lo.reshape(x.shape))) / (2.0 * h)
    return grad.reshape(x.shape)


def brute_force_distance_to_free(occupancy: np.ndarray, cell_size: float) -> np.ndarray:
    """All-pairs nearest-free search; exact integer squared distances."""
    occ = np.asarray(occupancy, dtype=bool)
    free = np.argwhere(~occ)
    out = np.zeros(occ.shape)
    for cell in np.argwhere(occ):
        d2 = ((free - cell) ** 2).sum(axis=1).min()
        out[tuple(cell)] = math.sqrt(float(d2)) * cell_size
    return out


def dense_natural_spline(control: np.ndarray, m: int) -> np.ndarray:
    """Textbook natural cubic spline through `control` at unit knots, solved
    with a dense linear system; sampled at t = j + k/m plus the endpoint."""
    control = np.asarray(control, dtype=np.float64)
    n_knots = control.shape[0]
    n = n_knots - 1
    a = np.zeros((n_knots, n_knots))
    rhs = np.zeros_like(control)
    a[0, 0] = 1.0
    a[-1, -1] = 1.0
    for j in range(1, n):
        a[j, j - 1] = 1.0
        a[j, j] = 4.0
        a[j, j + 1] = 1.0
        rhs[j] = 6.0 * (control[j + 1] - 2.0 * control[j] + control[j - 1])
    second = np.linalg.solve(a, rhs)

    samples = []
    for j in range(n):
        for k in range(m):
            s = k / m
            u = 1.0 - s
            value = (
                second[j] * u**3 / 6.0
                + second[j + 1] * s**3 / 6.0
                + (control[j] - second[j] / 6.0) * u
                + (control[j + 1] - second[j + 1] / 6.0) * s
            )
            samples.append(value)
    samples.append(control[-1])
    return np.asarray(samples)


def dijkstra_adjacency(blocked: np.ndarray, start: tuple, goal: tuple, cell_size: float) -> float:
    """Second Dijkstra, written against an explicit adjacency list."""
    shape = blocked.shape
    dims = blocked.ndim
    offsets = [o for o in product((-1, 0, 1), repeat=dims) if any(o)]

    def neighbors(cell):
        for off in offsets:
            nxt = tuple(c + o for c, o in zip(cell, off))
            if all(0 <= nxt[a] < shape[a] for a in range(dims)) and not blocked[nxt]:
                yield nxt, math.sqrt(sum(o * o for o in off))

    adjacency = {}
    for cell in map(tuple, np.argwhere(~blocked)):
        adjacency[cell] = list(neighbors(cell))

    dist = {start: 0.0}
    heap = [(0.0, start)]
    seen = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in seen:
            continue
        seen.add(cell)
        if cell == goal:
            return d * cell_size
        for nxt, cost in adjacency.get(cell, ()):
            nd = d + cost
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return math.inf


def fine_step_ray(occupancy: np.ndarray, cell_size: float, origin, angle: float, max_range: float, step: float) -> float:
    """Fixed-step ray sampler: first sample inside an obstacle cell, bisected
    down to `step` accuracy."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.array([math.cos(angle), math.sin(angle)])
    shape = occupancy.shape

    def hit(t: float) -> bool:
        p = origin + t * direction
        cell = tuple(min(max(int(math.floor(p[a] / cell_size)), 0), shape[a] - 1) for a in range(2))
        return bool(occupancy[cell])

    t = 0.0
    while t < max_range:
        if hit(t):
            lo, hi = max(0.0, t - step), t
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if hit(mid):
                    hi = mid
                else:
                    lo = mid
            return hi
        t += step
    return max_range


def point_to_box_distance_sampled(point, box_lo, box_hi, samples: int = 200) -> float:
    """Min distance from a point to a dense sample grid of an axis-aligned box."""
    point = np.asarray(point, dtype=np.float64)
    axes = [np.linspace(lo, hi, samples) for lo, hi in zip(box_lo, box_hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return float(np.sqrt(((pts - point) ** 2).sum(axis=1)).min())
