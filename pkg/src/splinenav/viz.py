"""Dependency-free raster output: PPM overlays of cost maps and plans.

Image convention matches the PGM export: columns are x, rows are y with the
top row at max y.
"""

from __future__ import annotations

import numpy as np

from .costmap import CostMap

RED = (220, 40, 40)
GREEN = (40, 180, 60)
ORANGE = (240, 150, 30)
GRAY = (110, 110, 110)


def ppm_bytes(rgb: np.ndarray) -> bytes:
    """P6 binary image from an (H, W, 3) uint8 array."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {rgb.shape}")
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def costmap_background(cm: CostMap) -> np.ndarray:
    """Grayscale background: zero cost is white, the peak cost is black."""
    if cm.dims != 2:
        raise ValueError("overlay rendering is only defined for 2-D cost maps")
    peak = float(cm.grid.max())
    norm = cm.grid / peak if peak > 0 else cm.grid
    gray = np.round(255.0 * (1.0 - norm)).astype(np.uint8)
    image = gray.T[::-1]
    return np.repeat(image[:, :, None], 3, axis=2)


def _to_pixel(cm: CostMap, point) -> tuple[int, int] | None:
    col = int(np.floor(point[0] / cm.cell_size))
    row_up = int(np.floor(point[1] / cm.cell_size))
    nx, ny = cm.grid.shape
    if not (0 <= col < nx and 0 <= row_up < ny):
        return None
    return ny - 1 - row_up, col


def stamp_points(image: np.ndarray, cm: CostMap, points: np.ndarray, color: tuple[int, int, int], size: int = 0) -> None:
    """Paint world-frame points onto the overlay (in place)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    for p in points:
        pix = _to_pixel(cm, p)
        if pix is None:
            continue
        r, c = pix
        lo_r, hi_r = max(0, r - size), min(image.shape[0], r + size + 1)
        lo_c, hi_c = max(0, c - size), min(image.shape[1], c + size + 1)
        image[lo_r:hi_r, lo_c:hi_c] = color


def stamp_polyline(image: np.ndarray, cm: CostMap, points: np.ndarray, color: tuple[int, int, int]) -> None:
    """Paint a world-frame polyline, densified to half-cell resolution."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    step = cm.cell_size / 2.0
    for i in range(len(points) - 1):
        seg = points[i + 1] - points[i]
        seg_len = float(np.linalg.norm(seg))
        count = max(1, int(np.ceil(seg_len / step)))
        samples = points[i] + seg * (np.arange(count + 1) / count)[:, None]
        stamp_points(image, cm, samples, color)


def render_plan_overlay(
    cm: CostMap,
    executed_path: np.ndarray,
    key_points_world: np.ndarray | None,
    goal,
    start,
) -> np.ndarray:
    """Cost map grayscale, trajectory red, key points green, goal orange."""
    image = costmap_background(cm)
    stamp_polyline(image, cm, executed_path, RED)
    if key_points_world is not None and len(key_points_world):
        stamp_points(image, cm, key_points_world, GREEN, size=1)
    stamp_points(image, cm, np.asarray(start, dtype=np.float64), GRAY, size=1)
    stamp_points(image, cm, np.asarray(goal, dtype=np.float64), ORANGE, size=2)
    return image
