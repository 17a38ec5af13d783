"""Natural cubic spline interpolation of a key-point path into a dense trajectory.

The map from key points to trajectory samples is linear: control points are
[frame origin, K_0 ... K_{n-1}] at unit-spaced knots, knot second derivatives
solve the natural-boundary tridiagonal system, and every sample is an affine
combination of control points. The whole map is realized as one constant
sampling matrix, so trajectory gradients w.r.t. key points are exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class KeyPointPath:
    """n predicted waypoints in the robot frame; the origin is not included."""

    points: Tensor | np.ndarray  # (n, d)

    @property
    def values(self) -> np.ndarray:
        return self.points.value if isinstance(self.points, Tensor) else np.asarray(self.points, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """Dense spline samples: m*n + 1 points, key points at indices j*m."""

    points: Tensor | np.ndarray  # (m*n + 1, d)
    n: int
    m: int

    @property
    def values(self) -> np.ndarray:
        return self.points.value if isinstance(self.points, Tensor) else np.asarray(self.points, dtype=np.float64)

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def segment_index(self) -> np.ndarray:
        """Key-point interval each sample belongs to (last sample -> n-1)."""
        idx = np.arange(self.m * self.n + 1) // self.m
        return np.minimum(idx, self.n - 1)

    @property
    def knot_times(self) -> np.ndarray:
        return np.arange(self.m * self.n + 1) / self.m


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Thomas algorithm for a tridiagonal system; rhs may be (k,) or (k, d).

    lower[i] multiplies x[i-1] in row i (lower[0] unused); upper[i]
    multiplies x[i+1] in row i (upper[-1] unused).
    """
    k = diag.shape[0]
    if rhs.shape[0] != k:
        raise ValueError(f"rhs rows {rhs.shape[0]} != system size {k}")
    c = np.zeros(k)
    d = np.array(rhs, dtype=np.float64)
    c[0] = upper[0] / diag[0]
    d[0] = d[0] / diag[0]
    for i in range(1, k):
        denom = diag[i] - lower[i] * c[i - 1]
        if i < k - 1:
            c[i] = upper[i] / denom
        d[i] = (d[i] - lower[i] * d[i - 1]) / denom
    for i in range(k - 2, -1, -1):
        d[i] = d[i] - c[i] * d[i + 1]
    return d


@lru_cache(maxsize=32)
def second_derivative_matrix(n: int) -> np.ndarray:
    """(n+1, n+1) matrix W with M = W @ P for control points P at unit knots.

    Rows 0 and n are structurally zero (natural boundary conditions); inner
    rows solve M_{j-1} + 4 M_j + M_{j+1} = 6 (P_{j+1} - 2 P_j + P_{j-1}).
    """
    if n < 1:
        raise ValueError("need at least one segment")
    w = np.zeros((n + 1, n + 1))
    if n >= 2:
        k = n - 1
        rhs = np.zeros((k, n + 1))
        for j in range(1, n):
            rhs[j - 1, j - 1] += 6.0
            rhs[j - 1, j] += -12.0
            rhs[j - 1, j + 1] += 6.0
        lower = np.ones(k)
        diag = np.full(k, 4.0)
        upper = np.ones(k)
        w[1:n] = solve_tridiagonal(lower, diag, upper, rhs)
    # natural boundary: zero curvature at both ends, asserted structurally
    assert np.all(w[0] == 0.0) and np.all(w[n] == 0.0)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def basis_matrix(n: int, m: int) -> np.ndarray:
    """(m*n + 1, n+1) matrix S mapping control points to trajectory samples."""
    if m < 1:
        raise ValueError("need at least one sample per segment")
    w = second_derivative_matrix(n)
    s_mat = np.zeros((m * n + 1, n + 1))
    for j in range(n):
        for k in range(m):
            s = k / m
            u = 1.0 - s
            row = j * m + k
            s_mat[row, j] += u
            s_mat[row, j + 1] += s
            s_mat[row] += (u**3 - u) / 6.0 * w[j]
            s_mat[row] += (s**3 - s) / 6.0 * w[j + 1]
    s_mat[m * n, n] = 1.0
    s_mat.setflags(write=False)
    return s_mat


def second_derivatives(path: KeyPointPath) -> np.ndarray:
    """Knot second derivatives M for the spline through [origin, K]."""
    k = path.values
    control = np.vstack([np.zeros((1, k.shape[1])), k])
    return second_derivative_matrix(k.shape[0]) @ control


def interpolate(path: KeyPointPath, m: int) -> Trajectory:
    """Sample the natural cubic spline through [origin, K] at t = j + k/m.

    If `path.points` is a tracked Tensor the result is tracked too, with
    exact gradients (the map is a constant matrix product).
    """
    n = path.n
    if n < 2:
        raise ValueError(f"need at least 2 key points, got {n}")
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    values = path.values
    if not np.all(np.isfinite(values)):
        raise ValueError("key points contain non-finite coordinates")
    s_mat = basis_matrix(n, m)
    d = values.shape[1]
    if isinstance(path.points, Tensor) and path.points.tape is not None:
        control = ad.concat([np.zeros((1, d)), path.points], axis=0)
        samples = ad.matmul(Tensor(s_mat), control)
    else:
        samples = s_mat @ np.vstack([np.zeros((1, d)), values])
    return Trajectory(points=samples, n=n, m=m)


def jacobian_check(path: KeyPointPath, m: int, seed: int = 0, h: float = 1e-6) -> dict:
    """Compare tape gradients of a random linear probe of tau against finite
    differences over the key points; returns the worst deviations."""
    rng = np.random.default_rng(seed)
    base = path.values
    n, d = base.shape
    coeff = rng.standard_normal((m * n + 1, d))

    def probe(k_flat: np.ndarray) -> float:
        traj = interpolate(KeyPointPath(k_flat.reshape(n, d)), m)
        return float(np.sum(coeff * traj.values))

    tape = ad.Tape()
    k_leaf = tape.leaf(base)
    traj = interpolate(KeyPointPath(k_leaf), m)
    root = ad.tsum(ad.mul(traj.points, coeff))
    tape.backward(root)
    analytic = k_leaf.grad.ravel()

    flat = base.ravel().copy()
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[i] += h
        lo[i] -= h
        fd[i] = (probe(hi) - probe(lo)) / (2.0 * h)
    abs_dev = np.abs(analytic - fd)
    scale = np.maximum(np.abs(fd), 1.0)
    return {
        "max_abs_deviation": float(abs_dev.max()),
        "max_rel_deviation": float((abs_dev / scale).max()),
        "checked": int(flat.size),
    }


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV with columns (index, t, x, y[, z], segment)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    coords = ["x", "y", "z"][: traj.dims]
    writer.writerow(["index", "t", *coords, "segment"])
    values = traj.values
    times = traj.knot_times
    segs = traj.segment_index
    for i in range(values.shape[0]):
        writer.writerow([i, repr(float(times[i])), *[repr(float(c)) for c in values[i]], int(segs[i])])
    return buf.getvalue()
