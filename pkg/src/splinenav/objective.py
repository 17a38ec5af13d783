"""Differentiable training objective: obstacle + goal + motion costs on the
cost map, fear BCE loss, and their weighted total.

All terms are non-negative. Trajectory costs carry no gradient into the fear
head and the fear loss carries none into trajectory points; both flow back
into the shared network trunk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .costmap import CostMap, sample_costs
from .spline import Trajectory
from .world import rotation_matrix

# smoothing floor for Euclidean norms: avoids the gradient singularity at 0
NORM_EPS = 1e-6  # meters


@dataclass(frozen=True)
class CostWeights:
    alpha: float = 1.0  # obstacle
    beta: float = 1.0  # goal
    gamma: float = 0.2  # motion smoothness

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("cost weights must be non-negative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("at least one cost weight must be positive")


@dataclass
class LossBreakdown:
    c_obs: float
    c_goal: float
    c_motion: float
    c_total: float
    fear_loss: float
    f_total: float
    fear_label: bool

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _smooth_norm(vec: Tensor) -> Tensor:
    """sqrt(|v|^2 + eps^2) - eps: zero at zero, unit-direction gradient away."""
    sq = ad.tsum(ad.mul(vec, vec))
    return ad.sub(ad.sqrt(ad.add(sq, NORM_EPS * NORM_EPS)), NORM_EPS)


def _row_norms(mat: Tensor) -> Tensor:
    """Per-row sqrt(|v|^2 + eps^2): chord lengths stay differentiable at zero
    length (the untrained policy emits all-zero chords) while the bias on a
    chord of length l is only eps^2/(2l), so segment arc lengths stay exact to
    ~1e-10 at trajectory scale."""
    sq = ad.tsum(ad.mul(mat, mat), axis=1)
    return ad.sqrt(ad.add(sq, NORM_EPS * NORM_EPS))


def to_world_frame(traj: Trajectory, position, heading: float) -> Tensor:
    """Rotate/translate robot-frame trajectory points into the map frame."""
    d = traj.dims
    rot = rotation_matrix(heading, d)
    pts = traj.points if isinstance(traj.points, Tensor) else Tensor(traj.points)
    return ad.add(ad.matmul(pts, Tensor(rot.T)), Tensor(np.asarray(position, dtype=np.float64)))


def obstacle_cost(traj: Trajectory, cm: CostMap, position, heading: float) -> Tensor:
    """Sum of cost-map samples over all m*n+1 trajectory points."""
    world_points = to_world_frame(traj, position, heading)
    return ad.tsum(sample_costs(cm, world_points))


def goal_cost(traj: Trajectory, goal) -> Tensor:
    """Euclidean distance from the final trajectory point to the goal (robot frame)."""
    pts = traj.points if isinstance(traj.points, Tensor) else Tensor(traj.points)
    count = traj.values.shape[0]
    final = ad.reshape(ad.narrow(pts, count - 1, count, axis=0), (traj.dims,))
    return _smooth_norm(ad.sub(final, Tensor(np.asarray(goal, dtype=np.float64))))


def motion_cost(traj: Trajectory, robot_position, goal) -> Tensor:
    """Sum over the n-1 intervals between predicted key points of
    | E(robot, goal)/(n-1) - arc length of the interval along the trajectory |.

    Arc length is the polyline length of the spline samples inside the
    interval, so equal-time interpolation is rewarded for equal-length
    intervals and the straight-line robot-goal distance regulates total length.
    """
    n, m = traj.n, traj.m
    if n < 2:
        raise ValueError("motion cost needs at least 2 key points")
    pts = traj.points if isinstance(traj.points, Tensor) else Tensor(traj.points)
    count = traj.values.shape[0]
    diffs = ad.sub(ad.narrow(pts, 1, count, axis=0), ad.narrow(pts, 0, count - 1, axis=0))
    chord = _row_norms(diffs)  # (m*n,)
    target = float(np.linalg.norm(np.asarray(goal, dtype=np.float64) - np.asarray(robot_position, dtype=np.float64))) / (n - 1)
    terms = []
    for i in range(n - 1):
        seg = ad.tsum(ad.narrow(chord, (i + 1) * m, (i + 2) * m, axis=0))
        terms.append(ad.reshape(ad.absval(ad.sub(seg, target)), (1,)))
    return ad.tsum(ad.concat(terms, axis=0))


def fear_loss(fear_logit: Tensor, label: bool) -> Tensor:
    """Binary cross entropy on the collision probability, in logit space."""
    z = ad.reshape(fear_logit, ())
    return ad.softplus(ad.mul(z, -1.0)) if label else ad.softplus(z)


def total_loss(
    traj: Trajectory,
    goal,
    position,
    heading: float,
    cm: CostMap,
    weights: CostWeights,
    fear_logit: Tensor,
    fear_label: bool,
) -> tuple[Tensor, LossBreakdown]:
    """F = alpha*C_obs + beta*C_goal + gamma*C_motion + fear BCE.

    Returns the scalar loss tensor (the single backward root) and a float
    breakdown for logging.
    """
    c_obs = obstacle_cost(traj, cm, position, heading)
    c_goal = goal_cost(traj, goal)
    c_motion = motion_cost(traj, robot_position=np.zeros(traj.dims), goal=goal)
    c_total = ad.add(ad.add(ad.mul(c_obs, weights.alpha), ad.mul(c_goal, weights.beta)), ad.mul(c_motion, weights.gamma))
    fear = fear_loss(fear_logit, fear_label)
    f_total = ad.add(c_total, fear)
    breakdown = LossBreakdown(
        c_obs=float(c_obs.value),
        c_goal=float(c_goal.value),
        c_motion=float(c_motion.value),
        c_total=float(c_total.value),
        fear_loss=float(fear.value),
        f_total=float(f_total.value),
        fear_label=bool(fear_label),
    )
    return f_total, breakdown


def mean_breakdown(items: list[LossBreakdown]) -> dict:
    """Field-wise mean of per-sample breakdowns (fear_label -> collision rate)."""
    if not items:
        raise ValueError("no breakdowns to average")
    out = {}
    for key in ("c_obs", "c_goal", "c_motion", "c_total", "fear_loss", "f_total"):
        out[key] = float(np.mean([getattr(b, key) for b in items]))
    out["collision_rate"] = float(np.mean([b.fear_label for b in items]))
    return out


# analytic reference: BCE at probability 0.5 equals ln 2
LN2 = math.log(2.0)
