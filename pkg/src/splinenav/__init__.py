"""splinenav: a self-supervised local path planner.

An ego-centric range scan and a goal are mapped by a small network to a
key-point path, densified by a natural cubic spline into a smooth trajectory.
Training backpropagates a differentiable trajectory cost, evaluated on a
pre-built smoothed distance cost map, through the spline and the network; no
labels or demonstrations are needed. A fear head predicts collision
probability and gates execution.
"""

__version__ = "0.1.0"

from .costmap import CostMap, build_costmap, distance_to_free, gaussian_smooth, sample
from .objective import CostWeights, LossBreakdown, total_loss
from .policy import PolicyConfig, PolicyParams, forward, init
from .spline import KeyPointPath, Trajectory, interpolate
from .trainer import TrainConfig, fit
from .world import RangeObservation, RobotState, WorldModel, collides, render_scan, shortest_path_length
from .worldgen import WorldGenConfig, generate_world

__all__ = [
    "CostMap",
    "CostWeights",
    "KeyPointPath",
    "LossBreakdown",
    "PolicyConfig",
    "PolicyParams",
    "RangeObservation",
    "RobotState",
    "TrainConfig",
    "Trajectory",
    "WorldGenConfig",
    "WorldModel",
    "build_costmap",
    "collides",
    "distance_to_free",
    "fit",
    "forward",
    "gaussian_smooth",
    "generate_world",
    "init",
    "interpolate",
    "render_scan",
    "sample",
    "shortest_path_length",
    "total_loss",
    "__version__",
]
