"""Scene sampling shared by training and evaluation: collision-free poses,
reachable goals in a distance band, and rendered observations.

Reachability uses connected components of the radius-inflated free space, the
same inflation the shortest-path oracle plans over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label

from .costmap import CostMap
from .policy import PolicyConfig
from .world import RangeObservation, RobotState, WorldModel, inflate_occupancy, point_collides, render_scan, robot_from_world

SAMPLE_TRIES = 1000


class SceneSamplingError(RuntimeError):
    """Rejection sampling exhausted its try budget."""


@dataclass(frozen=True)
class WorldBundle:
    """A world plus its pre-built cost map and cached planning structures.

    The cost map is only needed for training; evaluation bundles may omit it
    (deployment never reads the map)."""

    name: str
    world: WorldModel
    costmap: CostMap | None
    radius: float
    blocked: np.ndarray  # occupancy inflated by the robot radius
    components: np.ndarray  # free-space component labels over ~blocked

    @classmethod
    def build(cls, name: str, world: WorldModel, costmap: CostMap | None, radius: float) -> "WorldBundle":
        if costmap is not None and costmap.grid.shape != world.occupancy.shape:
            raise ValueError(f"cost map shape {costmap.grid.shape} != world shape {world.occupancy.shape}")
        blocked = inflate_occupancy(world, radius)
        structure = np.ones((3,) * world.dims, dtype=bool)
        components, _ = label(~blocked, structure=structure)
        return cls(name=name, world=world, costmap=costmap, radius=radius, blocked=blocked, components=components)

    def reachable(self, a, b) -> bool:
        ca = self.world.cell_of(a)
        cb = self.world.cell_of(b)
        if self.blocked[ca] or self.blocked[cb]:
            return False
        return self.components[ca] == self.components[cb]


@dataclass(frozen=True)
class TrainSample:
    world_id: int
    position: np.ndarray
    heading: float
    goal_world: np.ndarray
    goal_robot: np.ndarray
    observation: RangeObservation

    def descriptor(self) -> dict:
        """Replay descriptor for diagnostics."""
        return {
            "world_id": int(self.world_id),
            "position": [float(x) for x in self.position],
            "heading": float(self.heading),
            "goal_world": [float(x) for x in self.goal_world],
        }


def sample_free_pose(bundle: WorldBundle, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Uniform position over cells where the robot fits, uniform heading."""
    candidates = np.argwhere(~bundle.blocked)
    if candidates.shape[0] == 0:
        raise SceneSamplingError(f"world {bundle.name}: no free cell after inflation")
    world = bundle.world
    for _ in range(SAMPLE_TRIES):
        cell = candidates[rng.integers(candidates.shape[0])]
        position = (cell + rng.uniform(0.0, 1.0, size=world.dims)) * world.cell_size
        if not point_collides(world, position, bundle.radius):
            heading = float(rng.uniform(-math.pi, math.pi))
            return position, heading
    raise SceneSamplingError(f"world {bundle.name}: could not sample a collision-free pose")


def _random_direction(rng: np.random.Generator, dims: int) -> np.ndarray:
    if dims == 2:
        angle = rng.uniform(-math.pi, math.pi)
        return np.array([math.cos(angle), math.sin(angle)])
    vec = rng.standard_normal(dims)
    return vec / np.linalg.norm(vec)


def sample_goal(bundle: WorldBundle, rng: np.random.Generator, position: np.ndarray, goal_min: float, goal_max: float) -> np.ndarray:
    """Goal uniform over the distance band, free, and reachable from `position`."""
    world = bundle.world
    bounds = world.bounds
    for _ in range(SAMPLE_TRIES):
        distance = rng.uniform(goal_min, goal_max)
        goal = position + distance * _random_direction(rng, world.dims)
        if (goal <= 0).any() or (goal >= bounds).any():
            continue
        if point_collides(world, goal, bundle.radius):
            continue
        if not bundle.reachable(position, goal):
            continue
        return goal
    raise SceneSamplingError(f"world {bundle.name}: could not sample a reachable goal in [{goal_min}, {goal_max}] m")


def make_sample(bundle: WorldBundle, world_id: int, rng: np.random.Generator, policy_cfg: PolicyConfig, goal_min: float, goal_max: float) -> TrainSample:
    position, heading = sample_free_pose(bundle, rng)
    goal_world = sample_goal(bundle, rng, position, goal_min, goal_max)
    state = RobotState(position=position, heading=heading, radius=bundle.radius)
    obs = render_scan(bundle.world, state, policy_cfg.rays, policy_cfg.fov, policy_cfg.max_range)
    goal_robot = robot_from_world(position, heading, goal_world[None, :])[0]
    return TrainSample(
        world_id=world_id,
        position=position,
        heading=heading,
        goal_world=goal_world,
        goal_robot=goal_robot,
        observation=obs,
    )
