"""Scene sampling: pose feasibility, goal bands, distance uniformity."""

import numpy as np
import pytest

from splinenav.costmap import build_costmap
from splinenav.scenes import SceneSamplingError, WorldBundle, make_sample, sample_free_pose, sample_goal
from splinenav.policy import PolicyConfig
from splinenav.world import WorldModel, point_collides
from splinenav.worldgen import WorldGenConfig, generate_world

POLICY = PolicyConfig(rays=16, key_points=3, conv_window=3, conv_stride=2, conv_channels=(4, 4), embed_dim=16, goal_embed_dim=4, trunk_dim=12, max_range=5.0)


def _bundle(family="forest-scatter", seed=0, cells=(32, 32)) -> WorldBundle:
    world = generate_world(family, seed, WorldGenConfig(cells=cells))
    return WorldBundle.build(name=f"{family}-{seed}", world=world, costmap=build_costmap(world, sigma=2.0), radius=0.15)


def _empty_bundle(cells=96, cell_size=0.1) -> WorldBundle:
    occ = np.ones((cells, cells), dtype=bool)
    occ[1:-1, 1:-1] = False
    world = WorldModel(cell_size=cell_size, occupancy=occ, seed=0)
    return WorldBundle.build(name="empty", world=world, costmap=None, radius=0.15)


def test_sampled_poses_are_collision_free():
    bundle = _bundle()
    rng = np.random.default_rng(0)
    for _ in range(200):
        position, heading = sample_free_pose(bundle, rng)
        assert not point_collides(bundle.world, position, bundle.radius)
        assert -np.pi <= heading <= np.pi


def test_goals_respect_band_and_reachability():
    bundle = _bundle("rooms", seed=1)
    rng = np.random.default_rng(1)
    for _ in range(100):
        position, _ = sample_free_pose(bundle, rng)
        goal = sample_goal(bundle, rng, position, goal_min=0.8, goal_max=2.0)
        dist = float(np.linalg.norm(goal - position))
        assert 0.8 <= dist <= 2.0
        assert bundle.reachable(position, goal)
        assert not point_collides(bundle.world, goal, bundle.radius)


def test_goal_distance_histogram_is_uniform():
    # in an empty world no rejection distorts the proposal distribution, so
    # distances over the band are uniform within 3-sigma multinomial bounds
    bundle = _empty_bundle()
    rng = np.random.default_rng(7)
    center = np.array([4.8, 4.8])
    dmin, dmax = 1.0, 3.0
    n, bins = 10_000, 10
    distances = []
    for _ in range(n):
        goal = sample_goal(bundle, rng, center, dmin, dmax)
        distances.append(float(np.linalg.norm(goal - center)))
    counts, _ = np.histogram(distances, bins=bins, range=(dmin, dmax))
    expected = n / bins
    sigma = np.sqrt(n * (1 / bins) * (1 - 1 / bins))
    assert np.all(np.abs(counts - expected) <= 3.0 * sigma), counts


def test_make_sample_is_deterministic_and_consistent():
    bundle = _bundle()
    a = make_sample(bundle, 0, np.random.default_rng(9), POLICY, 0.8, 2.0)
    b = make_sample(bundle, 0, np.random.default_rng(9), POLICY, 0.8, 2.0)
    assert a.position.tobytes() == b.position.tobytes()
    assert a.observation.ranges.tobytes() == b.observation.ranges.tobytes()
    assert a.goal_robot.tobytes() == b.goal_robot.tobytes()
    # the robot-frame goal maps back to the world-frame goal
    from splinenav.world import world_from_robot

    back = world_from_robot(a.position, a.heading, a.goal_robot[None, :])[0]
    np.testing.assert_allclose(back, a.goal_world, atol=1e-12)


def test_impossible_band_raises_with_world_name():
    bundle = _bundle()
    rng = np.random.default_rng(3)
    position, _ = sample_free_pose(bundle, rng)
    with pytest.raises(SceneSamplingError, match="forest-scatter-0"):
        sample_goal(bundle, rng, position, goal_min=50.0, goal_max=60.0)
