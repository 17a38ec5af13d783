"""Closed-loop evaluation: receding-horizon rollouts with fear gating, SPL,
planning latency, and localization-noise robustness.

Rollouts re-plan at every step, execute a short lookahead along the planned
spline, and refuse to move while the predicted collision probability is at or
above 0.5 (a debounced stop ends the episode). All failures are outcomes,
never exceptions.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import policy as policy_mod
from .policy import PolicyParams
from .scenes import WorldBundle, make_sample, sample_free_pose, sample_goal
from .spline import interpolate
from .world import RobotState, WorldModel, point_collides, render_scan, robot_from_world, shortest_path_length, world_from_robot

OUTCOMES = ("success", "collision", "timeout", "feared-stop")


@dataclass(frozen=True)
class NoiseModel:
    """Per-step zero-mean Gaussian translation noise on the pose used for the
    goal-frame transform only; sigma=0 reproduces the noiseless run bit-exactly."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")


@dataclass(frozen=True)
class RolloutConfig:
    spline_m: int = 8
    lookahead: float = 0.5  # meters executed per re-plan
    goal_radius: float = 0.3
    fear_threshold: float = 0.5
    fear_debounce: int = 3  # consecutive fearful plans before stopping
    robot_radius: float = 0.15
    step_cap_factor: float = 4.0  # cap = factor * oracle_length / lookahead
    min_step_cap: int = 25


@dataclass
class Episode:
    world_id: str
    start: np.ndarray
    start_heading: float
    goal: np.ndarray
    outcome: str
    executed_path: np.ndarray  # (K, d) world-frame polyline
    executed_length: float  # p_i
    oracle_length: float  # l_i
    steps: int
    latencies_ms: list[float] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def spl_term(self) -> float:
        if not self.success:
            return 0.0
        if self.oracle_length == 0.0:
            return 1.0
        return self.oracle_length / max(self.executed_length, self.oracle_length)


def _walk_polyline(points: np.ndarray, distance: float) -> tuple[np.ndarray, np.ndarray | None, float, np.ndarray]:
    """Advance `distance` meters along a polyline from its first vertex.

    Returns (end point, tangent direction or None, arc length walked,
    swept vertices including the end point)."""
    swept = [points[0]]
    walked = 0.0
    tangent = None
    for i in range(len(points) - 1):
        seg = points[i + 1] - points[i]
        seg_len = float(np.linalg.norm(seg))
        if seg_len <= 1e-12:
            continue
        direction = seg / seg_len
        remaining = distance - walked
        if seg_len >= remaining:
            end = points[i] + direction * remaining
            swept.append(end)
            return end, direction, distance, np.asarray(swept)
        walked += seg_len
        tangent = direction
        swept.append(points[i + 1])
    return np.asarray(swept[-1]), tangent, walked, np.asarray(swept)


def _sweep_collides(world: WorldModel, swept: np.ndarray, radius: float) -> bool:
    """Collision along a swept polyline, densified to half-cell resolution."""
    step = world.cell_size / 2.0
    for i in range(len(swept) - 1):
        seg = swept[i + 1] - swept[i]
        seg_len = float(np.linalg.norm(seg))
        count = max(1, int(math.ceil(seg_len / step)))
        for k in range(1, count + 1):
            if point_collides(world, swept[i] + seg * (k / count), radius):
                return True
    return point_collides(world, swept[0], radius)


def rollout(
    params: PolicyParams,
    world: WorldModel,
    start,
    goal,
    config: RolloutConfig,
    noise: NoiseModel = NoiseModel(),
    rng: np.random.Generator | None = None,
    start_heading: float | None = None,
    world_id: str = "world",
    world_at_step: Callable[[int], WorldModel] | None = None,
) -> Episode:
    """Closed-loop episode; `world_at_step` optionally supplies a per-step
    world (scripted dynamic scenes); the oracle length uses the base world."""
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if start_heading is None:
        delta = goal - start
        start_heading = math.atan2(delta[1], delta[0])
    if noise.sigma > 0 and rng is None:
        raise ValueError("a noise model with sigma > 0 needs an rng")

    oracle = shortest_path_length(world, start, goal, config.robot_radius)
    if math.isfinite(oracle):
        step_cap = max(config.min_step_cap, int(math.ceil(config.step_cap_factor * oracle / config.lookahead)))
    else:
        step_cap = config.min_step_cap * 8

    cfg = params.config
    position = start.copy()
    heading = float(start_heading)
    path = [position.copy()]
    executed = 0.0
    latencies: list[float] = []
    fear_streak = 0
    outcome = "timeout"
    steps = 0

    for step_idx in range(step_cap):
        active_world = world_at_step(step_idx) if world_at_step is not None else world
        if float(np.linalg.norm(position - goal)) <= config.goal_radius:
            outcome = "success"
            break
        if point_collides(active_world, position, config.robot_radius):
            outcome = "collision"  # e.g. a scripted obstacle moved onto the robot
            break
        state = RobotState(position=position, heading=heading, radius=config.robot_radius)
        obs = render_scan(active_world, state, cfg.rays, cfg.fov, cfg.max_range)
        pose_for_goal = position
        if noise.sigma > 0:
            pose_for_goal = position + noise.sigma * rng.standard_normal(world.dims)
        goal_robot = robot_from_world(pose_for_goal, heading, goal[None, :])[0]

        t0 = time.perf_counter()
        out = policy_mod.forward(params, obs, goal_robot, tape=None)
        traj = interpolate(out.path, config.spline_m)
        latencies.append((time.perf_counter() - t0) * 1e3)
        steps += 1

        if out.fear_probability >= config.fear_threshold:
            fear_streak += 1
            if fear_streak >= config.fear_debounce:
                outcome = "feared-stop"
                break
            continue  # hold position while fearful
        fear_streak = 0

        world_traj = world_from_robot(position, heading, traj.values)
        new_pos, tangent, walked, swept = _walk_polyline(world_traj, config.lookahead)
        if walked <= 1e-9:
            continue  # degenerate plan; hold position (ends in timeout)
        if _sweep_collides(active_world, swept, config.robot_radius):
            position = new_pos
            path.append(position.copy())
            executed += walked
            outcome = "collision"
            break
        position = new_pos
        if tangent is not None:
            heading = math.atan2(tangent[1], tangent[0])
        path.append(position.copy())
        executed += walked
    else:
        outcome = "success" if float(np.linalg.norm(position - goal)) <= config.goal_radius else "timeout"

    return Episode(
        world_id=world_id,
        start=start,
        start_heading=float(start_heading),
        goal=goal,
        outcome=outcome,
        executed_path=np.asarray(path),
        executed_length=executed,
        oracle_length=oracle,
        steps=steps,
        latencies_ms=latencies,
    )


def spl(episodes: list[Episode]) -> float:
    """Success weighted by Path Length: mean of S_i * l_i / max(p_i, l_i)."""
    if not episodes:
        raise ValueError("SPL of an empty episode list is undefined")
    return float(np.mean([ep.spl_term() for ep in episodes]))


def latency_stats(params: PolicyParams, scenes, repetitions: int, spline_m: int = 8, warmup: int = 10) -> dict:
    """Wall-clock per full plan (forward + spline) over `repetitions` plans,
    the first `warmup` excluded."""
    if repetitions < 1:
        raise ValueError("need at least one timed repetition after warm-up")
    if not scenes:
        raise ValueError("need at least one scene")
    samples_ms = []
    total = warmup + repetitions
    for i in range(total):
        scene = scenes[i % len(scenes)]
        t0 = time.perf_counter()
        out = policy_mod.forward(params, scene.observation, scene.goal_robot, tape=None)
        interpolate(out.path, spline_m)
        elapsed = (time.perf_counter() - t0) * 1e3
        if i >= warmup:
            samples_ms.append(elapsed)
    arr = np.asarray(samples_ms)
    return {"mean_ms": float(arr.mean()), "std_ms": float(arr.std()), "count": int(arr.size)}


# ---------------------------------------------------------------------------
# benchmark


def sample_eval_pairs(bundle: WorldBundle, pairs: int, seed: int, goal_min: float, goal_max: float) -> list[tuple[np.ndarray, float, np.ndarray]]:
    """Deterministic (start, heading, goal) pairs in traversable areas."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xE7A1)))
    out = []
    for _ in range(pairs):
        position, heading = sample_free_pose(bundle, rng)
        goal = sample_goal(bundle, rng, position, goal_min, goal_max)
        out.append((position, heading, goal))
    return out


def benchmark(
    params: PolicyParams,
    bundles: list[WorldBundle],
    pairs_per_world: int,
    noise_sigmas: list[float],
    config: RolloutConfig,
    seed: int = 0,
    goal_min: float = 1.0,
    goal_max: float = 3.0,
    measure_latency: bool = True,
) -> dict:
    """Episode grid over worlds x pairs x noise levels.

    The returned report's `summary` and `episodes` are deterministic; timing
    lives only under `latency` so reports stay byte-comparable across runs.
    """
    episodes_by_sigma: dict[float, list[Episode]] = {s: [] for s in noise_sigmas}
    rows = []
    for w_idx, bundle in enumerate(bundles):
        pairs = sample_eval_pairs(bundle, pairs_per_world, seed + w_idx, goal_min, goal_max)
        for s_idx, sigma in enumerate(noise_sigmas):
            for p_idx, (start, heading, goal) in enumerate(pairs):
                ep_rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, w_idx, s_idx, p_idx)))
                ep = rollout(
                    params,
                    bundle.world,
                    start,
                    goal,
                    config,
                    noise=NoiseModel(sigma=sigma),
                    rng=ep_rng,
                    start_heading=heading,
                    world_id=bundle.name,
                )
                episodes_by_sigma[sigma].append(ep)
                rows.append(
                    {
                        "world": bundle.name,
                        "sigma": sigma,
                        "pair": p_idx,
                        "outcome": ep.outcome,
                        "executed_length": ep.executed_length,
                        "oracle_length": ep.oracle_length,
                        "steps": ep.steps,
                        "spl_term": ep.spl_term(),
                    }
                )

    noise_rows = []
    for sigma in noise_sigmas:
        eps = episodes_by_sigma[sigma]
        histogram = {name: sum(1 for e in eps if e.outcome == name) for name in OUTCOMES}
        per_world = {}
        for bundle in bundles:
            world_eps = [e for e in eps if e.world_id == bundle.name]
            if world_eps:
                per_world[bundle.name] = spl(world_eps)
        noise_rows.append(
            {
                "sigma": sigma,
                "overall_spl": spl(eps),
                "per_world_spl": per_world,
                "outcomes": histogram,
                "episodes": len(eps),
            }
        )
    report = {
        "summary": {"noise_levels": noise_rows, "pairs_per_world": pairs_per_world, "seed": seed},
        "episodes": rows,
    }
    if measure_latency:
        scenes = []
        eval_rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x1A7)))
        for w_idx, bundle in enumerate(bundles):
            scenes.append(make_sample(bundle, w_idx, eval_rng, params.config, goal_min, goal_max))
        report["latency"] = latency_stats(params, scenes, repetitions=1000, spline_m=config.spline_m)
    return report


def episodes_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf,
        fieldnames=["world", "sigma", "pair", "outcome", "executed_length", "oracle_length", "steps", "spl_term"],
        lineterminator="\n",
    )
    writer.writeheader()
    for row in rows:
        out = dict(row)
        out["executed_length"] = repr(float(row["executed_length"]))
        out["oracle_length"] = repr(float(row["oracle_length"]))
        out["spl_term"] = repr(float(row["spl_term"]))
        writer.writerow(out)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# scripted dynamic-obstacle scene (smoke-level support)


def stamp_disc(world: WorldModel, center, radius: float) -> WorldModel:
    """A copy of the world with a disc obstacle stamped into the occupancy."""
    occ = np.array(world.occupancy)
    coords = [(np.arange(n) + 0.5) * world.cell_size for n in world.shape]
    center = np.asarray(center, dtype=np.float64)
    dist2 = np.zeros(world.shape)
    for axis, axis_coords in enumerate(coords[:2]):
        shape = [1] * world.dims
        shape[axis] = -1
        dist2 = dist2 + (axis_coords.reshape(shape) - center[axis]) ** 2
    occ |= dist2 <= radius * radius
    return WorldModel(cell_size=world.cell_size, occupancy=occ, seed=world.seed)


def scripted_disc_rollout(params: PolicyParams, world: WorldModel, start, goal, config: RolloutConfig, disc_start, disc_velocity, disc_radius: float, dt: float = 1.0) -> Episode:
    """Rollout against a disc obstacle moving at constant velocity."""
    disc_start = np.asarray(disc_start, dtype=np.float64)
    disc_velocity = np.asarray(disc_velocity, dtype=np.float64)

    def world_at(step: int) -> WorldModel:
        return stamp_disc(world, disc_start + step * dt * disc_velocity, disc_radius)

    return rollout(params, world, start, goal, config, world_id="scripted-disc", world_at_step=world_at)
