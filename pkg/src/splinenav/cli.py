"""Command-line entry point: world generation, cost-map building, training,
evaluation, and single-shot planning with rendered overlays.

Every command validates its inputs before writing anything, writes exactly one
RunManifest into --out, and exits 0 on success, 1 on usage errors, 2 on
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import evalharness, trainer, viz
from .costmap import build_costmap, export_costmap, load_costmap
from .evalharness import RolloutConfig, benchmark, episodes_csv, rollout
from .policy import load_policy
from .scenes import WorldBundle
from .spline import interpolate, trajectory_to_csv
from .trainer import TrainConfig
from .world import load_world, save_world, world_from_robot
from .worldgen import FAMILIES, WorldGenConfig, WorldGenError, generate_world


class UsageError(ValueError):
    """Bad flags or unusable input files (exit code 1)."""


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    artifact_paths: list[str]
    tool_version: str
    wall_time_s: float


def _prepare_out(out: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if (out_dir / "manifest.json").exists():
        raise UsageError(f"output directory {out_dir} already holds a run (manifest.json present); outputs are write-once")
    return out_dir


def _write_manifest(out_dir: Path, command: str, config: dict, seeds: dict, artifacts: list[Path], started: float) -> None:
    manifest = RunManifest(
        command=command,
        config=config,
        seeds=seeds,
        artifact_paths=[str(p) for p in artifacts],
        tool_version=__version__,
        wall_time_s=time.perf_counter() - started,
    )
    (out_dir / "manifest.json").write_text(json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _parse_size(text: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"bad --size {text!r}: expected N or NxM[xK]") from exc
    if len(parts) == 1:
        parts = (parts[0], parts[0])
    return parts


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.asarray([float(p) for p in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"bad coordinate {text!r}: expected x,y[,z]") from exc


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag} {path!r} does not exist")
    return p


def cmd_gen(args) -> int:
    started = time.perf_counter()
    size = _parse_size(args.size)
    try:
        config = WorldGenConfig(cells=size, cell_size=args.cell_size)
    except WorldGenError as exc:
        raise UsageError(str(exc)) from exc
    out_dir = _prepare_out(args.out)
    artifacts = []
    for k in range(args.count):
        seed = args.seed + k
        world = generate_world(args.family, seed, config)
        path = out_dir / f"world_{args.family}_{seed}.json"
        save_world(world, path)
        artifacts.append(path)
    _write_manifest(out_dir, "gen", {"family": args.family, "size": list(size), "cell_size": args.cell_size, "count": args.count}, {"seed": args.seed}, artifacts, started)
    return 0


def cmd_costmap(args) -> int:
    started = time.perf_counter()
    world_path = _require_file(args.world, "--world")
    out_dir = _prepare_out(args.out)
    world = load_world(world_path)
    cm = build_costmap(world, sigma=args.sigma)
    base = out_dir / f"{world_path.stem}_costmap"
    export_costmap(cm, base)
    artifacts = [base.with_suffix(".json"), base.with_suffix(".f32")]
    if world.dims == 2:
        artifacts.append(base.with_suffix(".pgm"))
    _write_manifest(out_dir, "costmap", {"world": str(world_path), "sigma": args.sigma}, {"seed": world.seed}, artifacts, started)
    return 0


def cmd_train(args) -> int:
    started = time.perf_counter()
    config_path = _require_file(args.config, "--config")
    try:
        config = TrainConfig.from_json(config_path.read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad train config: {exc}") from exc
    for path in (*config.worlds, *config.val_worlds):
        _require_file(path, "world")
    out_dir = _prepare_out(args.out)
    result = trainer.fit(config, out_dir, resume_from=args.resume, progress=args.progress)
    artifacts = [Path(result.log_path), *[Path(p) for p in result.checkpoint_paths]]
    _write_manifest(out_dir, "train", json.loads(config.to_json()), {"seed": config.seed}, artifacts, started)
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    ckpt_path = _require_file(args.checkpoint, "--checkpoint")
    world_paths = [_require_file(p, "--worlds") for p in args.worlds]
    try:
        noise_sigmas = [float(s) for s in args.noise.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --noise {args.noise!r}: expected comma-separated floats") from exc
    params, _ = load_policy(ckpt_path)
    rollout_cfg = RolloutConfig(spline_m=args.spline_m, robot_radius=args.radius)
    bundles = [WorldBundle.build(name=p.stem, world=load_world(p), costmap=None, radius=args.radius) for p in world_paths]
    out_dir = _prepare_out(args.out)
    report = benchmark(
        params,
        bundles,
        pairs_per_world=args.pairs,
        noise_sigmas=noise_sigmas,
        config=rollout_cfg,
        seed=args.seed,
        goal_min=args.goal_min,
        goal_max=args.goal_max,
        measure_latency=not args.no_latency,
    )
    summary_path = out_dir / "summary.json"
    episodes_path = out_dir / "episodes.csv"
    summary_path.write_text(json.dumps(report["summary"], sort_keys=True, indent=2) + "\n", encoding="utf-8")
    episodes_path.write_text(episodes_csv(report["episodes"]), encoding="utf-8")
    artifacts = [summary_path, episodes_path]
    if "latency" in report:
        latency_path = out_dir / "latency.json"
        latency_path.write_text(json.dumps(report["latency"], sort_keys=True, indent=2) + "\n", encoding="utf-8")
        artifacts.append(latency_path)
    config_doc = {
        "checkpoint": str(ckpt_path),
        "worlds": [str(p) for p in world_paths],
        "pairs": args.pairs,
        "noise": noise_sigmas,
        "radius": args.radius,
        "goal_min": args.goal_min,
        "goal_max": args.goal_max,
    }
    _write_manifest(out_dir, "eval", config_doc, {"seed": args.seed}, artifacts, started)
    return 0


def cmd_plan(args) -> int:
    started = time.perf_counter()
    ckpt_path = _require_file(args.checkpoint, "--checkpoint")
    world_path = _require_file(args.world, "--world")
    start = _parse_point(args.start)
    goal = _parse_point(args.goal)
    params, _ = load_policy(ckpt_path)
    world = load_world(world_path)
    if start.shape[0] != world.dims or goal.shape[0] != world.dims:
        raise UsageError(f"start/goal must have {world.dims} coordinates for this world")
    out_dir = _prepare_out(args.out)
    rollout_cfg = RolloutConfig(spline_m=args.spline_m, robot_radius=args.radius)
    episode = rollout(params, world, start, goal, rollout_cfg, world_id=world_path.stem)

    executed_path = out_dir / "executed.csv"
    lines = ["index,t,x,y" + (",z" if world.dims == 3 else "") + ",segment"]
    for i, p in enumerate(episode.executed_path):
        lines.append(f"{i},{float(i)!r}," + ",".join(repr(float(c)) for c in p) + ",0")
    executed_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    artifacts = [executed_path]

    plan_csv = out_dir / "plan0.csv"
    key_points_world = None
    if episode.steps > 0:
        from .policy import forward
        from .world import RobotState, render_scan, robot_from_world

        state = RobotState(position=start, heading=episode.start_heading, radius=args.radius)
        obs = render_scan(world, state, params.config.rays, params.config.fov, params.config.max_range)
        goal_robot = robot_from_world(start, episode.start_heading, goal[None, :])[0]
        out = forward(params, obs, goal_robot, tape=None)
        traj = interpolate(out.path, args.spline_m)
        plan_csv.write_text(trajectory_to_csv(traj), encoding="utf-8")
        key_points_world = world_from_robot(start, episode.start_heading, out.path.values)
        artifacts.append(plan_csv)

    if args.render:
        if world.dims != 2:
            raise UsageError("--render is only available for 2-D worlds")
        cm = build_costmap(world, sigma=args.sigma)
        image = viz.render_plan_overlay(cm, episode.executed_path, key_points_world, goal, start)
        render_path = out_dir / "plan.ppm"
        render_path.write_bytes(viz.ppm_bytes(image))
        artifacts.append(render_path)

    config_doc = {
        "checkpoint": str(ckpt_path),
        "world": str(world_path),
        "start": [float(x) for x in start],
        "goal": [float(x) for x in goal],
        "outcome": episode.outcome,
        "executed_length": episode.executed_length,
    }
    _write_manifest(out_dir, "plan", config_doc, {"seed": world.seed}, artifacts, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splinenav", description="Train and evaluate a scan-to-trajectory local planner.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate procedural worlds")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", default="64", help="cells per axis: N or NxM[xK]")
    p.add_argument("--cell-size", type=float, default=0.1)
    p.add_argument("--count", type=int, default=1, help="worlds with consecutive seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("costmap", help="build the smoothed distance cost map for a world")
    p.add_argument("--world", required=True)
    p.add_argument("--sigma", type=float, default=2.0, help="Gaussian width in cells")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_costmap)

    p = sub.add_parser("train", help="train a policy from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="closed-loop benchmark of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--worlds", nargs="+", required=True)
    p.add_argument("--pairs", type=int, default=30)
    p.add_argument("--noise", default="0.0", help="comma-separated sigmas in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=float, default=0.15)
    p.add_argument("--goal-min", type=float, default=1.0)
    p.add_argument("--goal-max", type=float, default=3.0)
    p.add_argument("--spline-m", type=int, default=8)
    p.add_argument("--no-latency", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="roll out a single start/goal pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--start", required=True, help="x,y[,z] in meters")
    p.add_argument("--goal", required=True, help="x,y[,z] in meters")
    p.add_argument("--radius", type=float, default=0.15)
    p.add_argument("--spline-m", type=int, default=8)
    p.add_argument("--sigma", type=float, default=2.0, help="cost-map sigma for --render")
    p.add_argument("--render", action="store_true", help="write a PPM overlay")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        print(f"splinenav: {message}", file=sys.stderr)
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    for sub_action in parser._subparsers._group_actions:
        for sub_parser in sub_action.choices.values():
            sub_parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"splinenav: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  - CLI boundary: one-line diagnostic, exit 2
        print(f"splinenav: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
