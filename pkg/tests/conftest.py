"""Shared fixtures: small on-disk workspaces, the cached reference training
run, and a terminal summary that prints one PASS/FAIL line per acceptance
criterion."""

import hashlib
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from splinenav.costmap import build_costmap, export_costmap
from splinenav.trainer import TrainConfig, fit, load_checkpoint
from splinenav.world import save_world
from splinenav.worldgen import WorldGenConfig, generate_world

from reference import reference_config


@pytest.fixture(scope="session")
def small_workspace(tmp_path_factory):
    """Two 32x32 worlds with cost maps, written once per session."""
    root = tmp_path_factory.mktemp("workspace")
    worlds, maps = [], []
    for i, (family, seed) in enumerate((("forest-scatter", 0), ("rooms", 1))):
        world = generate_world(family, seed, WorldGenConfig(cells=(32, 32)))
        world_path = root / f"w{i}.json"
        save_world(world, world_path)
        base = root / f"w{i}_costmap"
        export_costmap(build_costmap(world, sigma=2.0), base)
        worlds.append(str(world_path))
        maps.append(str(base))
    return {"root": root, "worlds": worlds, "costmaps": maps}


@pytest.fixture(scope="session")
def small_train_config(small_workspace) -> TrainConfig:
    from splinenav.policy import PolicyConfig

    return TrainConfig(
        worlds=tuple(small_workspace["worlds"]),
        costmaps=tuple(small_workspace["costmaps"]),
        val_worlds=(small_workspace["worlds"][1],),
        val_costmaps=(small_workspace["costmaps"][1],),
        epochs=2,
        steps_per_epoch=2,
        batch_size=4,
        seed=5,
        policy=PolicyConfig(rays=16, key_points=3, conv_window=3, conv_stride=2, conv_channels=(4, 8), embed_dim=32, goal_embed_dim=8, trunk_dim=24, max_range=5.0),
        spline_m=4,
        goal_min=0.6,
        goal_max=1.6,
        checkpoint_every=1,
        val_samples=8,
    )


# cache the reference run on disk: training is deterministic, so reusing the
# checkpoint across pytest invocations is safe and keeps re-runs fast
_REF_CACHE = Path(__file__).parent / "_refcache"


@pytest.fixture(scope="session")
def reference_run():
    _REF_CACHE.mkdir(exist_ok=True)
    config = reference_config(_REF_CACHE)
    key = hashlib.sha256(config.to_json().encode("utf-8")).hexdigest()[:16]
    run_dir = _REF_CACHE / f"run_{key}"
    final_ckpt = run_dir / "checkpoints" / f"epoch_{config.epochs - 1:04d}.ckpt"
    if not final_ckpt.exists():
        fit(config, run_dir, progress=True)
    params, _, _, _, _ = load_checkpoint(final_ckpt)
    return {"config": config, "params": params, "checkpoint": final_ckpt, "run_dir": run_dir}


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion in the terminal report

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{_acceptance_results[name]:4s}  {name}")
