"""Self-supervised training loop: sample scenes, plan, evaluate the trajectory
cost on the pre-built cost map, backpropagate, update the policy.

The gradient signal comes only from the differentiable cost map; ground-truth
occupancy is consulted only for pose sampling and fear labels. Runs are fully
deterministic given (config, seed) and resumable from any checkpoint.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import policy as policy_mod
from .autodiff import OptimizerState
from .costmap import load_costmap
from .objective import CostWeights, LossBreakdown, mean_breakdown, total_loss
from .policy import PolicyConfig, PolicyParams
from .scenes import TrainSample, WorldBundle, make_sample
from .spline import interpolate
from .world import collides, load_world, world_from_robot


class TrainingAborted(RuntimeError):
    """Raised when a step produces a non-finite loss; carries the scene descriptor."""


@dataclass(frozen=True)
class TrainConfig:
    worlds: tuple[str, ...]
    costmaps: tuple[str, ...]
    val_worlds: tuple[str, ...] = ()
    val_costmaps: tuple[str, ...] = ()
    epochs: int = 30
    steps_per_epoch: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    plain_descent: bool = False
    seed: int = 0
    weights: CostWeights = field(default_factory=CostWeights)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    spline_m: int = 8
    robot_radius: float = 0.15
    goal_min: float = 1.0
    goal_max: float = 3.0
    checkpoint_every: int = 5
    val_samples: int = 64

    def __post_init__(self):
        object.__setattr__(self, "worlds", tuple(self.worlds))
        object.__setattr__(self, "costmaps", tuple(self.costmaps))
        object.__setattr__(self, "val_worlds", tuple(self.val_worlds))
        object.__setattr__(self, "val_costmaps", tuple(self.val_costmaps))
        if len(self.worlds) != len(self.costmaps):
            raise ValueError("every training world needs a matching cost map")
        if len(self.val_worlds) != len(self.val_costmaps):
            raise ValueError("every validation world needs a matching cost map")
        if not self.worlds:
            raise ValueError("no training worlds configured")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs, steps_per_epoch and batch_size must be >= 1")

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "weights" in doc:
            doc["weights"] = CostWeights(**doc["weights"])
        if "policy" in doc:
            pol = dict(doc["policy"])
            if "conv_channels" in pol:
                pol["conv_channels"] = tuple(pol["conv_channels"])
            doc["policy"] = PolicyConfig(**pol)
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))


def load_bundles(world_paths, costmap_paths, radius: float) -> list[WorldBundle]:
    bundles = []
    for wp, cp in zip(world_paths, costmap_paths):
        world = load_world(wp)
        cm = load_costmap(cp)
        bundles.append(WorldBundle.build(name=str(wp), world=world, costmap=cm, radius=radius))
    return bundles


def sample_batch(bundles: list[WorldBundle], config: TrainConfig, rng: np.random.Generator, count: int | None = None) -> list[TrainSample]:
    """Deterministic given the generator state; world choice is uniform."""
    count = config.batch_size if count is None else count
    batch = []
    for _ in range(count):
        idx = int(rng.integers(len(bundles)))
        batch.append(make_sample(bundles[idx], idx, rng, config.policy, config.goal_min, config.goal_max))
    return batch


def _sample_loss(params: PolicyParams, sample: TrainSample, bundle: WorldBundle, config: TrainConfig, tape: ad.Tape | None):
    out = policy_mod.forward(params, sample.observation, sample.goal_robot, tape=tape)
    traj = interpolate(out.path, config.spline_m)
    world_points = world_from_robot(sample.position, sample.heading, traj.values)
    fear_label = collides(bundle.world, world_points, config.robot_radius)
    root, breakdown = total_loss(
        traj,
        goal=sample.goal_robot,
        position=sample.position,
        heading=sample.heading,
        cm=bundle.costmap,
        weights=config.weights,
        fear_logit=out.fear_logit,
        fear_label=fear_label,
    )
    return root, breakdown, out


def train_step(
    params: PolicyParams,
    batch: list[TrainSample],
    bundles: list[WorldBundle],
    config: TrainConfig,
    opt_state: OptimizerState,
) -> tuple[dict, float]:
    """One optimizer step on the batch-mean loss; returns (mean breakdown, grad norm)."""
    grad_acc: dict[str, np.ndarray] = {name: np.zeros_like(arr) for name, arr in params.arrays.items()}
    breakdowns: list[LossBreakdown] = []
    for sample in batch:
        tape = ad.Tape()
        root, breakdown, out = _sample_loss(params, sample, bundles[sample.world_id], config, tape)
        if not math.isfinite(breakdown.f_total):
            raise TrainingAborted(f"non-finite loss on scene {json.dumps(sample.descriptor())}")
        tape.backward(root)
        for name, leaf in out.leaves.items():
            grad_acc[name] += leaf.grad
        breakdowns.append(breakdown)
    scale = 1.0 / len(batch)
    grads = {name: g * scale for name, g in grad_acc.items()}
    grad_norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    ad.step(params.arrays, grads, opt_state)
    return mean_breakdown(breakdowns), grad_norm


def evaluate_batch(params: PolicyParams, samples: list[TrainSample], bundles: list[WorldBundle], config: TrainConfig) -> dict:
    """Loss statistics with frozen parameters (no tape, no update)."""
    breakdowns = []
    for sample in samples:
        _, breakdown, _ = _sample_loss(params, sample, bundles[sample.world_id], config, tape=None)
        breakdowns.append(breakdown)
    return mean_breakdown(breakdowns)


# ---------------------------------------------------------------------------
# checkpoints: policy weights + optimizer moments + rng state, bit-exact resume


def save_checkpoint(path, params: PolicyParams, opt_state: OptimizerState, rng: np.random.Generator, epoch: int, config: TrainConfig) -> None:
    arrays = dict(params.arrays)
    for name, m in opt_state.m.items():
        arrays[f"opt.m.{name}"] = m
    for name, v in opt_state.v.items():
        arrays[f"opt.v.{name}"] = v
    extra = {
        "policy_config": asdict(params.config),
        "epoch": epoch,
        "optimizer": {
            "learning_rate": opt_state.learning_rate,
            "beta1": opt_state.beta1,
            "beta2": opt_state.beta2,
            "eps": opt_state.eps,
            "plain": opt_state.plain,
            "step_count": opt_state.step_count,
        },
        "rng_state": rng.bit_generator.state,
        "train_config": json.loads(config.to_json()),
    }
    ad.save_arrays(path, arrays, extra=extra)


def load_checkpoint(path) -> tuple[PolicyParams, OptimizerState, np.random.Generator, int, dict]:
    arrays, extra = ad.load_arrays(path)
    cfg_fields = dict(extra["policy_config"])
    cfg_fields["conv_channels"] = tuple(cfg_fields["conv_channels"])
    policy_cfg = PolicyConfig(**cfg_fields)
    params = PolicyParams(config=policy_cfg, arrays={})
    opt_doc = extra["optimizer"]
    opt_state = OptimizerState(
        learning_rate=opt_doc["learning_rate"],
        beta1=opt_doc["beta1"],
        beta2=opt_doc["beta2"],
        eps=opt_doc["eps"],
        plain=opt_doc["plain"],
        step_count=opt_doc["step_count"],
    )
    for name, arr in arrays.items():
        if name.startswith("opt.m."):
            opt_state.m[name[len("opt.m.") :]] = arr
        elif name.startswith("opt.v."):
            opt_state.v[name[len("opt.v.") :]] = arr
        else:
            params.arrays[name] = arr
    rng = np.random.default_rng(0)
    rng.bit_generator.state = extra["rng_state"]
    return params, opt_state, rng, int(extra["epoch"]), extra


@dataclass
class FitResult:
    params: PolicyParams
    history: list[dict]
    checkpoint_paths: list[str]
    log_path: str


def fit(config: TrainConfig, out_dir, resume_from=None, progress: bool = False) -> FitResult:
    """Run the full training loop; writes checkpoints and a JSON-lines log.

    Checkpoints carry optimizer moments and the sampler rng state, so resuming
    from epoch k reproduces the original epoch k+1 bit-identically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    log_path = out / "train_log.jsonl"

    bundles = load_bundles(config.worlds, config.costmaps, config.robot_radius)
    val_bundles = load_bundles(config.val_worlds, config.val_costmaps, config.robot_radius)

    if resume_from is not None:
        params, opt_state, rng, start_epoch, _ = load_checkpoint(resume_from)
        start_epoch += 1
        log_mode = "a"
    else:
        params = policy_mod.init(config.seed, config.policy)
        opt_state = OptimizerState(learning_rate=config.learning_rate, plain=config.plain_descent)
        rng = np.random.default_rng(config.seed)
        start_epoch = 0
        log_mode = "w"

    # validation scenes are fixed across epochs (held-out worlds, own stream)
    val_samples: list[TrainSample] = []
    if val_bundles:
        val_rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, 0x5EED)))
        val_samples = sample_batch(val_bundles, config, val_rng, count=config.val_samples)

    history: list[dict] = []
    checkpoint_paths: list[str] = []
    with open(log_path, log_mode, encoding="utf-8") as log:
        for epoch in range(start_epoch, config.epochs):
            epoch_start = time.perf_counter()
            for step_idx in range(config.steps_per_epoch):
                step_start = time.perf_counter()
                batch = sample_batch(bundles, config, rng)
                losses, grad_norm = train_step(params, batch, bundles, config, opt_state)
                record = {
                    "type": "step",
                    "epoch": epoch,
                    "step": step_idx,
                    "losses": losses,
                    "grad_norm": grad_norm,
                    "wall_time_s": time.perf_counter() - step_start,
                }
                log.write(json.dumps(record, sort_keys=True) + "\n")
            epoch_record = {
                "type": "epoch",
                "epoch": epoch,
                "train": losses,
                "wall_time_s": time.perf_counter() - epoch_start,
            }
            if val_samples:
                epoch_record["val"] = evaluate_batch(params, val_samples, val_bundles, config)
            log.write(json.dumps(epoch_record, sort_keys=True) + "\n")
            log.flush()
            history.append(epoch_record)
            if progress:
                val_goal = epoch_record.get("val", {}).get("c_goal")
                print(f"epoch {epoch}: train f_total={losses['f_total']:.4f}" + (f" val c_goal={val_goal:.3f}" if val_goal is not None else ""))
            if (epoch + 1) % config.checkpoint_every == 0 or epoch == config.epochs - 1:
                ckpt_path = ckpt_dir / f"epoch_{epoch:04d}.ckpt"
                save_checkpoint(ckpt_path, params, opt_state, rng, epoch, config)
                checkpoint_paths.append(str(ckpt_path))
    return FitResult(params=params, history=history, checkpoint_paths=checkpoint_paths, log_path=str(log_path))
