"""Perception-and-planning network: range scan + goal -> key points + fear logit.

The scan passes through two strided local affine layers with ReLU (a 1-D
analog of a small convolutional front end), then an MLP embedding. The goal
is lifted by a single linear layer and concatenated. A shared trunk feeds a
key-point head (cumulative offsets, zero-initialized so the untrained policy
emits an origin path) and a fear head (collision-probability logit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .spline import KeyPointPath
from .world import RangeObservation


@dataclass(frozen=True)
class PolicyConfig:
    rays: int = 64  # W
    dims: int = 2
    key_points: int = 5  # n
    max_range: float = 10.0
    fov: float = 2.0 * math.pi / 3.0
    conv_channels: tuple[int, int] = (8, 16)
    conv_window: int = 5
    conv_stride: int = 2
    embed_dim: int = 128
    goal_embed_dim: int = 16
    trunk_dim: int = 96

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        self.layer_plan()  # validates scan length against window/stride

    def layer_plan(self) -> list[tuple[int, int, int]]:
        """(input_len, input_ch, output_len) per strided local layer."""
        plan = []
        length, ch = self.rays, 1
        for out_ch in self.conv_channels:
            out_len = (length - self.conv_window) // self.conv_stride + 1
            if out_len < 1:
                raise ValueError(f"scan of {length} samples too short for window {self.conv_window} stride {self.conv_stride}")
            plan.append((length, ch, out_len))
            length, ch = out_len, out_ch
        return plan

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        plan = self.layer_plan()
        for i, ((_, in_ch, _), out_ch) in enumerate(zip(plan, self.conv_channels)):
            shapes[f"conv{i}.w"] = (self.conv_window * in_ch, out_ch)
            shapes[f"conv{i}.b"] = (out_ch,)
        flat = plan[-1][2] * self.conv_channels[-1]
        shapes["embed.w"] = (flat, self.embed_dim)
        shapes["embed.b"] = (self.embed_dim,)
        shapes["goal.w"] = (self.dims, self.goal_embed_dim)
        shapes["goal.b"] = (self.goal_embed_dim,)
        shapes["trunk.w"] = (self.embed_dim + self.goal_embed_dim, self.trunk_dim)
        shapes["trunk.b"] = (self.trunk_dim,)
        shapes["kp.w"] = (self.trunk_dim, self.key_points * self.dims)
        shapes["kp.b"] = (self.key_points * self.dims,)
        shapes["fear.w"] = (self.trunk_dim, 1)
        shapes["fear.b"] = (1,)
        return shapes

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.parameter_shapes().values())


@dataclass
class PolicyParams:
    """All trainable parameters, float64, keyed by layer name."""

    config: PolicyConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "PolicyParams":
        return PolicyParams(config=self.config, arrays={k: v.copy() for k, v in self.arrays.items()})

    def assert_finite(self) -> None:
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"parameter {name!r} contains non-finite values")


# output heads start at zero so the untrained policy proposes the origin path
_ZERO_INIT = ("kp.w", "kp.b", "fear.w", "fear.b")


def init(seed: int, config: PolicyConfig) -> PolicyParams:
    """Fan-in scaled uniform weights, zero biases, zero output heads."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in config.parameter_shapes().items():
        if name in _ZERO_INIT or name.endswith(".b"):
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return PolicyParams(config=config, arrays=arrays)


@lru_cache(maxsize=16)
def _window_indices(length: int, window: int, stride: int) -> np.ndarray:
    starts = np.arange(0, length - window + 1, stride)
    return starts[:, None] + np.arange(window)[None, :]


@lru_cache(maxsize=16)
def _prefix_sum_matrix(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n)))


@dataclass(frozen=True)
class PolicyOutput:
    path: KeyPointPath
    fear_logit: Tensor
    leaves: dict[str, Tensor] | None  # parameter leaves when a tape is attached

    @property
    def fear_probability(self) -> float:
        z = float(self.fear_logit.value.reshape(()))
        p = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
        # float64 saturates the sigmoid at extreme logits; keep it open
        return min(max(p, 5e-324), 1.0 - 2.0**-53)


def forward(params: PolicyParams, obs: RangeObservation, goal, tape: Tape | None = None) -> PolicyOutput:
    """Deterministic forward pass; fully recorded on `tape` when given.

    `goal` is the goal position in the robot frame. Ranges are normalized by
    max_range before encoding; key points are cumulative offsets.
    """
    cfg = params.config
    ranges = np.asarray(obs.ranges, dtype=np.float64)
    if ranges.shape != (cfg.rays,):
        raise ad.ShapeMismatch(f"expected {cfg.rays} rays, got {ranges.shape}")
    goal = np.asarray(goal, dtype=np.float64)
    if goal.shape != (cfg.dims,):
        raise ad.ShapeMismatch(f"expected goal of dim {cfg.dims}, got {goal.shape}")
    if not np.all(np.isfinite(goal)):
        raise ValueError("goal contains non-finite coordinates")

    if tape is not None:
        leaves = {name: tape.leaf(arr, name=name) for name, arr in params.arrays.items()}
    else:
        leaves = {name: Tensor(arr) for name, arr in params.arrays.items()}

    x = Tensor((ranges / obs.max_range).reshape(cfg.rays, 1))
    for i, (length, in_ch, out_len) in enumerate(cfg.layer_plan()):
        idx = _window_indices(length, cfg.conv_window, cfg.conv_stride)
        windows = ad.gather(x, idx)  # (out_len, window, in_ch)
        windows = ad.reshape(windows, (out_len, cfg.conv_window * in_ch))
        x = ad.relu(ad.affine(windows, leaves[f"conv{i}.w"], leaves[f"conv{i}.b"]))
    flat = ad.reshape(x, (x.value.size,))
    obs_embed = ad.relu(ad.affine(flat, leaves["embed.w"], leaves["embed.b"]))
    goal_embed = ad.affine(Tensor(goal), leaves["goal.w"], leaves["goal.b"])
    joint = ad.concat([obs_embed, goal_embed], axis=0)
    trunk = ad.relu(ad.affine(joint, leaves["trunk.w"], leaves["trunk.b"]))

    offsets = ad.affine(trunk, leaves["kp.w"], leaves["kp.b"])
    offsets = ad.reshape(offsets, (cfg.key_points, cfg.dims))
    key_points = ad.matmul(Tensor(_prefix_sum_matrix(cfg.key_points)), offsets)
    fear_logit = ad.affine(trunk, leaves["fear.w"], leaves["fear.b"])

    if not np.all(np.isfinite(key_points.value)) or not np.all(np.isfinite(fear_logit.value)):
        raise FloatingPointError("policy forward produced non-finite activations")
    return PolicyOutput(path=KeyPointPath(points=key_points), fear_logit=fear_logit, leaves=leaves if tape else None)


# ---------------------------------------------------------------------------
# checkpoints (autodiff container format, config recorded alongside weights)


def save_policy(path, params: PolicyParams, extra: dict | None = None) -> None:
    payload = {"policy_config": asdict(params.config)}
    if extra:
        payload.update(extra)
    ad.save_arrays(path, params.arrays, extra=payload)


def load_policy(path) -> tuple[PolicyParams, dict]:
    arrays, extra = ad.load_arrays(path)
    cfg_fields = dict(extra.pop("policy_config"))
    cfg_fields["conv_channels"] = tuple(cfg_fields["conv_channels"])
    config = PolicyConfig(**cfg_fields)
    expected = config.parameter_shapes()
    policy_arrays = {}
    for name, shape in expected.items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        if arrays[name].shape != shape:
            raise ValueError(f"checkpoint shape {arrays[name].shape} != config shape {shape} for {name!r}")
        policy_arrays[name] = arrays[name]
    return PolicyParams(config=config, arrays=policy_arrays), extra
