"""Policy network: initialization contract, determinism, gradient correctness."""

import math

import numpy as np
import pytest

from splinenav import autodiff as ad
from splinenav import policy
from splinenav.policy import PolicyConfig, forward, init, load_policy, save_policy
from splinenav.world import RangeObservation

from oracles import finite_difference_gradient

SMALL = PolicyConfig(rays=8, dims=2, key_points=3, conv_window=3, conv_stride=2, conv_channels=(4, 4), embed_dim=16, goal_embed_dim=4, trunk_dim=12)


def _obs(cfg: PolicyConfig, seed=0) -> RangeObservation:
    rng = np.random.default_rng(seed)
    return RangeObservation(ranges=rng.uniform(0.5, cfg.max_range, cfg.rays), fov=cfg.fov, max_range=cfg.max_range)


def test_zero_heads_give_origin_path_and_half_fear():
    params = init(seed=1, config=SMALL)
    out = forward(params, _obs(SMALL), np.array([1.0, 0.5]))
    np.testing.assert_array_equal(out.path.values, np.zeros((3, 2)))
    assert out.fear_probability == pytest.approx(0.5)


def test_same_seed_gives_bit_identical_params():
    a = init(seed=42, config=SMALL)
    b = init(seed=42, config=SMALL)
    assert set(a.arrays) == set(b.arrays)
    for name in a.arrays:
        assert a.arrays[name].tobytes() == b.arrays[name].tobytes()
    c = init(seed=43, config=SMALL)
    assert any(a.arrays[n].tobytes() != c.arrays[n].tobytes() for n in a.arrays)


def test_forward_is_deterministic():
    params = init(seed=3, config=SMALL)
    params.arrays["kp.w"] += 0.01  # make the output non-trivial
    goal = np.array([2.0, -1.0])
    a = forward(params, _obs(SMALL), goal)
    b = forward(params, _obs(SMALL), goal)
    assert a.path.values.tobytes() == b.path.values.tobytes()
    assert float(a.fear_logit.value[0]) == float(b.fear_logit.value[0])


def test_parameter_count_matches_closed_form():
    cfg = PolicyConfig()  # defaults: W=64, window 5, stride 2, channels (8, 16)
    # conv lengths: 64 -> 30 -> 13
    expected = (
        (5 * 1) * 8 + 8  # conv0
        + (5 * 8) * 16 + 16  # conv1
        + (13 * 16) * 128 + 128  # embed
        + 2 * 16 + 16  # goal
        + (128 + 16) * 96 + 96  # trunk
        + 96 * (5 * 2) + 10  # key-point head
        + 96 * 1 + 1  # fear head
    )
    assert cfg.parameter_count() == expected
    params = init(seed=0, config=cfg)
    assert sum(a.size for a in params.arrays.values()) == expected


def test_cumulative_offsets_accumulate():
    params = init(seed=5, config=SMALL)
    params.arrays["kp.b"] = np.tile([0.5, 0.0], 3)  # constant offset per key point
    out = forward(params, _obs(SMALL), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out.path.values[:, 0], [0.5, 1.0, 1.5], atol=1e-12)
    np.testing.assert_allclose(out.path.values[:, 1], [0.0, 0.0, 0.0], atol=1e-12)


def test_shape_validation():
    params = init(seed=0, config=SMALL)
    bad_obs = RangeObservation(ranges=np.ones(5), fov=1.0, max_range=10.0)
    with pytest.raises(ad.ShapeMismatch):
        forward(params, bad_obs, np.zeros(2))
    with pytest.raises(ad.ShapeMismatch):
        forward(params, _obs(SMALL), np.zeros(3))
    with pytest.raises(ValueError, match="non-finite"):
        forward(params, _obs(SMALL), np.array([np.nan, 0.0]))


def test_config_rejects_too_short_scans():
    with pytest.raises(ValueError, match="too short"):
        PolicyConfig(rays=4, conv_window=5, conv_stride=2)


def test_parameter_gradients_match_finite_differences():
    params = init(seed=7, config=SMALL)
    # nudge the zero heads so every path is active
    rng = np.random.default_rng(0)
    params.arrays["kp.w"] += rng.standard_normal(params.arrays["kp.w"].shape) * 0.05
    params.arrays["fear.w"] += rng.standard_normal(params.arrays["fear.w"].shape) * 0.05
    obs = _obs(SMALL, seed=2)
    goal = np.array([1.5, -0.5])

    def scalar_for(name):
        def f(arr):
            probe = params.copy()
            probe.arrays[name] = arr
            out = forward(probe, obs, goal)
            return float(out.path.values.sum() + out.fear_logit.value[0])

        return f

    tape = ad.Tape()
    out = forward(params, obs, goal, tape=tape)
    root = ad.add(ad.tsum(out.path.points), ad.reshape(out.fear_logit, ()))
    tape.backward(root)

    worst = 0.0
    for name in params.arrays:
        fd = finite_difference_gradient(scalar_for(name), params.arrays[name], h=1e-6)
        grad = out.leaves[name].grad
        scale = np.maximum(np.abs(fd), 1.0)
        worst = max(worst, float((np.abs(grad - fd) / scale).max()))
    assert worst < 1e-4


def test_fear_probability_in_open_interval():
    params = init(seed=9, config=SMALL)
    params.arrays["fear.b"] = np.array([37.0])
    out = forward(params, _obs(SMALL), np.zeros(2))
    assert 0.0 < out.fear_probability < 1.0


def test_checkpoint_roundtrip(tmp_path):
    params = init(seed=11, config=SMALL)
    params.arrays["kp.w"] += 0.25
    path = tmp_path / "policy.ckpt"
    save_policy(path, params, extra={"note": "test"})
    back, extra = load_policy(path)
    assert extra["note"] == "test"
    assert back.config == SMALL
    for name in params.arrays:
        assert back.arrays[name].tobytes() == params.arrays[name].tobytes()


def test_checkpoint_shape_check(tmp_path):
    params = init(seed=11, config=SMALL)
    path = tmp_path / "policy.ckpt"
    save_policy(path, params)
    arrays, extra = policy.ad.load_arrays(path)
    del arrays["kp.w"]
    policy.ad.save_arrays(path, arrays, extra=extra)
    with pytest.raises(ValueError, match="missing parameter"):
        load_policy(path)
