"""Cost-map pipeline: exact distance transform, Gaussian smoothing,
differentiable sampling, exports."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from splinenav import autodiff as ad
from splinenav.costmap import (
    CostMap,
    build_costmap,
    distance_to_free,
    export_costmap,
    gaussian_kernel,
    gaussian_smooth,
    load_costmap,
    sample,
    sample_costs,
    sample_values_and_grads,
    sample_with_gradient,
)
from splinenav.world import WorldModel

from oracles import brute_force_distance_to_free, finite_difference_gradient

RNG = np.random.default_rng(99)


def _bounded_world(occ_interior: np.ndarray, cell_size: float = 0.1) -> WorldModel:
    occ = np.ones((occ_interior.shape[0] + 2, occ_interior.shape[1] + 2), dtype=bool)
    occ[1:-1, 1:-1] = occ_interior
    return WorldModel(cell_size=cell_size, occupancy=occ, seed=0)


# ---------------------------------------------------------------------------
# distance transform


def test_all_free_grid_is_zero():
    out = distance_to_free(np.zeros((6, 9), dtype=bool), cell_size=0.2)
    np.testing.assert_array_equal(out, np.zeros((6, 9)))


def test_single_obstacle_cell_value_is_cell_size():
    occ = np.zeros((7, 7), dtype=bool)
    occ[3, 3] = True
    out = distance_to_free(occ, cell_size=0.25)
    assert out[3, 3] == pytest.approx(0.25)
    assert out.sum() == pytest.approx(0.25)


def test_three_by_three_block_center():
    occ = np.zeros((9, 9), dtype=bool)
    occ[3:6, 3:6] = True
    cell = 0.5
    out = distance_to_free(occ, cell)
    assert out[4, 4] == 2.0 * cell
    np.testing.assert_array_equal(out, brute_force_distance_to_free(occ, cell))


def test_all_obstacles_rejected():
    with pytest.raises(ValueError, match="every cell"):
        distance_to_free(np.ones((4, 4), dtype=bool), 0.1)


@settings(max_examples=60, deadline=None)
@given(
    occ=hnp.arrays(dtype=bool, shape=st.tuples(st.integers(2, 32), st.integers(2, 32))),
    cell=st.sampled_from([0.1, 0.25, 1.0]),
)
def test_distance_transform_equals_brute_force_exactly(occ, cell):
    if occ.all():
        return
    got = distance_to_free(occ, cell)
    expected = brute_force_distance_to_free(occ, cell)
    np.testing.assert_array_equal(got, expected)


def test_distance_transform_exact_in_3d():
    occ = np.zeros((6, 7, 5), dtype=bool)
    occ[2:5, 2:6, 1:4] = True
    got = distance_to_free(occ, 0.2)
    expected = brute_force_distance_to_free(occ, 0.2)
    np.testing.assert_array_equal(got, expected)


# ---------------------------------------------------------------------------
# Gaussian smoothing


def test_constant_field_preserved():
    field = np.full((20, 20), 3.7)
    out = gaussian_smooth(field, sigma=1.5)
    np.testing.assert_allclose(out, field, rtol=1e-9)


def test_impulse_center_weight():
    sigma = 1.0
    field = np.zeros((21, 21))
    field[10, 10] = 1.0
    out = gaussian_smooth(field, sigma)
    kernel = gaussian_kernel(sigma)
    center = kernel[len(kernel) // 2]
    assert out[10, 10] == pytest.approx(center * center, rel=1e-12)


def test_interior_mass_preserved():
    field = np.zeros((40, 40))
    field[15:25, 15:25] = RNG.uniform(0.0, 2.0, (10, 10))
    out = gaussian_smooth(field, sigma=2.0)
    assert out.sum() == pytest.approx(field.sum(), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    field=hnp.arrays(
        dtype=np.float64,
        shape=st.tuples(st.integers(3, 16), st.integers(3, 16)),
        elements=st.floats(0.0, 100.0),
    ),
    sigma=st.sampled_from([0.5, 1.0, 2.0, 3.5]),
)
def test_smoothing_stays_nonnegative(field, sigma):
    assert (gaussian_smooth(field, sigma) >= 0.0).all()


def test_sigma_must_be_positive():
    with pytest.raises(ValueError, match="sigma"):
        gaussian_smooth(np.zeros((4, 4)), 0.0)


# ---------------------------------------------------------------------------
# build


def test_build_composes_the_two_stages():
    occ_interior = RNG.random((14, 14)) < 0.2
    world = _bounded_world(occ_interior, cell_size=0.1)
    sigma = 2.0
    cm = build_costmap(world, sigma=sigma)
    raw = brute_force_distance_to_free(world.occupancy, world.cell_size)
    smoothed = gaussian_smooth(raw, sigma)
    peak = smoothed.max()
    expected = (smoothed / peak).astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(cm.grid, expected)
    assert cm.grid.max() == pytest.approx(1.0, rel=1e-6)


def test_empty_interior_world_is_zero_away_from_walls():
    world = _bounded_world(np.zeros((30, 30), dtype=bool), cell_size=0.1)
    cm = build_costmap(world, sigma=2.0)
    reach = math.ceil(3 * 2.0)
    interior = cm.grid[1 + reach + 1 : -(1 + reach + 1), 1 + reach + 1 : -(1 + reach + 1)]
    np.testing.assert_array_equal(interior, 0.0)
    assert cm.grid[0, 15] > 0.0  # wall cells carry cost


def test_cost_decays_from_block_center():
    occ_interior = np.zeros((38, 38), dtype=bool)
    occ_interior[12:17, 12:17] = True  # block cells 13..17 after the wall offset
    world = _bounded_world(occ_interior, cell_size=0.1)
    cm = build_costmap(world, sigma=2.0, normalize=False)
    center = cm.grid[15, 15]
    boundary = cm.grid[17, 15]
    outside = cm.grid[20, 15]
    far = cm.grid[26, 26]  # Chebyshev 9 from the block, 13 from the walls
    assert center > boundary > outside > far
    assert far == 0.0


def test_far_field_is_exactly_zero_chebyshev():
    # beyond the truncated kernel reach (Chebyshev), smoothing cannot spread cost
    occ_interior = np.zeros((40, 40), dtype=bool)
    occ_interior[18:22, 18:22] = True
    world = _bounded_world(occ_interior, cell_size=0.1)
    sigma = 2.0
    cm = build_costmap(world, sigma=sigma, normalize=False)
    reach = math.ceil(3 * sigma)
    occ = np.asarray(world.occupancy)
    obstacle_cells = np.argwhere(occ)
    for cell in [(31, 31), (10, 31), (31, 10)]:
        cheb = np.abs(obstacle_cells - np.asarray(cell)).max(axis=1).min()
        assert cheb > reach + 1
        assert cm.grid[cell] == 0.0


# ---------------------------------------------------------------------------
# sampling


def _demo_map() -> CostMap:
    grid = RNG.uniform(0.0, 1.0, (12, 10))
    return CostMap(grid=grid, cell_size=0.1, origin=np.array([0.05, 0.05]), sigma=1.0)


def test_sample_at_cell_center_is_exact():
    cm = _demo_map()
    for cell in [(0, 0), (3, 7), (11, 9)]:
        p = cm.origin + np.asarray(cell) * cm.cell_size
        assert sample(cm, p) == pytest.approx(cm.grid[cell], abs=1e-12)


def test_sample_midpoint_of_two_centers():
    grid = np.zeros((4, 3))
    grid[2, 1] = 1.0
    cm = CostMap(grid=grid, cell_size=0.1, origin=np.array([0.05, 0.05]), sigma=1.0)
    p = cm.origin + np.array([1.5, 1.0]) * cm.cell_size
    assert sample(cm, p) == pytest.approx(0.5, abs=1e-12)


def test_gradient_matches_central_differences_interior():
    cm = _demo_map()
    h = cm.cell_size / 100.0
    worst = 0.0
    for _ in range(100):
        # >= 1 cell from the faces; fractional part clear of the interpolation
        # nodes where the piecewise gradient kinks and FD is not a valid oracle
        base = RNG.integers(1, 8, size=2)
        p = cm.origin + (base + RNG.uniform(0.05, 0.95, size=2)) * cm.cell_size
        _, grad = sample_with_gradient(cm, p)
        fd = finite_difference_gradient(lambda q: sample(cm, q), p, h=h)
        scale = max(float(np.abs(fd).max()), 1.0)
        worst = max(worst, float(np.abs(grad - fd).max()) / scale)
    assert worst < 1e-5


def test_gradient_at_cell_center_is_forward_difference():
    cm = _demo_map()
    cell = (4, 5)
    p = cm.origin + np.asarray(cell) * cm.cell_size
    value, grad = sample_with_gradient(cm, p)
    assert value == pytest.approx(cm.grid[cell], abs=1e-12)
    fwd = np.array(
        [
            (cm.grid[5, 5] - cm.grid[4, 5]) / cm.cell_size,
            (cm.grid[4, 6] - cm.grid[4, 5]) / cm.cell_size,
        ]
    )
    np.testing.assert_allclose(grad, fwd, atol=1e-12)


def test_sampler_is_lipschitz_continuous():
    cm = _demo_map()
    lipschitz = np.abs(np.diff(cm.grid, axis=0)).max() + np.abs(np.diff(cm.grid, axis=1)).max()
    lipschitz = lipschitz / cm.cell_size + 2.0  # interpolation bound plus oob slope
    for _ in range(300):
        p = RNG.uniform(-0.3, 1.4, size=2)
        delta = RNG.uniform(-1e-4, 1e-4, size=2)
        assert abs(sample(cm, p + delta) - sample(cm, p)) <= lipschitz * np.linalg.norm(delta) + 1e-12


def test_out_of_bounds_penalty_pushes_back():
    cm = _demo_map()
    inside = cm.origin + np.array([5.0, 5.0]) * cm.cell_size
    border = cm.origin + np.array([11.0, 5.0]) * cm.cell_size  # top cell center in x
    outside = border + np.array([0.37, 0.0])
    v_border = sample(cm, border)
    v_out, grad = sample_with_gradient(cm, outside)
    assert v_out == pytest.approx(v_border + 1.0 * 0.37, abs=1e-9)
    assert grad[0] == pytest.approx(1.0)  # pointing further out costs more
    assert sample(cm, inside) < v_out or v_out > 0


def test_sample_costs_backward_matches_finite_differences():
    cm = _demo_map()
    pts = cm.origin + RNG.uniform(0.5, 8.5, size=(7, 2)) * cm.cell_size
    weights = RNG.standard_normal(7)

    tape = ad.Tape()
    leaf = tape.leaf(pts)
    root = ad.tsum(ad.mul(sample_costs(cm, leaf), weights))
    tape.backward(root)

    def scalar(flat):
        values, _ = sample_values_and_grads(cm, flat.reshape(7, 2))
        return float((values * weights).sum())

    fd = finite_difference_gradient(scalar, pts, h=cm.cell_size / 100)
    np.testing.assert_allclose(leaf.grad, fd, atol=1e-7)


def test_costmap_rejects_negative_values():
    with pytest.raises(ValueError, match="non-negative"):
        CostMap(grid=np.array([[-0.1]]), cell_size=0.1, origin=np.zeros(2), sigma=1.0)


def test_build_is_deterministic():
    occ_interior = RNG.random((10, 10)) < 0.3
    world = _bounded_world(occ_interior)
    a = build_costmap(world, sigma=1.5)
    b = build_costmap(world, sigma=1.5)
    assert a.grid.tobytes() == b.grid.tobytes()


# ---------------------------------------------------------------------------
# export


def test_export_roundtrip_exact(tmp_path):
    occ_interior = RNG.random((12, 12)) < 0.25
    world = _bounded_world(occ_interior)
    cm = build_costmap(world, sigma=2.0)
    sidecar = export_costmap(cm, tmp_path / "map")
    assert set(sidecar) == {"version", "cell_size", "origin", "sigma", "scale", "shape"}
    back = load_costmap(tmp_path / "map")
    assert back.grid.tobytes() == cm.grid.tobytes()
    assert back.cell_size == cm.cell_size
    assert back.sigma == cm.sigma
    np.testing.assert_array_equal(back.origin, cm.origin)

    pgm = (tmp_path / "map.pgm").read_bytes()
    assert pgm.startswith(b"P5\n14 14\n65535\n")
    pixels = np.frombuffer(pgm.split(b"65535\n", 1)[1], dtype=">u2")
    assert pixels.size == 14 * 14
    assert pixels.max() == 65535  # peak maps to full scale
