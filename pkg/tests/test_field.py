import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerfsynth.field import (
    EMPTY_DENSITY,
    Camera,
    ColorHead,
    RenderConfig,
    VoxelField,
    alpha_from_sigma,
    interp,
    look_at,
    post_activated_alpha,
    ray_weights,
    render_depth,
    render_image,
    render_ray,
    render_rays,
    sample_hemisphere_cameras,
    softplus,
)

from conftest import UNIT_BOX, empty_field, make_field


def corner_sum(x, grid, bbox):
    """Eight-corner weighted sum written out per point."""
    dims = np.array(grid.shape)
    g = (x - bbox[0]) / (bbox[1] - bbox[0]) * (dims - 1)
    base = np.minimum(np.floor(g).astype(int), dims - 2)
    f = g - base
    total = 0.0
    for c in itertools.product((0, 1), repeat=3):
        w = np.prod([f[a] if c[a] else 1 - f[a] for a in range(3)])
        total += w * grid[base[0] + c[0], base[1] + c[1], base[2] + c[2]]
    return total


# ---------------------------------------------------------------- interpolation


def test_interp_at_nodes_returns_node_values():
    rng = np.random.default_rng(0)
    grid = rng.normal(size=(4, 5, 6))
    bbox = np.array([[-1.0, 0.0, 2.0], [1.0, 2.0, 3.0]])
    idx = np.array(list(itertools.product(range(4), range(5), range(6))))
    pts = bbox[0] + idx / (np.array(grid.shape) - 1) * (bbox[1] - bbox[0])
    np.testing.assert_allclose(interp(pts, grid, bbox), grid[tuple(idx.T)], atol=1e-12)


def test_interp_midpoint_is_half():
    grid = np.zeros((2, 2, 2))
    grid[1] = 1.0
    assert interp(np.array([0.5, 0.3, 0.7]), grid, UNIT_BOX) == pytest.approx(0.5)


def test_interp_matches_corner_sum():
    rng = np.random.default_rng(1)
    grid = rng.normal(size=(6, 7, 5))
    bbox = np.array([[0.0, -1.0, 0.5], [2.0, 1.0, 1.5]])
    pts = rng.uniform(bbox[0], bbox[1], size=(200, 3))
    got = interp(pts, grid, bbox)
    want = np.array([corner_sum(p, grid, bbox) for p in pts])
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_interp_feature_grid_is_per_channel():
    rng = np.random.default_rng(2)
    feat = rng.normal(size=(3, 4, 4, 4))
    pts = rng.uniform(0, 1, size=(10, 3))
    got = interp(pts, feat, UNIT_BOX)
    assert got.shape == (10, 3)
    for c in range(3):
        np.testing.assert_allclose(got[:, c], interp(pts, feat[c], UNIT_BOX), atol=1e-12)


def test_interp_clamps_outside_points():
    rng = np.random.default_rng(3)
    grid = rng.normal(size=(3, 3, 3))
    outside = np.array([[-5.0, 0.5, 0.5], [0.5, 9.0, 0.5]])
    clamped = np.clip(outside, 0.0, 1.0)
    np.testing.assert_allclose(interp(outside, grid, UNIT_BOX), interp(clamped, grid, UNIT_BOX))


# ---------------------------------------------------------------- activation and alpha


def test_softplus_values():
    assert softplus(0.0) == pytest.approx(np.log(2.0), abs=1e-12)
    assert softplus(-40.0) < 1e-15
    assert softplus(40.0) == pytest.approx(40.0, abs=1e-6)
    assert np.isfinite(softplus(1e6))


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_softplus_positive_and_monotone(a, b):
    lo, hi = sorted((a, b))
    assert softplus(lo) > 0
    assert softplus(lo) <= softplus(hi)


def test_alpha_from_empty_neighbourhood_is_zero():
    f = empty_field()
    assert post_activated_alpha(np.array([[0.3, 0.4, 0.5]]), f, 0.1)[0] < 1e-12


def test_alpha_interpolates_before_activation():
    rng = np.random.default_rng(4)
    f = make_field(rng.normal(0, 3, size=(4, 4, 4)))
    x = rng.uniform(0, 1, size=(20, 3))
    delta = 0.05
    for p, a in zip(x, post_activated_alpha(x, f, delta)):
        r = corner_sum(p, f.density.astype(np.float64), UNIT_BOX)
        want = 1.0 - np.exp(-np.log1p(np.exp(r)) * delta)
        assert a == pytest.approx(want, abs=1e-6)


def test_alpha_zero_step_is_zero():
    f = make_field(np.full((3, 3, 3), 50.0))
    assert post_activated_alpha(np.array([[0.5, 0.5, 0.5]]), f, 0.0)[0] == 0.0


# ---------------------------------------------------------------- color head


def test_zero_head_gives_half_grey():
    n_feat = 4
    width = n_feat + 6 * 5 + 6 * 4
    head = ColorHead([np.zeros((8, width)), np.zeros((3, 8))], [np.zeros(8), np.zeros(3)])
    rgb = head(np.ones((2, n_feat)), np.zeros((2, 3)), np.array([[0, 0, 1.0]] * 2))
    np.testing.assert_allclose(rgb, 0.5)


def test_head_matches_dense_oracle():
    head = ColorHead.random(5, hidden=(7, 6), pe_degrees_x=2, pe_degrees_d=1, seed=3)
    rng = np.random.default_rng(5)
    feat = rng.normal(size=(4, 5))
    x = rng.uniform(-1, 1, size=(4, 3))
    d = rng.normal(size=(4, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    got = head(feat, x, d)
    for i in range(4):
        enc = [feat[i]]
        for v, deg in ((x[i], 2), (d[i], 1)):
            for k in range(deg):
                enc.append(np.sin(v * 2.0 ** k))
                enc.append(np.cos(v * 2.0 ** k))
        h = np.concatenate(enc)
        for w, b in zip(head.weights[:-1], head.biases[:-1]):
            h = np.maximum(w @ h + b, 0)
        want = 1 / (1 + np.exp(-(head.weights[-1] @ h + head.biases[-1])))
        np.testing.assert_allclose(got[i], want, atol=1e-6)


def test_head_direction_independent_when_direction_weights_zero():
    head = ColorHead.random(3, hidden=(8,), seed=1)
    head.weights[0][:, head.direction_columns(3)] = 0.0
    feat = np.array([[0.2, -0.1, 0.4]])
    x = np.array([[0.1, 0.2, 0.3]])
    a = head(feat, x, np.array([[0.0, 0.0, 1.0]]))
    b = head(feat, x, np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_array_equal(a, b)


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_head_output_in_unit_range(vals):
    head = ColorHead.random(3, hidden=(8,), seed=2)
    rgb = head(np.array([vals]), np.array([vals]), np.array([[0.0, 0.0, 1.0]]))
    assert np.all(np.isfinite(rgb)) and np.all((rgb >= 0) & (rgb <= 1))


def test_head_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ColorHead([np.zeros((3, 4)), np.zeros((3, 5))], [np.zeros(3), np.zeros(3)])


# ---------------------------------------------------------------- field type


def test_field_rejects_mismatched_or_degenerate_inputs():
    head = ColorHead.linear_rgb(2)
    with pytest.raises(ValueError):
        VoxelField(np.zeros((3, 3, 3)), np.zeros((2, 3, 3, 4)), UNIT_BOX, head)
    with pytest.raises(ValueError):
        VoxelField(np.full((3, 3, 3), np.nan), np.zeros((2, 3, 3, 3)), UNIT_BOX, head)
    with pytest.raises(ValueError):
        VoxelField(np.zeros((3, 3, 3)), np.zeros((2, 3, 3, 3)), [[0, 0, 0], [1, 0, 1]], head)


def test_render_config_invariants():
    with pytest.raises(ValueError):
        RenderConfig(near=1.0, far=1.0)
    with pytest.raises(ValueError):
        RenderConfig(n_samples=1)


# ---------------------------------------------------------------- rendering

DOWN = np.array([0.0, 0.0, -1.0])


def test_empty_field_renders_background():
    cfg = RenderConfig(0.0, 3.0, 64, bg_color=(0.2, 0.4, 0.6))
    rgb, t_last = render_ray([0.5, 0.5, 2.0], DOWN, empty_field(), cfg)
    np.testing.assert_allclose(rgb, [0.2, 0.4, 0.6], atol=1e-12)
    assert t_last == pytest.approx(1.0)
    assert render_depth([0.5, 0.5, 2.0], DOWN, empty_field(), cfg) == pytest.approx(0.0)


def test_opaque_first_sample_gives_its_color():
    logits = np.array([1.0, -0.5, 0.3])
    feat = np.broadcast_to(logits[:, None, None, None], (3, 3, 3, 3)).astype(np.float32)
    f = make_field(np.full((3, 3, 3), 1e4), feat)
    rgb, t_last = render_ray([0.5, 0.5, 2.0], DOWN, f, RenderConfig(0.0, 3.0, 32, bg_color=(0, 0, 0)))
    np.testing.assert_allclose(rgb, 1 / (1 + np.exp(-logits)), atol=1e-9)
    assert t_last < 1e-12


def test_ray_missing_box_sees_background():
    f = make_field(np.full((3, 3, 3), 1e4))
    rgb, t_last = render_ray([5.0, 5.0, 2.0], DOWN, f, RenderConfig(0.0, 3.0, 16, bg_color=(0, 1, 0)))
    np.testing.assert_allclose(rgb, [0, 1, 0])
    assert t_last == 1.0


def test_uniform_slab_transmittance_matches_beer_lambert():
    sigma = 2.5
    raw = np.log(np.expm1(sigma))
    f = make_field(np.full((4, 4, 4), raw))
    for n in (64, 256, 1024):
        _, t_last = render_ray([0.5, 0.5, 3.0], DOWN, f, RenderConfig(0.0, 6.0, n))
        if n == 1024:
            assert t_last == pytest.approx(np.exp(-sigma * 1.0), abs=1e-3)


def test_partition_of_unity_and_monotone_transmittance():
    rng = np.random.default_rng(7)
    f = make_field(rng.normal(0, 4, size=(8, 8, 8)))
    o = rng.uniform(-0.5, 1.5, size=(500, 3))
    d = rng.normal(size=(500, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    res = render_rays(o, d, f, RenderConfig(0.0, 4.0, 64), return_weights=True)
    np.testing.assert_allclose(res["weights"].sum(1) + res["transmittance"], 1.0, atol=1e-6)
    alpha = np.clip(rng.uniform(size=(50, 20)), 0, 1)
    _, trans = ray_weights(alpha)
    assert np.all(np.diff(trans, axis=1) <= 1e-15)


def test_depth_of_opaque_plane():
    nz = 65
    # symmetric, very high contrast so the opacity jump sits at the zero crossing
    dens = np.full((3, 3, nz), -1e7)
    dens[:, :, : nz // 2 + 1] = 1e7  # filled up to z = 0.5
    f = make_field(dens)
    cfg = RenderConfig(0.0, 4.0, 512)
    o = np.array([0.5, 0.5, 2.0])
    # interpolated raw density crosses zero halfway between the last full and first empty layer
    z_surface = 0.5 + 0.5 / (nz - 1)
    t_star = o[2] - z_surface
    step = 1.0 / cfg.n_samples  # the ray is clipped to the box, t in [1, 2]
    assert render_depth(o, DOWN, f, cfg) == pytest.approx(t_star, abs=step)


def test_depth_two_half_opacity_surfaces():
    cfg = RenderConfig(0.0, 4.0, 100)
    o = np.array([[0.5, 0.5, 1.0]])
    step = 1.0 / cfg.n_samples
    i1, i2 = 30, 70
    t = step * np.arange(1, cfg.n_samples + 1)
    raw_half = np.log(np.expm1(np.log(2.0) / step))  # alpha = 1/2 over one step

    def sampler(points):
        idx = np.rint((1.0 - points[:, 2]) / step).astype(int) - 1
        raw = np.where((idx == i1) | (idx == i2), raw_half, EMPTY_DENSITY)
        return raw, np.zeros((len(points), 3)), points

    res = render_rays(o, DOWN[None], empty_field(), cfg, sampler=sampler)
    want = 0.5 * t[i1] + 0.25 * t[i2]
    assert res["depth"][0] == pytest.approx(want, abs=1e-9)


def test_depth_weights_equal_color_weights():
    rng = np.random.default_rng(8)
    f = make_field(rng.normal(0, 3, size=(6, 6, 6)))
    o = np.array([[0.5, 0.4, 2.0]])
    res = render_rays(o, DOWN[None], f, RenderConfig(0.0, 4.0, 40), return_weights=True)
    assert res["depth"][0] == pytest.approx(float(res["weights"][0] @ res["t"][0]))


# ---------------------------------------------------------------- images and cameras


def test_one_pixel_image_matches_single_ray():
    rng = np.random.default_rng(9)
    f = make_field(rng.normal(0, 3, size=(6, 6, 6)), rng.normal(size=(3, 6, 6, 6)))
    cam = Camera(look_at([0.5, 0.5, 2.0], [0.5, 0.5, 0.0]), 1.0, 1, 1)
    cfg = RenderConfig(0.0, 4.0, 64)
    rgb, depth = render_image(cam, f, cfg)
    o, d = cam.rays()
    want_rgb, _ = render_ray(o[0], d[0], f, cfg)
    np.testing.assert_allclose(rgb[0, 0], want_rgb)
    assert depth[0, 0] == pytest.approx(render_depth(o[0], d[0], f, cfg))


def test_empty_image_is_background_and_deterministic():
    cam = Camera(look_at([0.5, -1.0, 1.5], [0.5, 0.5, 0.5]), 10.0, 8, 6)
    cfg = RenderConfig(0.0, 5.0, 32, bg_color=(0.1, 0.2, 0.3))
    rgb, _ = render_image(cam, empty_field(), cfg)
    np.testing.assert_allclose(rgb, np.broadcast_to([0.1, 0.2, 0.3], rgb.shape))
    f = make_field(np.random.default_rng(0).normal(0, 3, (5, 5, 5)))
    a, da = render_image(cam, f, cfg)
    b, db = render_image(cam, f, cfg)
    assert np.array_equal(a, b) and np.array_equal(da, db)


def test_camera_rejects_bad_pose():
    with pytest.raises(ValueError):
        Camera(np.diag([2.0, 1.0, 1.0, 1.0]), 1.0, 2, 2)
    with pytest.raises(ValueError):
        Camera(np.eye(4), 0.0, 2, 2)


def test_hemisphere_cameras():
    center = np.array([0.5, 0.5, 0.2])
    a = sample_hemisphere_cameras(1, 2.0, seed=4, center=center)
    b = sample_hemisphere_cameras(1, 2.0, seed=4, center=center)
    np.testing.assert_array_equal(a[0].c2w, b[0].c2w)
    cams = sample_hemisphere_cameras(40, 2.0, seed=1, center=center)
    for cam in cams:
        assert cam.origin[2] >= center[2]
        to_center = center - cam.origin
        to_center /= np.linalg.norm(to_center)
        assert np.dot(cam.forward, to_center) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        sample_hemisphere_cameras(0, 1.0)


def test_alpha_from_sigma_is_probability():
    a = alpha_from_sigma(np.array([0.0, 1.0, 1e9]), 0.1)
    assert a[0] == 0.0 and 0 < a[1] < 1 and a[2] == pytest.approx(1.0)
