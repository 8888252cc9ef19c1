import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerfsynth.boundary import (
    CORNERS,
    SIDES,
    BoundarySynthesizer,
    audit_provenance,
    boundary_constrained_synthesize,
    partition,
    place_corners,
    region_patchset,
    synthesize_interior,
    synthesize_strip,
)
from nerfsynth.exceptions import BoundaryTooLargeError, ExemplarTooSmallError, NoCandidatesError
from nerfsynth.synthesis import Canvas, SynthesisParams

from conftest import random_columns

GREEDY = SynthesisParams(extraction_step=5, greedy=True)


def classify(i, j, shape, b):
    nx, ny = shape
    up, down, left, right = i < b, i >= nx - b, j < b, j >= ny - b
    if (up or down) and (left or right):
        return "corner"
    if up:
        return "up"
    if down:
        return "down"
    if left:
        return "left"
    if right:
        return "right"
    return "interior"


# ---------------------------------------------------------------- partition


def test_zero_width_is_all_interior():
    part = partition((30, 20), 0)
    assert part.cell_count("interior") == 600
    assert all(part.cell_count(s) == 0 for s in SIDES + ("corner",))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.integers(3, 40), st.integers(0, 19))
def test_regions_tile_and_match_coordinates(nx, ny, b):
    if 2 * b >= min(nx, ny):
        with pytest.raises(BoundaryTooLargeError):
            partition((nx, ny), b)
        return
    part = partition((nx, ny), b)
    total = sum(part.cell_count(r) for r in SIDES + ("interior", "corner"))
    assert total == nx * ny
    labels = part.labels()
    for i in range(nx):
        for j in range(ny):
            assert labels[i, j] == classify(i, j, (nx, ny), b)


def test_boundary_too_large():
    with pytest.raises(BoundaryTooLargeError):
        partition(random_columns((20, 30)), 10)
    with pytest.raises(BoundaryTooLargeError):
        partition((20, 30), -1)


def test_region_patchsets_stay_inside_their_sources():
    img = random_columns((45, 45))
    part = partition(img, 15)
    params = SynthesisParams(extraction_step=1)
    for region in SIDES + ("interior",):
        ps = region_patchset(img.data, img.n_z, img.data.shape[2], part, region, params)
        x0, x1, y0, y1 = part.source_bounds(region, params.overlap)
        h, w = ps.size
        assert len(ps) > 0
        assert np.all(ps.ox >= x0) and np.all(ps.ox + h <= x1)
        assert np.all(ps.oy >= y0) and np.all(ps.oy + w <= y1)


# ---------------------------------------------------------------- corners


def test_corners_copied_verbatim():
    img = random_columns((40, 44), seed=1)
    part = partition(img, 12)
    canvas = Canvas((70, 61), img.data.shape[2])
    log = place_corners(canvas, img.data, part)
    assert len(log) == 4
    b = 12
    np.testing.assert_array_equal(canvas.values[:b, :b], img.data[:b, :b])
    np.testing.assert_array_equal(canvas.values[:b, -b:], img.data[:b, -b:])
    np.testing.assert_array_equal(canvas.values[-b:, :b], img.data[-b:, :b])
    np.testing.assert_array_equal(canvas.values[-b:, -b:], img.data[-b:, -b:])
    assert canvas.filled.sum() == 4 * b * b
    assert canvas.locked.sum() == 4 * b * b
    assert not canvas.values[b:-b].any() and not canvas.values[:, b:-b].any()


def test_corners_same_size_canvas_land_in_place():
    img = random_columns((40, 40), seed=2)
    canvas = Canvas(img.shape, img.data.shape[2])
    place_corners(canvas, img.data, partition(img, 15))
    np.testing.assert_array_equal(canvas.values[canvas.filled], img.data[canvas.filled])


# ---------------------------------------------------------------- strips and interior


def _corner_canvas(img, b, out=None):
    part = partition(img, b)
    canvas = Canvas(out or img.shape, img.data.shape[2], img.data.dtype)
    place_corners(canvas, img.data, part)
    return part, canvas


@pytest.mark.parametrize("side", SIDES)
def test_strip_self_reproduction(pebbles_columns, side):
    img = pebbles_columns
    part, canvas = _corner_canvas(img, 15)
    ps = region_patchset(img.data, img.n_z, img.data.shape[2], part, side, GREEDY)
    log = synthesize_strip(canvas, side, ps, part, GREEDY, np.random.default_rng(0))
    x0, x1, y0, y1 = part.rect(side)
    np.testing.assert_array_equal(canvas.values[x0:x1, y0:y1], img.data[x0:x1, y0:y1])
    assert audit_provenance(log, part, canvas.shape, GREEDY.overlap) == 1.0


@pytest.mark.parametrize("side", SIDES)
def test_strip_provenance_and_determinism(side):
    img = random_columns((40, 40), seed=3)
    params = SynthesisParams(extraction_step=2)
    outs = []
    for _ in range(2):
        part, canvas = _corner_canvas(img, 15, (80, 70))
        ps = region_patchset(img.data, img.n_z, img.data.shape[2], part, side, params)
        log = synthesize_strip(canvas, side, ps, part, params, np.random.default_rng(9))
        assert audit_provenance(log, part, canvas.shape, params.overlap) == 1.0
        assert all(r.region == side for r in log)
        outs.append(canvas.values.copy())
    np.testing.assert_array_equal(outs[0], outs[1])


def test_interior_overlaps_frame_and_sources_interior():
    img = random_columns((45, 45), seed=4)
    params = SynthesisParams(extraction_step=3)
    part, canvas = _corner_canvas(img, 15, (70, 70))
    rng = np.random.default_rng(0)
    for side in SIDES:
        ps = region_patchset(img.data, img.n_z, img.data.shape[2], part, side, params)
        synthesize_strip(canvas, side, ps, part, params, rng)
    assert canvas.filled.sum() == 70 * 70 - 40 * 40
    ps = region_patchset(img.data, img.n_z, img.data.shape[2], part, "interior", params)
    first = (15 - params.overlap, 15 - params.overlap)
    _, mask = canvas.overlap(first, ps.size)
    assert mask[: params.overlap].all() and mask[:, : params.overlap].all()
    log = synthesize_interior(canvas, ps, part, params, rng)
    assert all(r.region == "interior" for r in log)
    assert all(r.d_density >= 0 for r in log)
    assert audit_provenance(log, part, canvas.shape, params.overlap) == 1.0
    assert canvas.filled.all()


# ---------------------------------------------------------------- whole procedure


def test_full_run_reproduces_exemplar(pebbles_columns):
    est = BoundarySynthesizer(patch_size=15, extraction_step=5, greedy=True, random_state=0)
    out = est.fit_synthesize(pebbles_columns, pebbles_columns.shape, seed_patch=0)
    np.testing.assert_array_equal(out.data, pebbles_columns.data)
    assert est.provenance() == 1.0


@pytest.mark.parametrize("l_b", [0, 8, 15])
def test_full_run_corners_and_provenance(l_b):
    img = random_columns((48, 48), seed=5)
    est = BoundarySynthesizer(boundary_width=l_b, extraction_step=3, random_state=1)
    out = est.fit_synthesize(img, (75, 62))
    assert out.shape == (75, 62)
    if l_b:
        b = l_b
        np.testing.assert_array_equal(out.data[:b, :b], img.data[:b, :b])
        np.testing.assert_array_equal(out.data[-b:, -b:], img.data[-b:, -b:])
    assert est.provenance() == 1.0
    assert est.canvas_.filled.all()
    regions = {r.region for r in est.placements_}
    assert regions == ({"interior"} if l_b == 0 else {"corner", "interior", *SIDES})


def test_audit_catches_wrong_source():
    img = random_columns((45, 45), seed=6)
    est = BoundarySynthesizer(random_state=0)
    est.fit_synthesize(img, 60)
    log = list(est.placements_)
    bad = next(r for r in log if r.region == "up")
    bad.region = "interior"
    assert audit_provenance(log, est.partition_, est.canvas_.shape, 5) < 1.0


def test_functional_wrapper_and_errors():
    img = random_columns((45, 45), seed=7)
    out, log = boundary_constrained_synthesize(img, 60, 15, SynthesisParams(), np.random.default_rng(0))
    assert out.shape == (60, 60) and log
    with pytest.raises(ExemplarTooSmallError):
        BoundarySynthesizer(random_state=0).fit_synthesize(img, 40)
    # a strip too short to hold one window along its length
    with pytest.raises(NoCandidatesError):
        BoundarySynthesizer(boundary_width=8, random_state=0).fit_synthesize(random_columns((20, 20)), 40)
