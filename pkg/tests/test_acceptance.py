"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The lines are also repeated in the terminal summary (see conftest.py).
"""
import os
import tempfile
import time

import numpy as np

from nerfsynth.bench import format_table, run_bench
from nerfsynth.boundary import BoundarySynthesizer
from nerfsynth.columns import flatten, unflatten
from nerfsynth.deform import DeformationField, mlp_gradient, render_deformed
from nerfsynth.field import Camera, RenderConfig, look_at, render_image, render_rays
from nerfsynth.io import save_field
from nerfsynth.procedural import ProcExemplarSpec, generate_field
from nerfsynth.shading import (
    Light,
    ShadingConfig,
    ShadingGuidedSynthesizer,
    ShadingMap,
    ShadingRig,
    build_guider,
    build_shading_map_rt,
    fill_holes_knn,
    median_repair,
    normalize_pair,
    ray_traced_brightness,
    select_channels,
    shading_distance,
)
from nerfsynth.synthesis import PatchSet, PatchSynthesizer

from conftest import make_field

RESULTS = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------- 1. two-phase speedup


def test_criterion_1_two_phase_speedup():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        bundle = os.path.join(tmp, "desk")
        save_field(generate_field(ProcExemplarSpec("pebbles", (96, 96, 48), seed=0)), bundle)
        rows = run_bench(bundle, (100, 200, 300, 400), repeats=1, seed=0)
    print(format_table(rows))
    ratios = [r.ratio for r in rows]
    floor = all(q >= 5.0 for q in ratios)
    monotone = all(b >= a for a, b in zip(ratios, ratios[1:]))
    report(1, floor and monotone,
           f"ratios {', '.join(f'{q:.2f}' for q in ratios)}; >=5x at every size: {floor}; "
           f"non-decreasing: {monotone} ({time.perf_counter() - t0:.0f}s)")
    assert floor, "two-phase is not 5x faster at every size"
    assert monotone, "speedup ratio decreases with output size"


# ---------------------------------------------------------------- 2. self-reproduction


def test_criterion_2_self_reproduction(pebbles_columns):
    ex = pebbles_columns
    two = PatchSynthesizer(extraction_step=5, greedy=True, random_state=0).fit_synthesize(ex, ex.shape, seed_patch=0)
    bnd = BoundarySynthesizer(extraction_step=5, greedy=True, random_state=0).fit_synthesize(ex, ex.shape, seed_patch=0)
    ok_two = np.array_equal(two.data, ex.data)
    ok_bnd = np.array_equal(bnd.data, ex.data)
    report(2, ok_two and ok_bnd, f"exemplar {ex.shape}: two-phase exact {ok_two}, boundary exact {ok_bnd}")
    assert ok_two and ok_bnd


# ---------------------------------------------------------------- 3. rendering oracle


def test_criterion_3_rendering_oracle():
    sigma, length = 2.5, 1.0
    f = make_field(np.full((4, 4, 4), np.log(np.expm1(sigma))))
    res = render_rays(np.array([[0.5, 0.5, 3.0]]), np.array([[0.0, 0.0, -1.0]]), f, RenderConfig(0.0, 6.0, 1024))
    t_err = abs(res["transmittance"][0] - np.exp(-sigma * length))

    rng = np.random.default_rng(3)
    g = make_field(rng.normal(0, 4, (10, 10, 10)))
    o = rng.uniform(-0.5, 1.5, (10_000, 3))
    d = rng.normal(size=(10_000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = render_rays(o, d, g, RenderConfig(0.0, 4.0, 64), return_weights=True)
    pou = np.abs(r["weights"].sum(1) + r["transmittance"] - 1.0).max()
    ok = t_err <= 1e-3 and pou <= 1e-6
    report(3, ok, f"|T - exp(-sigma L)| = {t_err:.2e} (tol 1e-3); partition of unity max err {pou:.2e} "
                  f"over 1e4 rays (tol 1e-6)")
    assert ok


# ---------------------------------------------------------------- 4. ANN exactness


def test_criterion_4_ann_exactness():
    field = generate_field(ProcExemplarSpec("pebbles", (64, 64, 16), n_features=4, seed=5))
    ex = flatten(field)
    ps = PatchSet(ex.data, ex.n_z, ex.data.shape[2], (15, 15), 1, (0,))
    mask = np.zeros((15, 15), bool)
    mask[:5] = True
    mask[:, :5] = True
    rng = np.random.default_rng(0)
    mismatches = 0
    checked = 0
    for selector in ("density", "feature"):
        idx = ps.index(mask, selector)
        chans = ps.channels(selector)
        # independent route: vectors cut straight from each window
        brute = np.stack([ps.window(p)[mask][:, chans].reshape(-1) for p in range(len(ps))]).astype(np.float64)
        picks = rng.integers(len(ps), size=500)
        queries = brute[picks] + rng.normal(0, 0.05 * brute.std(), (500, brute.shape[1]))
        for q in queries:
            d = np.sqrt(((brute - q) ** 2).sum(1))
            ranked = np.lexsort((np.arange(len(d)), d))
            for k in (1, 10, 20):
                _, ids = idx.tree.query(q, k)
                want = ranked[:k]
                mismatches += not np.array_equal(ids, want)
                checked += 1
    report(4, mismatches == 0, f"1000 queries x k in (1, 10, 20) = {checked} searches over {len(ps)} "
                               f"windows of a 64x64 exemplar: {mismatches} mismatches")
    assert mismatches == 0


# ---------------------------------------------------------------- 5. shading physics


def _slab(nz=65):
    dens = np.full((9, 9, nz), -1e7)
    dens[:, :, : nz // 2 + 1] = 1e7
    return make_field(dens), 0.5 + 0.5 / (nz - 1)


def test_criterion_5_shading_physics():
    f, zs = _slab()
    x = np.array([[0.5, 0.5, zs - 0.003]])
    b1 = ray_traced_brightness(x, Light(x[0] + [0, 0, 1.0], 1.0), f)[0]
    b2 = ray_traced_brightness(x, Light(x[0] + [0, 0, 2.0], 1.0), f)[0]
    ratio = b1 / b2

    dens = np.full((9, 9, 65), -1e7)
    dens[:, :, :33] = 1e7
    dens[:, :, 48:52] = 1e7
    occluded = ray_traced_brightness(x, Light([0.5, 0.5, 1.5], 1.0), make_field(dens))[0]

    rng = np.random.default_rng(1)
    h = make_field(np.where(np.arange(17)[None, None, :] < rng.integers(4, 12, (13, 13))[..., None], 60.0, -60.0))
    cams = [Camera(look_at([0.5, 0.5, 2.0], [0.5, 0.5, 0.5]), 20.0, 20, 20, orthographic=True),
            Camera(look_at([1.4, 0.2, 1.5], [0.5, 0.5, 0.3]), 20.0, 20, 20, orthographic=True)]
    cfg, rcfg = ShadingConfig(n_views=2, n_channels=2, n_s=24), RenderConfig(0.0, 4.0, 64)
    one = build_shading_map_rt(h, Light([0.3, 0.6, 1.4], 1.0), cams, cfg, rcfg).values
    three = build_shading_map_rt(h, Light([0.3, 0.6, 1.4], 3.0), cams, cfg, rcfg).values
    lin = np.abs(three - 3.0 * one).max() / max(np.abs(one).max(), 1e-300)

    ok = abs(ratio - 4.0) <= 0.04 and occluded < 1e-6 and lin <= 1e-9
    report(5, ok, f"b(1)/b(2) = {ratio:.4f} (4 +- 1%); occluded b = {occluded:.2e} (< 1e-6 I); "
                  f"linearity rel err {lin:.1e} (<= 1e-9)")
    assert ok


# ---------------------------------------------------------------- 6. hole filling and repair


def _smap(values, valid=None):
    valid = np.ones(values.shape, bool) if valid is None else valid
    return ShadingMap(values, valid, list(range(values.shape[2])))


def test_criterion_6_hole_filling_and_repair():
    rng = np.random.default_rng(2)
    valid = rng.random((20, 16, 3)) < 0.5
    const = fill_holes_knn(_smap(np.where(valid, 0.7, 0.0), valid))
    const_err = np.abs(const.values - 0.7).max()
    idem = np.array_equal(fill_holes_knn(const).values, const.values)

    i, j = np.meshgrid(np.arange(11), np.arange(11), indexing="ij")
    ramp = (1.0 + 0.3 * i - 0.2 * j + 5.0)[..., None]
    hole = np.ones(ramp.shape, bool)
    hole[5, 5, 0] = False
    ramp_err = abs(fill_holes_knn(_smap(np.where(hole, ramp, 0.0), hole), k=4).values[5, 5, 0] - ramp[5, 5, 0])

    base = np.full((9, 9, 2), 0.4)
    spiked = base.copy()
    spiked[3, 6, 0] = 80.0
    spiked[7, 1, 1] = 0.0
    impulse = np.abs(median_repair(_smap(spiked)).values - 0.4).max()

    ok = const_err <= 1e-12 and idem and ramp_err <= 1e-6 and impulse == 0.0
    report(6, ok, f"constant err {const_err:.1e}; idempotent {idem}; ramp err {ramp_err:.1e} (<= 1e-6); "
                  f"impulse residual {impulse:.1e}")
    assert ok


# ---------------------------------------------------------------- 7. boundary provenance


def test_criterion_7_boundary_provenance(pebbles_columns):
    runs = []
    for l_b, size, step, seed in [(15, (90, 90), 3, 0), (15, (120, 75), 2, 1), (8, (70, 100), 3, 2),
                                  (5, (60, 60), 1, 3), (15, (45, 45), 5, 4)]:
        est = BoundarySynthesizer(boundary_width=l_b, extraction_step=step, random_state=seed)
        est.fit_synthesize(pebbles_columns, size)
        runs.append(est.provenance())
    ok = all(p == 1.0 for p in runs)
    report(7, ok, f"region-correct fraction per run: {', '.join(f'{p:.3f}' for p in runs)}")
    assert ok


# ---------------------------------------------------------------- 8. shading guidance efficacy


def test_criterion_8_shading_guidance():
    t0 = time.perf_counter()
    field = generate_field(ProcExemplarSpec("pebbles", (48, 48, 24), seed=2))
    ex = flatten(field)
    rig = ShadingRig(n_views=50)
    cfg = ShadingConfig(n_views=50, n_channels=20, n_s=32)

    def rt(f, ids):
        return build_shading_map_rt(f, rig.light(f.bbox), rig.cameras(f, ids), cfg, rig.render_config(f, 64), ids)

    own = select_channels(rt(field, list(range(50))), cfg.n_channels)
    ids = own.view_order
    own = median_repair(fill_holes_knn(own, cfg.knn_k, cfg.eps), cfg.median_window)
    guider = build_guider("scale-up", exemplar_map=own, out_size=(96, 96))
    ex_n, g_n = normalize_pair(own, guider)

    guided, unguided, moved_g, moved_u = [], [], [], []
    for seed in range(5):
        est = ShadingGuidedSynthesizer(random_state=seed)
        out_g = est.fit_synthesize(ex, guider, own)
        plain = PatchSynthesizer(rotations=True, random_state=seed)
        out_u = plain.fit_synthesize(ex, (96, 96), aux=ex_n.values)
        guided.append(shading_distance(*normalize_pair(rt(unflatten(out_g), ids), guider)))
        unguided.append(shading_distance(*normalize_pair(rt(unflatten(out_u), ids), guider)))
        # shading carried along with the copied columns, for information only
        moved_g.append(shading_distance(est.shading_, g_n))
        moved_u.append(shading_distance(ShadingMap(np.maximum(plain.aux_, 0).astype(np.float64),
                                                   np.ones(plain.aux_.shape, bool), ids), g_n))
    mg, mu = float(np.mean(guided)), float(np.mean(unguided))
    print(f"per-seed recomputed L2: guided {np.round(guided, 4).tolist()} unguided {np.round(unguided, 4).tolist()}")
    print(f"transported-shading L2 (info): guided {np.mean(moved_g):.4f} unguided {np.mean(moved_u):.4f}")
    ok = mg <= mu
    report(8, ok, f"mean recomputed shading L2 to guider over 5 seeds: guided {mg:.4f} vs unguided {mu:.4f} "
                  f"({time.perf_counter() - t0:.0f}s)")
    assert ok, "guided output's recomputed shading is not closer to the guider than the unguided run"


# ---------------------------------------------------------------- 9. deformation


def test_criterion_9_deformation():
    rng = np.random.default_rng(4)
    sizes = [3, 16, 16, 16, 3]
    ws = [rng.normal(size=(o, i)) * 0.5 for i, o in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(size=o) * 0.1 for o in sizes[1:]]
    x, y = rng.normal(size=(32, 3)), rng.normal(size=(32, 3))
    _, gw, gb = mlp_gradient(ws, bs, x, y)
    worst = 0.0
    eps = 1e-6
    for params, grads in ((ws, gw), (bs, gb)):
        for p, g in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                keep = p[idx]
                p[idx] = keep + eps
                up = mlp_gradient(ws, bs, x, y)[0]
                p[idx] = keep - eps
                down = mlp_gradient(ws, bs, x, y)[0]
                p[idx] = keep
                num[idx] = (up - down) / (2 * eps)
            worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-300))

    pts = np.random.default_rng(5).uniform(-1, 1, (400, 3))
    fit = DeformationField(epochs=1500, learning_rate=3e-3, tol=1e-4, random_state=0).fit(pts, pts)

    f = make_field(rng.normal(0, 3, (9, 9, 9)), rng.normal(size=(3, 9, 9, 9)).astype(np.float32))
    cam = Camera(look_at([0.5, -1.2, 1.6], [0.5, 0.5, 0.5]), 30.0, 32, 24)
    cfg = RenderConfig(0.0, 4.0, 96)
    a, da = render_deformed(cam, DeformationField.constant(), f, cfg)
    b, db = render_image(cam, f, cfg)
    render_err = max(np.abs(a - b).max(), np.abs(da - db).max())

    ok = worst <= 1e-4 and fit.final_loss_ < 1e-4 and render_err <= 1e-6
    report(9, ok, f"gradient rel err {worst:.1e} (<= 1e-4); identity fit MSE {fit.final_loss_:.1e} (< 1e-4); "
                  f"zero-warp render diff {render_err:.1e} (<= 1e-6)")
    assert ok
