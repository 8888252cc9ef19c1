"""Shading vectors: per-column shading seen from a fixed set of viewpoints.

Two routes build a shading map over the column lattice of a field:

* projection of per-view shading images (smoothed first) onto the depth
  points of their pixels;
* ray tracing a point light: brightness at a depth point is the light's
  terminal quadrature weight over the inverse-square distance, and the
  camera's terminal weight turns brightness into observed shading.

Raw maps have holes where no pixel landed; they are filled from the nearest
valid columns and cleaned with a median filter.  A guider map for the target
size (scaled-up exemplar map, or ray traced on a geometry-only synthesis)
steers patch choice in :class:`ShadingGuidedSynthesizer`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter, zoom
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .columns import ColumnImage, unflatten
from .exceptions import (
    ChannelEmptyError,
    ExemplarTooSmallError,
    NoCandidatesError,
    SizeMismatchError,
    UnknownModeError,
)
from .field import (
    Camera,
    RenderConfig,
    VoxelField,
    alpha_from_sigma,
    interp,
    look_at,
    render_rays,
    softplus,
)
from .synthesis import (
    ROTATIONS,
    Canvas,
    PatchSet,
    PatchSynthesizer,
    SynthesisParams,
    _as_column_image,
    _record,
    ann_search,
    as_rng,
    random_index,
    scan_origins,
    seed_step,
    select_by_pdf,
    two_phase_select,
)

__all__ = [
    "ShadingMap",
    "Light",
    "ShadingConfig",
    "ShadingRig",
    "smooth_shading_image",
    "fit_polynomial_surface",
    "depth_points",
    "project_shading",
    "fill_holes_knn",
    "median_repair",
    "select_channels",
    "terminal_weight",
    "ray_traced_brightness",
    "ray_traced_shading",
    "render_shading_images",
    "build_shading_map_rt",
    "build_guider",
    "normalize_pair",
    "shading_distance",
    "shading_guided_synthesize",
    "ShadingGuidedSynthesizer",
    "GUIDER_MODES",
]

GUIDER_MODES = ("scale-up", "ray-traced")


@dataclass
class ShadingMap:
    values: np.ndarray
    valid: np.ndarray
    view_order: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.view_order = [int(v) for v in self.view_order]
        if self.values.ndim != 3 or self.values.shape != self.valid.shape:
            raise ValueError("values and valid must share shape (Nx, Ny, n_c)")
        if self.values.shape[2] != len(self.view_order):
            raise ValueError("view_order length must equal the channel count")
        v = self.values[self.valid]
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("valid shading values must be finite and >= 0")

    @property
    def shape(self):
        return self.values.shape[:2]

    @property
    def n_channels(self):
        return self.values.shape[2]

    def copy(self):
        return ShadingMap(self.values.copy(), self.valid.copy(), list(self.view_order))


@dataclass
class Light:
    position: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if self.intensity < 0:
            raise ValueError("light intensity must be >= 0")


@dataclass
class ShadingConfig:
    n_views: int = 50
    n_channels: int = 20
    n_s: int = 64
    blur_passes: int = 10
    blur_variance: float = 7.0
    poly_degree: int = 3
    knn_k: int = 8
    median_window: int = 3
    eps: float = 1e-6

    def __post_init__(self):
        if self.n_channels > self.n_views:
            raise ValueError("n_channels must be <= n_views")
        if self.n_s < 2:
            raise ValueError("n_s must be >= 2")
        if self.median_window % 2 == 0:
            raise ValueError("median_window must be odd")


# ---------------------------------------------------------------- images


def fit_polynomial_surface(img, degree=3):
    """Least-squares bivariate polynomial of total degree ``degree``, evaluated per pixel."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    # centred, unit-scaled coordinates keep the normal equations well conditioned
    u = (np.arange(h) - (h - 1) / 2.0) / max(h - 1, 1)
    v = (np.arange(w) - (w - 1) / 2.0) / max(w - 1, 1)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    terms = [uu ** i * vv ** j for i in range(degree + 1) for j in range(degree + 1 - i)]
    basis = np.stack([t.ravel() for t in terms], -1)
    coef, *_ = np.linalg.lstsq(basis, img.ravel(), rcond=None)
    return (basis @ coef).reshape(h, w)


def smooth_shading_image(img, cfg: ShadingConfig | None = None):
    """Repeated Gaussian blur followed by a polynomial surface fit."""
    cfg = cfg or ShadingConfig()
    out = np.asarray(img, dtype=np.float64)
    sigma = math.sqrt(cfg.blur_variance)
    for _ in range(cfg.blur_passes):
        out = gaussian_filter(out, sigma, mode="nearest")
    return fit_polynomial_surface(out, cfg.poly_degree)


# ---------------------------------------------------------------- geometry


def depth_points(camera: Camera, field: VoxelField, rcfg: RenderConfig):
    """World points at each pixel's expected depth and the rays they lie on.

    Returns ``(points (P, 3), origins (P, 3), hit (P,))``; ``hit`` is false for
    rays with no termination mass.
    """
    origins, dirs = camera.rays()
    res = render_rays(origins, dirs, field, rcfg, return_weights=False, colors=False)
    pts = origins + res["depth"][:, None] * dirs
    hit = res["transmittance"] < 1.0
    return pts, origins, hit


def _column_index(points, field: VoxelField, tol=1e-9):
    """Nearest column (i, j) of each point and whether the point lies in the box."""
    bbox = field.bbox
    span = bbox[1] - bbox[0]
    inside = np.all((points >= bbox[0] - tol * span) & (points <= bbox[1] + tol * span), axis=-1)
    nx, ny, _ = field.shape
    g = (points[:, :2] - bbox[0, :2]) / span[:2] * (np.array([nx, ny]) - 1)
    ij = np.rint(g).astype(np.int64)
    ij[:, 0] = np.clip(ij[:, 0], 0, nx - 1)
    ij[:, 1] = np.clip(ij[:, 1], 0, ny - 1)
    return ij, inside


class _Deposits:
    """Sum/count accumulator over (Nx, Ny, n_views)."""

    def __init__(self, nx, ny, n):
        self.total = np.zeros((nx, ny, n))
        self.count = np.zeros((nx, ny, n), dtype=np.int64)

    def add(self, channel, ij, values):
        np.add.at(self.total[..., channel], (ij[:, 0], ij[:, 1]), values)
        np.add.at(self.count[..., channel], (ij[:, 0], ij[:, 1]), 1)

    def result(self, view_order):
        valid = self.count > 0
        values = np.where(valid, self.total / np.maximum(self.count, 1), 0.0)
        return ShadingMap(np.maximum(values, 0.0), valid, view_order)


def project_shading(shading_images, cameras, field: VoxelField, cfg: ShadingConfig | None = None,
                    rcfg: RenderConfig | None = None, view_ids=None, smooth=True):
    """Deposit (smoothed) per-view shading images onto the column lattice.

    Every pixel whose expected-depth point falls inside the field's box adds
    its value to that column's channel for the view; deposits are averaged.
    Channels follow ``view_ids`` (default 0..M-1) in ascending order.
    """
    cfg = cfg or ShadingConfig()
    rcfg = rcfg or RenderConfig()
    if len(shading_images) != len(cameras):
        raise SizeMismatchError(f"{len(shading_images)} shading images for {len(cameras)} cameras")
    view_ids = list(range(len(cameras))) if view_ids is None else [int(v) for v in view_ids]
    order = np.argsort(view_ids, kind="stable")
    nx, ny, _ = field.shape
    acc = _Deposits(nx, ny, len(cameras))
    for channel, k in enumerate(order):
        img = np.asarray(shading_images[k], dtype=np.float64)
        cam = cameras[k]
        if img.shape != (cam.height, cam.width):
            raise SizeMismatchError(
                f"view {view_ids[k]}: image {img.shape} != camera {(cam.height, cam.width)}")
        if smooth:
            img = smooth_shading_image(img, cfg)
        pts, _, hit = depth_points(cam, field, rcfg)
        ij, inside = _column_index(pts, field)
        keep = hit & inside
        acc.add(channel, ij[keep], img.reshape(-1)[keep])
    return acc.result([view_ids[k] for k in order])


# ---------------------------------------------------------------- repair


def fill_holes_knn(smap: ShadingMap, k=8, eps=1e-6):
    """Inverse-distance weighted fill of invalid cells from the ``k`` nearest valid ones."""
    out = smap.copy()
    nx, ny, nc = out.values.shape
    gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    coords = np.stack([gx, gy], -1).astype(np.float64)
    for c in range(nc):
        valid = out.valid[..., c]
        if valid.all():
            continue
        if not valid.any():
            raise ChannelEmptyError(f"view {out.view_order[c]} has no valid columns")
        tree = cKDTree(coords[valid])
        holes = ~valid
        kk = min(int(k), int(valid.sum()))
        dist, idx = tree.query(coords[holes], k=kk)
        dist = dist.reshape(-1, kk)
        idx = idx.reshape(-1, kk)
        w = 1.0 / (dist + eps)
        vals = out.values[..., c][valid][idx]
        chan = out.values[..., c]
        chan[holes] = np.sum(w * vals, axis=1) / np.sum(w, axis=1)
        out.valid[..., c] = True
    return out


def median_repair(smap: ShadingMap, window=3):
    """Per-channel 2D median filter with edge clamping."""
    if window % 2 == 0 or window < 1:
        raise ValueError("median window must be a positive odd number")
    out = smap.copy()
    out.values = median_filter(out.values, size=(window, window, 1), mode="nearest")
    return out


def select_channels(smap: ShadingMap, n_c):
    """Keep the ``n_c`` channels with the fewest invalid cells (ties by view id)."""
    if n_c > smap.n_channels:
        raise ValueError(f"cannot keep {n_c} of {smap.n_channels} channels")
    invalid = (~smap.valid).reshape(-1, smap.n_channels).sum(axis=0)
    rank = np.lexsort((np.asarray(smap.view_order), invalid))[:n_c]
    return ShadingMap(smap.values[..., rank], smap.valid[..., rank],
                      [smap.view_order[i] for i in rank])


# ---------------------------------------------------------------- ray tracing


def terminal_weight(starts, ends, field: VoxelField, n_s, shift_b=None, tol=1e-9):
    """Quadrature weight T_n * alpha_n of the last of ``n_s`` samples from start to end.

    Samples sit at ``start + (i / n_s) (end - start)``, i = 1..n_s, so the last
    one is the end point.  Samples outside the field's box see no density.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    ends = np.atleast_2d(np.asarray(ends, dtype=np.float64))
    starts, ends = np.broadcast_arrays(starts, ends)
    shift = field.shift_b if shift_b is None else shift_b
    seg = ends - starts
    length = np.linalg.norm(seg, axis=-1)
    delta = length / n_s
    out = np.empty(starts.shape[0])
    frac = np.arange(1, n_s + 1) / n_s
    bbox = field.bbox
    span = bbox[1] - bbox[0]
    chunk = max(1, 262144 // n_s)
    for a in range(0, starts.shape[0], chunk):
        sl = slice(a, a + chunk)
        pts = starts[sl, None, :] + frac[None, :, None] * seg[sl, None, :]
        inside = np.all((pts >= bbox[0] - tol * span) & (pts <= bbox[1] + tol * span), axis=-1)
        sigma = softplus(interp(pts, field.density, bbox), shift) * inside
        alpha = alpha_from_sigma(sigma, delta[sl, None])
        trans = np.prod(1.0 - alpha[:, :-1], axis=1)
        out[sl] = trans * alpha[:, -1]
    return out


def ray_traced_brightness(x, light: Light, field: VoxelField, cfg: ShadingConfig | None = None):
    """Light arriving at ``x``: terminal weight from the light times I / |x - x_l|^2."""
    cfg = cfg or ShadingConfig()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d2 = np.sum((x - light.position) ** 2, axis=-1)
    if np.any(d2 == 0):
        raise ValueError("shading point coincides with the light")
    p = terminal_weight(light.position[None], x, field, cfg.n_s)
    return p * light.intensity / d2


def ray_traced_shading(x, eye, b, field: VoxelField, cfg: ShadingConfig | None = None):
    """Shading seen from ``eye`` (a Camera or points): camera terminal weight times ``b``."""
    cfg = cfg or ShadingConfig()
    eye = eye.origin if isinstance(eye, Camera) else eye
    q = terminal_weight(eye, x, field, cfg.n_s)
    return q * np.asarray(b, dtype=np.float64)


def _shade_view(camera, field, light, cfg, rcfg):
    pts, origins, hit = depth_points(camera, field, rcfg)
    ij, inside = _column_index(pts, field)
    keep = hit & inside
    s = np.zeros(pts.shape[0])
    if keep.any():
        b = ray_traced_brightness(pts[keep], light, field, cfg)
        s[keep] = ray_traced_shading(pts[keep], origins[keep], b, field, cfg)
    return s, ij, keep


def render_shading_images(field: VoxelField, light: Light, cameras, cfg: ShadingConfig | None = None,
                          rcfg: RenderConfig | None = None):
    """Per-view ray-traced shading images (background pixels are 0)."""
    cfg = cfg or ShadingConfig()
    rcfg = rcfg or RenderConfig()
    out = []
    for cam in cameras:
        s, _, _ = _shade_view(cam, field, light, cfg, rcfg)
        out.append(s.reshape(cam.height, cam.width))
    return out


def build_shading_map_rt(field: VoxelField, light: Light, cameras, cfg: ShadingConfig | None = None,
                         rcfg: RenderConfig | None = None, view_ids=None, repair=True):
    """Ray-traced shading deposited at each pixel's depth point, then hole fill + median."""
    cfg = cfg or ShadingConfig()
    rcfg = rcfg or RenderConfig()
    view_ids = list(range(len(cameras))) if view_ids is None else [int(v) for v in view_ids]
    nx, ny, _ = field.shape
    acc = _Deposits(nx, ny, len(cameras))
    for channel, cam in enumerate(cameras):
        s, ij, keep = _shade_view(cam, field, light, cfg, rcfg)
        acc.add(channel, ij[keep], s[keep])
    smap = acc.result(view_ids)
    if repair:
        smap = median_repair(fill_holes_knn(smap, cfg.knn_k, cfg.eps), cfg.median_window)
    return smap


@dataclass
class ShadingRig:
    """Light and viewpoints defined relative to a field's box.

    The same rig applied to a larger field scales positions with the box, so
    a synthesized scene is lit and viewed the way its exemplar was.
    """

    light_direction: tuple = (0.35, -0.25, 1.0)
    light_distance: float = 1.5
    intensity: float = 1.0
    n_views: int = 50
    seed: int = 0
    min_elevation: float = 0.3
    pixels_per_column: float = 0.5
    directions: np.ndarray | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.directions is None:
            rng = np.random.default_rng(self.seed)
            z = rng.uniform(self.min_elevation, 1.0, self.n_views)
            phi = rng.uniform(0.0, 2.0 * np.pi, self.n_views)
            r = np.sqrt(1.0 - z ** 2)
            self.directions = np.stack([r * np.cos(phi), r * np.sin(phi), z], -1)
        self.directions = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        self.n_views = self.directions.shape[0]

    @staticmethod
    def _frame(bbox):
        bbox = np.asarray(bbox, dtype=np.float64)
        center = bbox.mean(axis=0)
        radius = 0.5 * np.linalg.norm(bbox[1] - bbox[0])
        return center, radius

    def light(self, bbox):
        center, radius = self._frame(bbox)
        d = np.asarray(self.light_direction, dtype=np.float64)
        return Light(center + d / np.linalg.norm(d) * self.light_distance * radius, self.intensity)

    def cameras(self, field: VoxelField, view_ids=None):
        """Orthographic cameras covering the whole box from each rig direction."""
        center, radius = self._frame(field.bbox)
        focal = self.pixels_per_column / float(np.min(field.voxel_size[:2]))
        corners = np.array([[x, y, z] for x in field.bbox[:, 0] for y in field.bbox[:, 1]
                            for z in field.bbox[:, 2]])
        ids = range(self.n_views) if view_ids is None else view_ids
        out = []
        for k in ids:
            c2w = look_at(center + 2.0 * radius * self.directions[k], center)
            rel = (corners - center) @ c2w[:3, :3]
            ext = np.max(np.abs(rel[:, :2]), axis=0)
            w = int(math.ceil(2 * ext[0] * focal)) + 1
            h = int(math.ceil(2 * ext[1] * focal)) + 1
            out.append(Camera(c2w, focal, w, h, orthographic=True))
        return out

    def render_config(self, field: VoxelField, n_samples=96):
        _, radius = self._frame(field.bbox)
        return RenderConfig(near=0.0, far=4.0 * radius, n_samples=n_samples)


# ---------------------------------------------------------------- guiders


def _as_field(x):
    if isinstance(x, VoxelField):
        return x
    if isinstance(x, ColumnImage):
        return unflatten(x)
    raise TypeError("expected a VoxelField or ColumnImage")


def _scale_up(smap: ShadingMap, out_size):
    nx, ny = smap.shape
    ox, oy = out_size
    factors = (ox / nx, oy / ny, 1.0)
    if (ox, oy) == (nx, ny):
        return smap.copy()
    values = zoom(smap.values, factors, order=1, mode="nearest", grid_mode=False)
    valid = zoom(smap.valid.astype(np.uint8), factors, order=0, mode="nearest", grid_mode=False) > 0
    return ShadingMap(np.maximum(values, 0.0), valid, smap.view_order)


def build_guider(mode, *, exemplar_map: ShadingMap | None = None, out_size=None, exemplar=None,
                 light: Light | None = None, rig: ShadingRig | None = None,
                 params: SynthesisParams | None = None, cfg: ShadingConfig | None = None,
                 seed_patch=None, random_state=None, n_samples=96):
    """Shading map guider for an output of ``out_size`` columns.

    ``scale-up`` bilinearly resizes ``exemplar_map``.  ``ray-traced`` runs a
    greedy geometry-only synthesis of ``exemplar`` at the target size and ray
    traces ``rig`` (with ``light`` overriding the rig's light) over it.
    """
    if mode == "scale-up":
        if exemplar_map is None or out_size is None:
            raise ValueError("scale-up needs exemplar_map and out_size")
        return _scale_up(exemplar_map, tuple(int(s) for s in np.broadcast_to(out_size, (2,))))
    if mode == "ray-traced":
        if exemplar is None or out_size is None:
            raise ValueError("ray-traced guider needs exemplar and out_size")
        params = params or SynthesisParams()
        cfg = cfg or ShadingConfig()
        rig = rig or ShadingRig(n_views=cfg.n_views)
        ex = _as_column_image(exemplar)
        est = PatchSynthesizer(params.patch_size, params.overlap, params.extraction_step, params.k_g,
                               params.eta, params.lam, "geometry", True, False, params.leaf_size,
                               params.max_leaf_visits, random_state)
        geo = unflatten(est.fit_synthesize(ex, out_size, seed_patch=seed_patch))
        view_ids = (exemplar_map.view_order if exemplar_map is not None
                    else list(range(min(cfg.n_channels, rig.n_views))))
        lt = light or rig.light(geo.bbox)
        return build_shading_map_rt(geo, lt, rig.cameras(geo, view_ids), cfg,
                                    rig.render_config(geo, n_samples), view_ids)
    raise UnknownModeError(f"unknown guider mode {mode!r}; expected one of {GUIDER_MODES}")


def _minmax(values, valid):
    out = np.zeros_like(values)
    for c in range(values.shape[2]):
        v = values[..., c][valid[..., c]]
        if v.size == 0:
            continue
        lo, hi = v.min(), v.max()
        if hi > lo:
            out[..., c] = (values[..., c] - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def normalize_pair(a: ShadingMap, b: ShadingMap):
    """Min-max normalize each map per channel to [0, 1] (over its valid cells)."""
    if a.view_order != b.view_order:
        raise SizeMismatchError("shading maps have different view orders")
    return (ShadingMap(_minmax(a.values, a.valid), a.valid.copy(), a.view_order),
            ShadingMap(_minmax(b.values, b.valid), b.valid.copy(), b.view_order))


def shading_distance(a: ShadingMap, b: ShadingMap):
    """Mean per-column L2 distance between two maps of equal shape."""
    if a.values.shape != b.values.shape:
        raise SizeMismatchError(f"map shapes {a.values.shape} and {b.values.shape} differ")
    return float(np.mean(np.linalg.norm(a.values - b.values, axis=-1)))


# ---------------------------------------------------------------- synthesis


class ShadingGuidedSynthesizer(BaseEstimator):
    """Two-phase synthesis restricted, per placement, to the ``k_s`` windows
    whose shading vectors best match the guider over the whole footprint.

    Exemplar shading travels with the columns as extra channels, so the
    synthesized shading map is available as ``shading_``.
    """

    def __init__(self, patch_size=15, overlap=5, extraction_step=3, k_g=10, k_s=20, eta=math.inf,
                 greedy=False, rotations=True, normalize=True, leaf_size=32, max_leaf_visits=None,
                 random_state=None):
        self.patch_size = patch_size
        self.overlap = overlap
        self.extraction_step = extraction_step
        self.k_g = k_g
        self.k_s = k_s
        self.eta = eta
        self.greedy = greedy
        self.rotations = rotations
        self.normalize = normalize
        self.leaf_size = leaf_size
        self.max_leaf_visits = max_leaf_visits
        self.random_state = random_state

    def fit(self, X, y=None, shading: ShadingMap | None = None):
        if shading is None:
            raise ValueError("fit needs the exemplar's shading map")
        ex = _as_column_image(X)
        if tuple(shading.shape) != tuple(ex.shape):
            raise SizeMismatchError(f"shading map {shading.shape} != exemplar lattice {ex.shape}")
        self.params_ = SynthesisParams(self.patch_size, self.overlap, self.extraction_step, self.k_g,
                                       self.k_s, self.eta, greedy=self.greedy, rotations=self.rotations,
                                       leaf_size=self.leaf_size, max_leaf_visits=self.max_leaf_visits)
        if min(ex.shape) < self.patch_size:
            raise ExemplarTooSmallError(f"exemplar {ex.shape} smaller than patch size {self.patch_size}")
        self.exemplar_ = ex
        self.exemplar_shading_ = shading
        return self

    def synthesize(self, guider: ShadingMap, seed_patch=None):
        check_is_fitted(self, "exemplar_")
        ex, params = self.exemplar_, self.params_
        ex_map = self.exemplar_shading_
        if guider.view_order != ex_map.view_order:
            raise SizeMismatchError("guider and exemplar shading use different view orders")
        if self.normalize:
            ex_map, guider = normalize_pair(ex_map, guider)
        nx, ny = guider.shape
        if min(nx, ny) < params.patch_size:
            raise ExemplarTooSmallError(f"output {nx}x{ny} smaller than patch size {params.patch_size}")
        n = ex.data.shape[2]
        data = np.concatenate([ex.data, ex_map.values.astype(ex.data.dtype)], -1)
        rots = ROTATIONS if params.rotations else (0,)
        ps = PatchSet(data, ex.n_z, n, (params.patch_size,) * 2, params.extraction_step, rots)
        rng = as_rng(self.random_state)
        canvas = Canvas((nx, ny), ps.depth, data.dtype)
        gvals = guider.values.astype(data.dtype)
        k_s = min(params.k_s, len(ps))
        log = []
        for x in scan_origins(0, nx, params.patch_size, params.stride):
            for y in scan_origins(0, ny, params.patch_size, params.stride):
                fx, fy = canvas.footprint((x, y), ps.size)
                window = np.zeros(ps.size + (gvals.shape[2],), dtype=gvals.dtype)
                window[: fx.stop - fx.start, : fy.stop - fy.start] = gvals[fx, fy]
                full = np.zeros(ps.size, bool)
                full[: fx.stop - fx.start, : fy.stop - fy.start] = True
                index = ps.index(full, "shading", leaf_size=params.leaf_size,
                                 max_leaf_visits=params.max_leaf_visits)
                found = ann_search(index, window[full].reshape(-1), k_s)
                cand = [p for p, _ in found]
                if not cand:
                    raise NoCandidatesError("shading search returned no windows")
                if x == 0 and y == 0:
                    if seed_patch is not None:
                        pid = int(seed_patch)
                    elif params.greedy:
                        pid = select_by_pdf(found, greedy=True)
                    else:
                        by_id = sorted(cand)
                        pid = by_id[random_index(rng, len(by_id))]
                    rec = seed_step(canvas, (0, 0), ps, pid)
                else:
                    values, mask = canvas.overlap((x, y), ps.size)
                    # phase 1 and 2 see only the primary channels
                    sel = two_phase_select(values, mask, ps, params, rng, candidates=cand)
                    canvas.paste((x, y), ps.window(sel.patch_id))
                    rec = _record((x, y), ps, sel, "")
                rec.shading_candidates = cand
                log.append(rec)
        self.placements_ = log
        self.canvas_ = canvas
        self.patchset_ = ps
        shading = np.ascontiguousarray(canvas.values[..., n:], dtype=np.float64)
        self.shading_ = ShadingMap(np.maximum(shading, 0.0), np.ones(shading.shape, bool), guider.view_order)
        self.guider_ = guider
        return ex.with_data(np.ascontiguousarray(canvas.values[..., :n]))

    def fit_synthesize(self, X, guider, shading, seed_patch=None):
        return self.fit(X, shading=shading).synthesize(guider, seed_patch=seed_patch)


def shading_guided_synthesize(exemplar, exemplar_shading: ShadingMap, guider: ShadingMap,
                              params: SynthesisParams | None = None, rng=None, seed_patch=None):
    """Functional wrapper; returns (image, placement log)."""
    params = params or SynthesisParams()
    est = ShadingGuidedSynthesizer(params.patch_size, params.overlap, params.extraction_step, params.k_g,
                                   params.k_s, params.eta, params.greedy, True, True, params.leaf_size,
                                   params.max_leaf_visits, rng)
    out = est.fit_synthesize(exemplar, guider, exemplar_shading, seed_patch=seed_patch)
    return out, est.placements_
