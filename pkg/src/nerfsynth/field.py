"""Voxel-grid radiance field: storage, sampling and volume rendering.

A field holds a raw density grid and a color-feature grid over an
axis-aligned box.  Grid nodes sit on the box corners (node ``0`` at
``bbox[0]``, node ``N-1`` at ``bbox[1]``).  Colors come from a shallow
fully connected head fed with the interpolated feature and sin/cos
encodings of the sample position and ray direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ColorHead",
    "VoxelField",
    "RenderConfig",
    "Camera",
    "interp",
    "softplus",
    "alpha_from_sigma",
    "post_activated_alpha",
    "ray_weights",
    "render_rays",
    "render_ray",
    "render_depth",
    "render_image",
    "look_at",
    "sample_hemisphere_cameras",
]

#: raw density value used to mark empty space (softplus of it is ~0)
EMPTY_DENSITY = -1.0e4


def positional_encoding(x, degrees):
    """sin/cos pairs at frequencies 2**0 .. 2**(degrees-1), sin block first."""
    x = np.asarray(x, dtype=np.float64)
    if degrees == 0:
        return np.zeros(x.shape[:-1] + (0,))
    freqs = 2.0 ** np.arange(degrees)
    scaled = x[..., None, :] * freqs[:, None]  # (..., k, 3)
    enc = np.concatenate([np.sin(scaled), np.cos(scaled)], axis=-1)
    return enc.reshape(x.shape[:-1] + (degrees * 2 * x.shape[-1],))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ColorHead:
    """Shallow MLP mapping (feature, encoded position, encoded direction) to RGB.

    ``weights[i]`` has shape ``(out, in)``.  Hidden layers use ReLU, the
    output layer a sigmoid.
    """

    weights: list
    biases: list
    pe_degrees_x: int = 5
    pe_degrees_d: int = 4

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("ColorHead needs matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bad shapes {w.shape} / {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input width does not chain")
        if self.weights[-1].shape[0] != 3:
            raise ValueError("ColorHead must output 3 channels")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def encoded_width(self, n_features):
        return n_features + 6 * self.pe_degrees_x + 6 * self.pe_degrees_d

    def direction_columns(self, n_features):
        start = n_features + 6 * self.pe_degrees_x
        return slice(start, start + 6 * self.pe_degrees_d)

    @classmethod
    def linear_rgb(cls, n_features, pe_degrees_x=5, pe_degrees_d=4, gain=1.0):
        """Single layer reading the first three features as RGB logits."""
        width = n_features + 6 * pe_degrees_x + 6 * pe_degrees_d
        w = np.zeros((3, width))
        w[:, :3] = gain * np.eye(3)
        return cls([w], [np.zeros(3)], pe_degrees_x, pe_degrees_d)

    @classmethod
    def random(cls, n_features, hidden=(32,), pe_degrees_x=5, pe_degrees_d=4, seed=0):
        rng = np.random.default_rng(seed)
        sizes = [n_features + 6 * pe_degrees_x + 6 * pe_degrees_d, *hidden, 3]
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            bs.append(rng.uniform(-bound, bound, fan_out))
        return cls(ws, bs, pe_degrees_x, pe_degrees_d)

    def encode(self, features, x, d):
        features = np.asarray(features, dtype=np.float64)
        return np.concatenate(
            [features, positional_encoding(x, self.pe_degrees_x), positional_encoding(d, self.pe_degrees_d)],
            axis=-1,
        )

    def __call__(self, features, x, d):
        h = self.encode(features, x, d)
        lead = h.shape[:-1]
        h = h.reshape(-1, h.shape[-1])
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w.T + b, 0.0)
        out = _sigmoid(h @ self.weights[-1].T + self.biases[-1])
        return out.reshape(lead + (3,))


@dataclass
class VoxelField:
    """Density + feature voxel grids over an axis-aligned box.

    ``density`` has shape (Nx, Ny, Nz) and holds pre-activation values;
    ``feature`` has shape (C, Nx, Ny, Nz).
    """

    density: np.ndarray
    feature: np.ndarray
    bbox: np.ndarray
    color_head: ColorHead
    shift_b: float = 0.0

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=np.float32)
        self.feature = np.asarray(self.feature, dtype=np.float32)
        self.bbox = np.asarray(self.bbox, dtype=np.float64).reshape(2, 3)
        if self.density.ndim != 3 or self.feature.ndim != 4:
            raise ValueError("density must be 3D and feature 4D (C, Nx, Ny, Nz)")
        if self.feature.shape[1:] != self.density.shape:
            raise ValueError(
                f"feature grid {self.feature.shape[1:]} does not match density grid {self.density.shape}"
            )
        if not (np.isfinite(self.density).all() and np.isfinite(self.feature).all()):
            raise ValueError("grid values must be finite")
        if not np.all(self.bbox[1] > self.bbox[0]):
            raise ValueError("bbox must have positive extent on every axis")

    @property
    def shape(self):
        return self.density.shape

    @property
    def n_features(self):
        return self.feature.shape[0]

    @property
    def voxel_size(self):
        n = np.maximum(np.array(self.shape) - 1, 1)
        return (self.bbox[1] - self.bbox[0]) / n

    @property
    def center(self):
        return self.bbox.mean(axis=0)

    def sample(self, points):
        """Raw density and features at world points, shapes (M,) and (M, C)."""
        return interp(points, self.density, self.bbox), interp(points, self.feature, self.bbox)


@dataclass
class RenderConfig:
    near: float = 0.0
    far: float = 6.0
    n_samples: int = 128
    #: overrides the field's own shift when set
    shift_b: float | None = None
    bg_color: Sequence[float] = (1.0, 1.0, 1.0)
    chunk: int = 4096

    def __post_init__(self):
        if not self.near < self.far:
            raise ValueError("near must be < far")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")

    @property
    def delta(self):
        return (self.far - self.near) / self.n_samples

    def shift(self, field):
        return field.shift_b if self.shift_b is None else self.shift_b


@dataclass
class Camera:
    """Pinhole (or orthographic) camera.

    ``c2w`` maps camera to world; the camera looks down its local -z axis
    with +y up.  For orthographic cameras ``focal`` is pixels per world unit.
    """

    c2w: np.ndarray
    focal: float
    width: int
    height: int
    cx: float | None = None
    cy: float | None = None
    orthographic: bool = False

    def __post_init__(self):
        self.c2w = np.asarray(self.c2w, dtype=np.float64)
        if self.c2w.shape == (3, 4):
            self.c2w = np.vstack([self.c2w, [0.0, 0.0, 0.0, 1.0]])
        rot = self.c2w[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation must be orthonormal")
        if self.focal <= 0:
            raise ValueError("focal must be positive")
        if self.cx is None:
            self.cx = self.width / 2.0
        if self.cy is None:
            self.cy = self.height / 2.0

    @property
    def origin(self):
        return self.c2w[:3, 3].copy()

    @property
    def forward(self):
        return -self.c2w[:3, 2]

    def rays(self):
        """Per-pixel ray origins and unit directions through pixel centers, (H*W, 3)."""
        u, v = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        px = (u - self.cx) / self.focal
        py = -(v - self.cy) / self.focal
        rot = self.c2w[:3, :3]
        if self.orthographic:
            local = np.stack([px, py, np.zeros_like(px)], -1).reshape(-1, 3)
            origins = local @ rot.T + self.c2w[:3, 3]
            dirs = np.broadcast_to(self.forward, origins.shape).copy()
        else:
            local = np.stack([px, py, -np.ones_like(px)], -1).reshape(-1, 3)
            dirs = local @ rot.T
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            origins = np.broadcast_to(self.c2w[:3, 3], dirs.shape).copy()
        return origins, dirs


def interp(x, grid, bbox):
    """Trilinear interpolation of a 3D grid or a (C, Nx, Ny, Nz) grid.

    Points outside ``bbox`` are clamped to its surface.  Returns shape
    ``x.shape[:-1]`` for a 3D grid and ``x.shape[:-1] + (C,)`` otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    bbox = np.asarray(bbox, dtype=np.float64).reshape(2, 3)
    lead = x.shape[:-1]
    pts = x.reshape(-1, 3)
    dims = np.array(grid.shape[-3:])
    g = (pts - bbox[0]) / (bbox[1] - bbox[0]) * (dims - 1)
    g = np.clip(g, 0.0, dims - 1)
    i0 = np.minimum(np.floor(g).astype(np.int64), np.maximum(dims - 2, 0))
    f = g - i0
    i1 = np.minimum(i0 + 1, dims - 1)
    out = 0.0
    for cx in (0, 1):
        wx = f[:, 0] if cx else 1.0 - f[:, 0]
        ix = i1[:, 0] if cx else i0[:, 0]
        for cy in (0, 1):
            wy = f[:, 1] if cy else 1.0 - f[:, 1]
            iy = i1[:, 1] if cy else i0[:, 1]
            for cz in (0, 1):
                wz = f[:, 2] if cz else 1.0 - f[:, 2]
                iz = i1[:, 2] if cz else i0[:, 2]
                w = wx * wy * wz
                if grid.ndim == 3:
                    out = out + w * grid[ix, iy, iz]
                else:
                    out = out + w[:, None] * grid[:, ix, iy, iz].T
    out = np.asarray(out, dtype=np.float64)
    if grid.ndim == 3:
        return out.reshape(lead)
    return out.reshape(lead + (grid.shape[0],))


def softplus(raw, shift_b=0.0):
    """Shifted softplus ``log(1 + exp(raw + shift_b))`` in overflow-safe form."""
    z = np.asarray(raw, dtype=np.float64) + shift_b
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def alpha_from_sigma(sigma, delta):
    return -np.expm1(-np.asarray(sigma, dtype=np.float64) * delta)


def post_activated_alpha(x, field, delta, shift_b=None):
    """Opacity with the activation applied after interpolation."""
    shift = field.shift_b if shift_b is None else shift_b
    return alpha_from_sigma(softplus(interp(x, field.density, field.bbox), shift), delta)


def ray_weights(alpha):
    """Quadrature weights ``T_i * alpha_i`` and the residual transmittance.

    ``alpha`` has samples on the last axis.  Returns ``(weights, T)`` where
    ``T`` has one more entry than ``alpha`` (``T[..., -1]`` is T_{n+1}).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    one_minus = 1.0 - alpha
    trans = np.concatenate(
        [np.ones(alpha.shape[:-1] + (1,)), np.cumprod(one_minus, axis=-1)], axis=-1
    )
    return trans[..., :-1] * alpha, trans


def ray_box_interval(origins, dirs, bbox):
    """Entry/exit distances of rays against an axis-aligned box (slab test)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_a = (bbox[0] - origins) * inv
        t_b = (bbox[1] - origins) * inv
    t_lo = np.where(np.isnan(t_a), -np.inf, np.minimum(t_a, t_b))
    t_hi = np.where(np.isnan(t_b), np.inf, np.maximum(t_a, t_b))
    # zero direction component: inside the slab means unconstrained
    flat = dirs == 0
    inside = (origins >= bbox[0]) & (origins <= bbox[1])
    t_lo = np.where(flat, np.where(inside, -np.inf, np.inf), t_lo)
    t_hi = np.where(flat, np.where(inside, np.inf, -np.inf), t_hi)
    return t_lo.max(axis=-1), t_hi.min(axis=-1)


def _field_sampler(field):
    def sample(points):
        raw, feat = field.sample(points)
        return raw, feat, points

    return sample


def _density_sampler(field):
    def sample(points):
        return interp(points, field.density, field.bbox), None, points

    return sample


def render_rays(origins, dirs, field, cfg: RenderConfig, sampler: Callable | None = None,
                bbox=None, return_weights=False, colors=True):
    """Volume-render a batch of rays.

    Rays are clipped to ``bbox`` (the field's box by default) intersected
    with [near, far]; ``n_samples`` points are placed at the right end of
    equal sub-intervals so the last sample sits on the exit point.

    ``sampler(points) -> (raw_density, features, encode_points)`` lets the
    deformation module route samples through a warp.

    Returns a dict with ``rgb`` (R, 3), ``depth`` (R,), ``transmittance``
    (R,) and, on request, ``weights``/``t`` (R, n).  With ``colors=False``
    only the density is sampled and ``rgb`` holds the background term.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if sampler is None:
        sampler = _field_sampler(field) if colors else _density_sampler(field)
    bbox = field.bbox if bbox is None else np.asarray(bbox, dtype=np.float64)
    shift = cfg.shift(field)
    bg = np.asarray(cfg.bg_color, dtype=np.float64)
    n = cfg.n_samples
    n_rays = origins.shape[0]
    rgb = np.empty((n_rays, 3))
    depth = np.empty(n_rays)
    trans_out = np.empty(n_rays)
    all_w = np.zeros((n_rays, n)) if return_weights else None
    all_t = np.zeros((n_rays, n)) if return_weights else None

    for start in range(0, n_rays, cfg.chunk):
        sl = slice(start, min(start + cfg.chunk, n_rays))
        o, d = origins[sl], dirs[sl]
        t_lo, t_hi = ray_box_interval(o, d, bbox)
        t0 = np.maximum(t_lo, cfg.near)
        t1 = np.minimum(t_hi, cfg.far)
        hit = t1 > t0
        m = o.shape[0]
        w = np.zeros((m, n))
        t = np.zeros((m, n))
        col = np.zeros((m, 3))
        trans_last = np.ones(m)
        if hit.any():
            oh, dh = o[hit], d[hit]
            step = (t1[hit] - t0[hit]) / n
            th = t0[hit][:, None] + step[:, None] * np.arange(1, n + 1)
            pts = oh[:, None, :] + th[..., None] * dh[:, None, :]
            raw, feat, enc_pts = sampler(pts.reshape(-1, 3))
            sigma = softplus(raw, shift).reshape(-1, n)
            alpha = alpha_from_sigma(sigma, step[:, None])
            wh, trans = ray_weights(alpha)
            flat_w = wh.reshape(-1)
            live = flat_w > 0
            if colors and live.any():
                sample_rgb = np.zeros((flat_w.size, 3))
                dir_rep = np.repeat(dh, n, axis=0)
                sample_rgb[live] = field.color_head(feat[live], enc_pts[live], dir_rep[live])
                col[hit] = np.einsum("rn,rnc->rc", wh, sample_rgb.reshape(-1, n, 3))
            w[hit] = wh
            t[hit] = th
            trans_last[hit] = trans[:, -1]
        rgb[sl] = col + trans_last[:, None] * bg
        depth[sl] = np.einsum("rn,rn->r", w, t)
        trans_out[sl] = trans_last
        if return_weights:
            all_w[sl] = w
            all_t[sl] = t

    out = {"rgb": rgb, "depth": depth, "transmittance": trans_out}
    if return_weights:
        out["weights"] = all_w
        out["t"] = all_t
    return out


def render_ray(origin, direction, field, cfg: RenderConfig):
    """Color and residual transmittance T_{n+1} of a single ray."""
    res = render_rays(np.reshape(origin, (1, 3)), np.reshape(direction, (1, 3)), field, cfg)
    return res["rgb"][0], float(res["transmittance"][0])


def render_depth(origin, direction, field, cfg: RenderConfig):
    """Expected termination distance (unnormalised: empty space gives 0)."""
    res = render_rays(np.reshape(origin, (1, 3)), np.reshape(direction, (1, 3)), field, cfg)
    return float(res["depth"][0])


def render_image(camera: Camera, field, cfg: RenderConfig, sampler=None, bbox=None):
    """RGB (H, W, 3) and depth (H, W) images."""
    origins, dirs = camera.rays()
    res = render_rays(origins, dirs, field, cfg, sampler=sampler, bbox=bbox)
    shape = (camera.height, camera.width)
    return res["rgb"].reshape(shape + (3,)), res["depth"].reshape(shape)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world matrix for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(forward, up / np.linalg.norm(up))) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = true_up
    c2w[:3, 2] = -forward
    c2w[:3, 3] = eye
    return c2w


def sample_hemisphere_cameras(n, radius, seed=0, center=(0.0, 0.0, 0.0), width=32, height=32,
                              focal=None, orthographic=False):
    """``n`` cameras on the upper hemisphere around ``center``, all looking at it."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=np.float64)
    z = rng.uniform(0.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r_xy = np.sqrt(1.0 - z ** 2)
    dirs = np.stack([r_xy * np.cos(phi), r_xy * np.sin(phi), z], -1)
    if focal is None:
        focal = 1.2 * width
    return [
        Camera(look_at(center + radius * d, center), focal, width, height, orthographic=orthographic)
        for d in dirs
    ]
