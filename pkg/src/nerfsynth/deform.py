"""Deformation field for placing a synthesized field on a curved surface.

A small ReLU network maps a point in deformed (surface-wrapped) space to the
displacement that takes it back to canonical (flat) space.  It is fitted to
point correspondences with mean squared error and Adam, in coordinates
normalized by the correspondence cloud's center and scale.  Rendering marches
rays in deformed space and looks every sample up in the canonical field.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import NonConvergenceWarning, NumericalError, UnsupportedSurfaceError
from .field import EMPTY_DENSITY, Camera, RenderConfig, VoxelField, render_image
from .io import load_mlp, read_meta, save_mlp, write_meta

__all__ = [
    "Surface",
    "parse_surface",
    "analytic_correspondences",
    "analytic_inverse",
    "DeformationField",
    "mlp_forward",
    "mlp_gradient",
    "Adam",
    "warp_sample",
    "render_deformed",
    "shell_bbox",
    "save_deformation",
    "load_deformation",
    "SURFACES",
]

SURFACES = ("plane", "sphere", "cylinder")


@dataclass(frozen=True)
class Surface:
    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in SURFACES:
            raise UnsupportedSurfaceError(f"unsupported surface {self.kind!r}; expected one of {SURFACES}")
        if self.kind != "plane" and not self.radius > 0:
            raise ValueError("surface radius must be positive")


def parse_surface(text):
    """``plane``, ``sphere:cx,cy,cz,r`` or ``cylinder:cx,cy,cz,r`` (axis along y)."""
    kind, _, rest = str(text).partition(":")
    kind = kind.strip().lower()
    if kind not in SURFACES:
        raise UnsupportedSurfaceError(f"unsupported surface {kind!r}; expected one of {SURFACES}")
    if kind == "plane":
        return Surface("plane")
    vals = [float(v) for v in rest.split(",")] if rest else []
    if len(vals) != 4:
        raise ValueError(f"{kind} needs cx,cy,cz,r")
    return Surface(kind, tuple(vals[:3]), vals[3])


def _patch_frame(plane_patch):
    """(x0, x1, y0, y1, z0) of the canonical patch and its xy center."""
    b = np.asarray(plane_patch, dtype=np.float64)
    if b.shape == (2, 3):
        x0, x1, y0, y1, z0 = b[0, 0], b[1, 0], b[0, 1], b[1, 1], b[0, 2]
    else:
        x0, x1, y0, y1, z0 = b.ravel()[:5]
    return x0, x1, y0, y1, z0, 0.5 * (x0 + x1), 0.5 * (y0 + y1)


def _wrap(surface: Surface, a, b, h):
    """Deformed point for planar offsets (a, b) from the patch center at height h."""
    c = np.asarray(surface.center, dtype=np.float64)
    r = surface.radius
    if surface.kind == "sphere":
        # azimuthal equal-area: planar radius rho = 2 R sin(theta / 2), center -> +z pole
        rho = np.hypot(a, b)
        if np.any(rho > 2 * r):
            raise ValueError("patch too large to wrap onto the sphere")
        theta = 2.0 * np.arcsin(rho / (2.0 * r))
        phi = np.arctan2(b, a)
        n = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], -1)
        return c + (r + h)[..., None] * n
    if surface.kind == "cylinder":
        # arc length along the circumference, axis parallel to y
        ang = a / r
        n = np.stack([np.sin(ang), np.zeros_like(ang), np.cos(ang)], -1)
        return c + (r + h)[..., None] * n + np.stack([np.zeros_like(b), b, np.zeros_like(b)], -1)
    raise UnsupportedSurfaceError(f"no wrap for {surface.kind!r}")


def analytic_correspondences(surface: Surface, plane_patch, n_u=32, n_v=32, shell_height=None, n_h=4):
    """(deformed, canonical) point pairs for a flat patch wrapped onto ``surface``.

    ``plane_patch`` is the canonical field's box; the patch center goes to
    the surface's +z pole (sphere) or top line (cylinder), and canonical
    heights above the patch base become offsets along the normal.
    """
    if not isinstance(surface, Surface):
        surface = parse_surface(surface)
    x0, x1, y0, y1, z0, cu, cv = _patch_frame(plane_patch)
    if shell_height is None:
        b = np.asarray(plane_patch, dtype=np.float64)
        shell_height = float(b[1, 2] - b[0, 2]) if b.shape == (2, 3) else 0.0
    u = np.linspace(x0, x1, n_u)
    v = np.linspace(y0, y1, n_v)
    h = np.linspace(0.0, shell_height, max(n_h, 1)) if shell_height > 0 else np.zeros(1)
    uu, vv, hh = np.meshgrid(u, v, h, indexing="ij")
    canonical = np.stack([uu, vv, z0 + hh], -1).reshape(-1, 3)
    if surface.kind == "plane":
        return canonical.copy(), canonical
    deformed = _wrap(surface, uu - cu, vv - cv, hh).reshape(-1, 3)
    return deformed, canonical


def analytic_inverse(surface: Surface, plane_patch):
    """Closed-form deformed -> canonical map for the analytic wraps."""
    x0, x1, y0, y1, z0, cu, cv = _patch_frame(plane_patch)
    c = np.asarray(surface.center, dtype=np.float64)
    r = surface.radius

    def inverse(x):
        x = np.asarray(x, dtype=np.float64)
        if surface.kind == "plane":
            return x.copy()
        rel = x - c
        if surface.kind == "sphere":
            dist = np.linalg.norm(rel, axis=-1)
            n = rel / np.maximum(dist, 1e-300)[..., None]
            theta = np.arccos(np.clip(n[..., 2], -1.0, 1.0))
            phi = np.arctan2(n[..., 1], n[..., 0])
            rho = 2.0 * r * np.sin(theta / 2.0)
            return np.stack([cu + rho * np.cos(phi), cv + rho * np.sin(phi), z0 + dist - r], -1)
        dist = np.hypot(rel[..., 0], rel[..., 2])
        ang = np.arctan2(rel[..., 0], rel[..., 2])
        return np.stack([cu + r * ang, cv + rel[..., 1], z0 + dist - r], -1)

    return inverse


def shell_bbox(surface: Surface, plane_patch, shell_height=None, pad=0.0):
    """Axis-aligned box around the wrapped patch (deformed-space render bounds)."""
    d, _ = analytic_correspondences(surface, plane_patch, 48, 48, shell_height, 3)
    lo, hi = d.min(axis=0) - pad, d.max(axis=0) + pad
    hi = np.maximum(hi, lo + 1e-9)
    return np.stack([lo, hi])


# ---------------------------------------------------------------- network


def mlp_forward(weights, biases, x):
    """Activations of every layer; ReLU between layers, linear output."""
    acts = [x]
    h = x
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w.T + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def mlp_gradient(weights, biases, x, target):
    """Loss ``mean_i |f(x_i) - target_i|^2`` and its exact gradient per layer."""
    acts = mlp_forward(weights, biases, x)
    n = x.shape[0]
    resid = acts[-1] - target
    loss = float(np.sum(resid * resid) / n)
    grad = 2.0 * resid / n
    gw, gb = [None] * len(weights), [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        gw[k] = grad.T @ acts[k]
        gb[k] = grad.sum(axis=0)
        if k > 0:
            grad = (grad @ weights[k]) * (acts[k] > 0)
    return loss, gw, gb


class Adam:
    """Adaptive-moment gradient descent over a list of arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class DeformationField(BaseEstimator, RegressorMixin):
    """ReLU network Psi with ``x + Psi(x)`` approximating the canonical point.

    ``fit(X_deformed, y_canonical)``; ``predict`` returns canonical points and
    ``displacement`` returns Psi itself.
    """

    def __init__(self, hidden=(16, 16, 16), epochs=2000, learning_rate=1e-3, batch_size=None,
                 tol=1e-3, random_state=0):
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.tol = tol
        self.random_state = random_state

    @property
    def layer_sizes(self):
        return [3, *[int(h) for h in self.hidden], 3]

    def _init_weights(self, rng):
        ws, bs = [], []
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            lim = np.sqrt(6.0 / (i + o))
            ws.append(rng.uniform(-lim, lim, (o, i)))
            bs.append(np.zeros(o))
        return ws, bs

    def _set_frame(self, X):
        self.center_ = X.mean(axis=0)
        scale = float(np.max(np.abs(X - self.center_)))
        self.scale_ = scale if scale > 0 else 1.0

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        if X.shape[1] != 3 or y.shape[1] != 3:
            raise ValueError("correspondences must be 3D points")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        rng = np.random.default_rng(self.random_state)
        self._set_frame(X)
        xn = (X - self.center_) / self.scale_
        target = (y - X) / self.scale_
        ws, bs = self._init_weights(rng)
        opt = Adam(ws + bs, lr=self.learning_rate)
        n = X.shape[0]
        batch = n if self.batch_size is None else max(1, min(int(self.batch_size), n))
        curve = []
        for _ in range(int(self.epochs)):
            order = np.arange(n) if batch == n else rng.permutation(n)
            total = 0.0
            for a in range(0, n, batch):
                idx = order[a:a + batch]
                loss, gw, gb = mlp_gradient(ws, bs, xn[idx], target[idx])
                if not np.isfinite(loss):
                    raise NumericalError("deformation fit diverged")
                opt.step(gw + gb)
                total += loss * idx.size
            curve.append(total / n)
        self.weights_, self.biases_ = ws, bs
        # report the loss of the final weights, not the last pre-step batch
        self.final_loss_ = mlp_gradient(ws, bs, xn, target)[0]
        curve.append(self.final_loss_)
        self.loss_curve_ = np.array(curve)
        if self.final_loss_ > self.tol:
            warnings.warn(f"NONCONVERGENCE: final loss {self.final_loss_:.3g} > {self.tol:g}",
                          NonConvergenceWarning, stacklevel=2)
        return self

    def displacement(self, X):
        check_is_fitted(self, "weights_")
        X = np.asarray(X, dtype=np.float64)
        flat = X.reshape(-1, 3)
        out = mlp_forward(self.weights_, self.biases_, (flat - self.center_) / self.scale_)[-1]
        return (out * self.scale_).reshape(X.shape)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            check_array(X, dtype=np.float64)
        return X + self.displacement(X)

    def __call__(self, X):
        return self.predict(X)

    @classmethod
    def constant(cls, offset=(0.0, 0.0, 0.0), hidden=(16, 16, 16)):
        """Psi equal to ``offset`` everywhere (all weights zero); zero offset is the identity warp."""
        est = cls(hidden=hidden)
        sizes = est.layer_sizes
        est.weights_ = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
        est.biases_ = [np.zeros(o) for o in sizes[1:]]
        est.center_ = np.zeros(3)
        est.scale_ = 1.0
        est.biases_[-1] = np.asarray(offset, dtype=np.float64).copy()
        est.final_loss_ = 0.0
        est.loss_curve_ = np.zeros(0)
        return est


def _to_canonical(warp, x):
    if hasattr(warp, "predict"):
        return warp.predict(x)
    return warp(x)


def warp_sample(x_deformed, warp, field: VoxelField, tol=1e-9):
    """Raw density and features of ``field`` at the canonical image of each point.

    Points that land outside the canonical box read as empty space.
    Returns ``(raw, features, canonical_points)``.
    """
    x = np.asarray(x_deformed, dtype=np.float64).reshape(-1, 3)
    c = _to_canonical(warp, x)
    raw, feat = field.sample(c)
    span = field.bbox[1] - field.bbox[0]
    inside = np.all((c >= field.bbox[0] - tol * span) & (c <= field.bbox[1] + tol * span), axis=-1)
    raw = np.where(inside, raw, EMPTY_DENSITY)
    feat = np.where(inside[:, None], feat, 0.0)
    return raw, feat, c


def render_deformed(camera: Camera, warp, field: VoxelField, cfg: RenderConfig, bbox=None):
    """RGB and depth images of the warped field; ``bbox`` bounds deformed space."""

    def sampler(points):
        return warp_sample(points, warp, field)

    return render_image(camera, field, cfg, sampler=sampler, bbox=field.bbox if bbox is None else bbox)


def save_deformation(model: DeformationField, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_meta(d / "meta", {
        "format": "deformation-field 1",
        "layer_sizes": model.layer_sizes,
        "center": np.asarray(model.center_),
        "scale": float(model.scale_),
        "final_loss": float(model.final_loss_),
    })
    save_mlp(d / "mlp.bin", model.weights_, model.biases_)
    return d


def load_deformation(directory) -> DeformationField:
    d = Path(directory)
    meta = read_meta(d / "meta")
    sizes = [int(s) for s in meta["layer_sizes"].split()]
    model = DeformationField(hidden=tuple(sizes[1:-1]))
    model.weights_, model.biases_ = load_mlp(d / "mlp.bin", sizes)
    model.center_ = np.array([float(v) for v in meta["center"].split()])
    model.scale_ = float(meta["scale"])
    model.final_loss_ = float(meta.get("final_loss", "nan"))
    model.loss_curve_ = np.zeros(0)
    return model
