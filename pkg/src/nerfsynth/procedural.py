"""Procedural exemplar fields for desk-scale runs.

Three kinds of statistically repetitive ground cover are supported: thin
tilted grass blades, pebble hemispheres and carpet tufts.  Primitive
placement wraps around in x and y so the exemplar tiles seamlessly.  A small
seeded noise term keeps every voxel column distinct.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ColorHead, VoxelField

__all__ = ["ProcExemplarSpec", "generate_field", "KINDS"]

KINDS = ("grass", "pebbles", "carpet")

_PALETTES = {
    "grass": [(0.25, 0.55, 0.15), (0.35, 0.65, 0.2), (0.2, 0.45, 0.1), (0.45, 0.6, 0.25)],
    "pebbles": [(0.55, 0.55, 0.52), (0.45, 0.42, 0.4), (0.65, 0.6, 0.55), (0.35, 0.35, 0.38)],
    "carpet": [(0.7, 0.2, 0.2), (0.75, 0.65, 0.3), (0.25, 0.3, 0.6), (0.6, 0.55, 0.5)],
}
_GROUND = (0.4, 0.3, 0.22)


@dataclass
class ProcExemplarSpec:
    kind: str = "pebbles"
    shape: tuple = (96, 96, 48)
    n_features: int = 12
    count: int | None = None
    #: hemisphere / tuft radius or blade half-thickness, in voxels
    radius: float | None = None
    #: blade / tuft height in voxels
    height: float | None = None
    ground: int = 3
    inside_density: float = 300.0
    empty_density: float = -30.0
    noise: float = 0.05
    voxel_size: float = 1.0 / 64.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown exemplar kind {self.kind!r}; expected one of {KINDS}")
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 3 or min(self.shape) < 2:
            raise ValueError("shape must be three sizes >= 2")

    def defaults(self):
        nx, ny, nz = self.shape
        area = nx * ny
        if self.kind == "pebbles":
            return dict(count=max(1, area // 400), radius=max(2.0, min(nx, ny) / 14), height=0.0)
        if self.kind == "grass":
            return dict(count=max(1, area // 40), radius=1.0, height=0.6 * (nz - self.ground))
        return dict(count=max(1, area // 60), radius=max(1.5, min(nx, ny) / 40), height=0.35 * nz)


def _logit(c):
    c = np.clip(np.asarray(c, dtype=np.float64), 1e-4, 1 - 1e-4)
    return np.log(c / (1 - c))


def _wrapped(d, n):
    """Signed periodic offset in [-n/2, n/2)."""
    return (d + n / 2.0) % n - n / 2.0


def generate_field(spec: ProcExemplarSpec) -> VoxelField:
    rng = np.random.default_rng(spec.seed)
    nx, ny, nz = spec.shape
    c = spec.n_features
    dflt = spec.defaults()
    count = dflt["count"] if spec.count is None else spec.count
    radius = dflt["radius"] if spec.radius is None else spec.radius
    height = dflt["height"] if spec.height is None else spec.height

    occ = np.zeros((nx, ny, nz), bool)
    label = np.full((nx, ny, nz), -1, np.int64)
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ground = min(spec.ground, nz)
    occ[:, :, :ground] = True

    palette = np.array(_PALETTES[spec.kind])
    prim_color = []
    for p in range(count):
        cx, cy = rng.uniform(0, nx), rng.uniform(0, ny)
        dx = _wrapped(ix - cx, nx)
        dy = _wrapped(iy - cy, ny)
        if spec.kind == "pebbles":
            r = radius * (rng.uniform(0.7, 1.3) if spec.radius is None else 1.0)
            dz = iz - (ground - 0.5)
            inside = (dx ** 2 + dy ** 2 + dz ** 2 <= r ** 2) & (dz >= 0)
        elif spec.kind == "carpet":
            h = height * rng.uniform(0.85, 1.15)
            inside = (dx ** 2 + dy ** 2 <= radius ** 2) & (iz >= ground) & (iz < ground + h)
        else:
            h = height * rng.uniform(0.6, 1.2)
            tilt = rng.normal(0.0, 0.35, 2) * h
            # capsule from (cx, cy, ground) to (cx + tilt, ground + h)
            seg = np.array([tilt[0], tilt[1], h])
            rel = np.stack([dx, dy, iz - float(ground)], -1)
            t = np.clip(rel @ seg / (seg @ seg), 0.0, 1.0)
            closest = rel - t[..., None] * seg
            inside = np.einsum("...k,...k->...", closest, closest) <= radius ** 2
        occ |= inside
        label[inside] = p
        base = palette[rng.integers(len(palette))]
        prim_color.append(np.clip(base + rng.normal(0, 0.04, 3), 0.02, 0.98))

    density = np.where(occ, spec.inside_density, spec.empty_density).astype(np.float64)
    density += spec.noise * rng.standard_normal(density.shape)

    feature = np.zeros((c, nx, ny, nz))
    colors = np.tile(_logit(_GROUND), (nx, ny, nz, 1))
    if count:
        pc = _logit(np.array(prim_color))
        has = label >= 0
        colors[has] = pc[label[has]]
    # shade by height so columns carry vertical structure in the features
    colors = colors + 0.4 * (iz / max(nz - 1, 1))[..., None] - 0.2
    colors[~occ] = 0.0
    feature[: min(3, c)] = np.moveaxis(colors, -1, 0)[: min(3, c)]
    if c > 3:
        codes = rng.normal(0.0, 0.5, (max(count, 1) + 1, c - 3))
        lab = np.where(label >= 0, label + 1, 0)
        extra = codes[lab] * occ[..., None]
        feature[3:] = np.moveaxis(extra, -1, 0)
    feature += spec.noise * rng.standard_normal(feature.shape)

    s = spec.voxel_size
    bbox = np.array([[0.0, 0.0, 0.0], [(nx - 1) * s, (ny - 1) * s, (nz - 1) * s]])
    head = ColorHead.linear_rgb(c)
    return VoxelField(density.astype(np.float32), feature.astype(np.float32), bbox, head, shift_b=0.0)
