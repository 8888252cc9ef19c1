"""Flattened column representation of a voxel field.

Each (x, y) lattice site holds one vector: the ``Nz`` raw densities of the
column followed by its ``C * Nz`` features (feature-major, i.e. the C-order
flattening of ``feature[:, i, j, :]``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ColorHead, VoxelField

__all__ = ["ColumnImage", "flatten", "unflatten"]


@dataclass
class ColumnImage:
    data: np.ndarray
    n_z: int
    n_features: int
    #: world-space voxel spacing and z-range, carried so the image can be
    #: turned back into a field at any lattice size
    spacing: np.ndarray | None = None
    origin: np.ndarray | None = None
    color_head: ColorHead | None = None
    shift_b: float = 0.0
    source_bbox: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("column data must have shape (Nx, Ny, D)")
        if self.data.shape[2] != self.n_z * (1 + self.n_features):
            raise ValueError(
                f"column length {self.data.shape[2]} != Nz*(1+C) = {self.n_z * (1 + self.n_features)}"
            )

    @property
    def shape(self):
        return self.data.shape[:2]

    @property
    def density(self):
        """I^(d): (Nx, Ny, Nz) view."""
        return self.data[..., : self.n_z]

    @property
    def feature(self):
        """I^(f): (Nx, Ny, C*Nz) view."""
        return self.data[..., self.n_z:]

    def with_data(self, data):
        data = np.asarray(data)
        keep_box = data.shape[:2] == self.data.shape[:2]
        return ColumnImage(data, self.n_z, self.n_features, self.spacing, self.origin,
                           self.color_head, self.shift_b, self.source_bbox if keep_box else None)

    def rotated(self, quarter_turns):
        """Lattice rotated by ``90 * quarter_turns`` degrees about Z."""
        return self.with_data(np.ascontiguousarray(np.rot90(self.data, quarter_turns, axes=(0, 1))))

    def copy(self):
        return self.with_data(self.data.copy())


def flatten(field: VoxelField) -> ColumnImage:
    nx, ny, nz = field.shape
    c = field.n_features
    feat = np.moveaxis(field.feature, 0, 2).reshape(nx, ny, c * nz)
    data = np.concatenate([field.density, feat], axis=-1)
    return ColumnImage(data, nz, c, spacing=field.voxel_size.copy(), origin=field.bbox[0].copy(),
                       color_head=field.color_head, shift_b=field.shift_b,
                       source_bbox=field.bbox.copy())


def unflatten(image: ColumnImage, color_head=None, bbox=None) -> VoxelField:
    """Inverse of :func:`flatten`.

    Without an explicit ``bbox`` the box is rebuilt from the stored spacing
    and origin so a larger synthesized lattice keeps the exemplar's voxel size.
    """
    nx, ny, _ = image.data.shape
    nz, c = image.n_z, image.n_features
    density = image.data[..., :nz]
    feature = np.moveaxis(image.data[..., nz:].reshape(nx, ny, c, nz), 2, 0)
    if bbox is None and image.source_bbox is not None:
        bbox = image.source_bbox
    if bbox is None:
        spacing = np.ones(3) if image.spacing is None else np.asarray(image.spacing)
        origin = np.zeros(3) if image.origin is None else np.asarray(image.origin)
        dims = np.array([nx, ny, nz])
        bbox = np.stack([origin, origin + spacing * np.maximum(dims - 1, 1)])
    head = color_head or image.color_head or ColorHead.linear_rgb(c)
    return VoxelField(density, feature, bbox, head, image.shift_b)
