"""Radiance-field synthesis from a small exemplar over flattened voxel columns."""

__version__ = "0.1.0"

from .boundary import BoundarySynthesizer, boundary_constrained_synthesize, partition
from .columns import ColumnImage, flatten, unflatten
from .deform import DeformationField, analytic_correspondences, render_deformed, warp_sample
from .exceptions import NerfSynthError
from .field import Camera, ColorHead, RenderConfig, VoxelField, render_image, render_rays
from .shading import (
    Light,
    ShadingConfig,
    ShadingGuidedSynthesizer,
    ShadingMap,
    ShadingRig,
    build_guider,
    build_shading_map_rt,
)
from .synthesis import PatchSynthesizer, SynthesisParams, synthesize

__all__ = [
    "BoundarySynthesizer",
    "Camera",
    "ColorHead",
    "ColumnImage",
    "DeformationField",
    "Light",
    "NerfSynthError",
    "PatchSynthesizer",
    "RenderConfig",
    "ShadingConfig",
    "ShadingGuidedSynthesizer",
    "ShadingMap",
    "ShadingRig",
    "SynthesisParams",
    "VoxelField",
    "analytic_correspondences",
    "boundary_constrained_synthesize",
    "build_guider",
    "build_shading_map_rt",
    "flatten",
    "partition",
    "render_deformed",
    "render_image",
    "render_rays",
    "synthesize",
    "unflatten",
    "warp_sample",
]
