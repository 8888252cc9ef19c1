"""Boundary-constrained synthesis.

The exemplar lattice is split into four l_b x l_b corners, four boundary
strips of thickness l_b and the interior.  The output is built in three
stages: corners are copied verbatim (and locked), each strip is filled from
windows cut out of the matching exemplar strip, and the interior is filled
last from interior windows, so that every interior placement near the frame
is matched against synthesized frame content.

Each region's source windows may reach ``overlap`` columns past the region
edge towards its neighbours (strips only along their length).  That apron is
what lets a window line up with the content it overlaps; the cells it adds
are overlap cells at the matching target position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .columns import ColumnImage
from .exceptions import BoundaryTooLargeError, ExemplarTooSmallError, NoCandidatesError, UnknownModeError
from .synthesis import (
    Canvas,
    PatchSet,
    PlacementRecord,
    SynthesisParams,
    _as_column_image,
    _out_size,
    as_rng,
    place_step,
    random_index,
    scan_origins,
    seed_step,
)

__all__ = [
    "BoundaryPartition",
    "partition",
    "place_corners",
    "synthesize_strip",
    "synthesize_interior",
    "boundary_constrained_synthesize",
    "audit_provenance",
    "BoundarySynthesizer",
    "SIDES",
    "REGIONS",
]

SIDES = ("up", "down", "left", "right")
REGIONS = ("corner",) + SIDES + ("interior",)
CORNERS = ("up_left", "up_right", "down_left", "down_right")


@dataclass(frozen=True)
class BoundaryPartition:
    """Region layout of an (nx, ny) lattice with boundary width ``l_b``.

    Rows (first axis) run from ``up`` to ``down``; columns from ``left`` to
    ``right``.
    """

    shape: tuple
    l_b: int

    def rect(self, region):
        """Half-open (x0, x1, y0, y1) cell bounds of a region."""
        nx, ny = self.shape
        b = self.l_b
        return {
            "up": (0, b, b, ny - b),
            "down": (nx - b, nx, b, ny - b),
            "left": (b, nx - b, 0, b),
            "right": (b, nx - b, ny - b, ny),
            "interior": (b, nx - b, b, ny - b),
            "up_left": (0, b, 0, b),
            "up_right": (0, b, ny - b, ny),
            "down_left": (nx - b, nx, 0, b),
            "down_right": (nx - b, nx, ny - b, ny),
        }[region]

    def labels(self):
        """(nx, ny) array of region names; corners are labelled ``corner``."""
        out = np.empty(self.shape, dtype=object)
        for name in SIDES + ("interior",) + CORNERS:
            x0, x1, y0, y1 = self.rect(name)
            out[x0:x1, y0:y1] = "corner" if name in CORNERS else name
        return out

    def mask(self, region):
        lab = self.labels()
        return lab == region

    def cell_count(self, region):
        if region == "corner":
            return sum(_area(self.rect(c)) for c in CORNERS)
        return _area(self.rect(region))

    def source_bounds(self, region, overlap):
        """Window bounds for a region's patch set: the region plus its apron."""
        x0, x1, y0, y1 = self.rect(region)
        o = overlap if self.l_b > 0 else 0
        nx, ny = self.shape
        if region in ("up", "down"):
            return x0, x1, max(0, y0 - o), min(ny, y1 + o)
        if region in ("left", "right"):
            return max(0, x0 - o), min(nx, x1 + o), y0, y1
        if region == "interior":
            return max(0, x0 - o), min(nx, x1 + o), max(0, y0 - o), min(ny, y1 + o)
        return x0, x1, y0, y1

    def patch_size(self, region, patch_size):
        if region in ("up", "down"):
            return self.l_b, patch_size
        if region in ("left", "right"):
            return patch_size, self.l_b
        return patch_size, patch_size


def _area(rect):
    x0, x1, y0, y1 = rect
    return max(0, x1 - x0) * max(0, y1 - y0)


def partition(exemplar, l_b):
    """Split the exemplar lattice into corners, four strips and the interior."""
    shape = tuple(_as_column_image(exemplar).shape) if not isinstance(exemplar, tuple) else exemplar
    l_b = int(l_b)
    if l_b < 0 or 2 * l_b >= min(shape):
        raise BoundaryTooLargeError(f"need 0 <= 2*l_b < min{tuple(shape)}, got l_b={l_b}")
    return BoundaryPartition(tuple(int(s) for s in shape), l_b)


def region_patchset(data, n_z, n_primary, part: BoundaryPartition, region, params: SynthesisParams):
    """Windows fully inside ``region`` (plus apron) at the extraction step."""
    bounds = part.source_bounds(region, params.overlap)
    return PatchSet(data, n_z, n_primary, part.patch_size(region, params.patch_size),
                    params.extraction_step, (0,), bounds=bounds)


def _target_partition(out_shape, l_b):
    return BoundaryPartition(tuple(int(s) for s in out_shape), int(l_b))


def place_corners(canvas: Canvas, data, part: BoundaryPartition):
    """Copy the four exemplar corners verbatim onto the canvas corners and lock them."""
    log = []
    if part.l_b == 0:
        return log
    target = _target_partition(canvas.shape, part.l_b)
    for name in CORNERS:
        sx0, sx1, sy0, sy1 = part.rect(name)
        tx0, _, ty0, _ = target.rect(name)
        canvas.paste((tx0, ty0), data[sx0:sx1, sy0:sy1], lock=True)
        log.append(PlacementRecord(tx0, ty0, sx0, sy0, 0, 0.0, 0.0, "corner", -1, [],
                                   None, (part.l_b, part.l_b)))
    return log


def _require(ps, region):
    if len(ps) == 0:
        raise NoCandidatesError(f"no exemplar windows fit the {region} region")


def synthesize_strip(canvas: Canvas, side, patchset: PatchSet, part: BoundaryPartition,
                     params: SynthesisParams, rng, mode="two_phase"):
    """Fill one boundary strip of the canvas between its two end corners."""
    if side not in SIDES:
        raise UnknownModeError(f"unknown side {side!r}")
    _require(patchset, side)
    target = _target_partition(canvas.shape, part.l_b)
    x0, x1, y0, y1 = target.source_bounds(side, params.overlap)
    h, w = patchset.size
    if side in ("up", "down"):
        origins = [(x0, y) for y in scan_origins(y0, y1, w, params.stride)]
    else:
        origins = [(x, y0) for x in scan_origins(x0, x1, h, params.stride)]
    log = []
    for origin in origins:
        if not canvas.overlap(origin, patchset.size)[1].any():
            pid = random_index(rng, len(patchset))
            log.append(seed_step(canvas, origin, patchset, pid, side))
        else:
            log.append(place_step(canvas, origin, patchset, params, mode, rng, region=side))
    return log


def synthesize_interior(canvas: Canvas, patchset: PatchSet, part: BoundaryPartition,
                        params: SynthesisParams, rng, mode="two_phase", seed_patch=None):
    """Scanline fill of the interior, starting ``overlap`` cells inside the frame."""
    _require(patchset, "interior")
    target = _target_partition(canvas.shape, part.l_b)
    x0, x1, y0, y1 = target.source_bounds("interior", params.overlap)
    log = []
    for x in scan_origins(x0, x1, params.patch_size, params.stride):
        for y in scan_origins(y0, y1, params.patch_size, params.stride):
            if not canvas.overlap((x, y), patchset.size)[1].any():
                pid = random_index(rng, len(patchset)) if seed_patch is None else int(seed_patch)
                log.append(seed_step(canvas, (x, y), patchset, pid, "interior"))
            else:
                log.append(place_step(canvas, (x, y), patchset, params, mode, rng, region="interior"))
    return log


def audit_provenance(log, part: BoundaryPartition, out_shape, overlap):
    """Fraction of placements whose source window lies in the target's region.

    Corners must be copied from the same exemplar corner; every other record
    must be a window inside its region's source bounds and must target the
    matching region of the output.
    """
    if not log:
        return 1.0
    target = _target_partition(out_shape, part.l_b)
    ok = 0
    for r in log:
        h, w = r.size
        if r.region == "corner":
            good = any(part.rect(c)[0] == r.sx and part.rect(c)[2] == r.sy
                       and target.rect(c)[0] == r.tx and target.rect(c)[2] == r.ty for c in CORNERS)
        elif r.region in SIDES + ("interior",):
            sx0, sx1, sy0, sy1 = part.source_bounds(r.region, overlap)
            tx0, tx1, ty0, ty1 = target.source_bounds(r.region, overlap)
            good = (r.rot == 0 and sx0 <= r.sx and r.sx + h <= sx1 and sy0 <= r.sy and r.sy + w <= sy1
                    and tx0 <= r.tx < tx1 and ty0 <= r.ty < ty1)
        else:
            good = False
        ok += bool(good)
    return ok / len(log)


class BoundarySynthesizer(BaseEstimator):
    """Corners, then strips, then interior, each from its own exemplar region."""

    def __init__(self, boundary_width=None, patch_size=15, overlap=5, extraction_step=3, k_g=10,
                 eta=math.inf, mode="two_phase", greedy=False, leaf_size=32, max_leaf_visits=None,
                 random_state=None):
        self.boundary_width = boundary_width
        self.patch_size = patch_size
        self.overlap = overlap
        self.extraction_step = extraction_step
        self.k_g = k_g
        self.eta = eta
        self.mode = mode
        self.greedy = greedy
        self.leaf_size = leaf_size
        self.max_leaf_visits = max_leaf_visits
        self.random_state = random_state

    def fit(self, X, y=None, aux=None):
        if self.mode not in ("two_phase", "baseline", "geometry"):
            raise UnknownModeError(f"unknown synthesis mode {self.mode!r}")
        ex = _as_column_image(X)
        params = SynthesisParams(self.patch_size, self.overlap, self.extraction_step, self.k_g,
                                 eta=self.eta, greedy=self.greedy, leaf_size=self.leaf_size,
                                 max_leaf_visits=self.max_leaf_visits)
        l_b = params.patch_size if self.boundary_width is None else int(self.boundary_width)
        part = partition(ex.shape, l_b)
        data = ex.data if aux is None else np.concatenate([ex.data, np.asarray(aux, ex.data.dtype)], -1)
        n = ex.data.shape[2]
        regions = (SIDES if l_b > 0 else ()) + ("interior",)
        self.patchsets_ = {r: region_patchset(data, ex.n_z, n, part, r, params) for r in regions}
        self.exemplar_ = ex
        self.params_ = params
        self.partition_ = part
        self.data_ = data
        self.n_aux_ = 0 if aux is None else np.asarray(aux).shape[-1]
        return self

    def synthesize(self, out_size, seed_patch=None):
        check_is_fitted(self, "partition_")
        nx, ny = _out_size(out_size)
        params, part = self.params_, self.partition_
        if min(nx, ny) < 2 * part.l_b + params.patch_size:
            raise ExemplarTooSmallError(
                f"output {nx}x{ny} smaller than 2*l_b + patch size = {2 * part.l_b + params.patch_size}")
        rng = as_rng(self.random_state)
        canvas = Canvas((nx, ny), self.data_.shape[2], self.data_.dtype)
        log = place_corners(canvas, self.data_, part)
        if part.l_b > 0:
            for side in SIDES:
                log += synthesize_strip(canvas, side, self.patchsets_[side], part, params, rng, self.mode)
        log += synthesize_interior(canvas, self.patchsets_["interior"], part, params, rng, self.mode,
                                   seed_patch=seed_patch)
        self.placements_ = log
        self.canvas_ = canvas
        n = self.exemplar_.data.shape[2]
        self.aux_ = canvas.values[..., n:] if self.n_aux_ else None
        return self.exemplar_.with_data(np.ascontiguousarray(canvas.values[..., :n]))

    def fit_synthesize(self, X, out_size, seed_patch=None, aux=None):
        return self.fit(X, aux=aux).synthesize(out_size, seed_patch=seed_patch)

    def provenance(self):
        check_is_fitted(self, "placements_")
        return audit_provenance(self.placements_, self.partition_, self.canvas_.shape, self.params_.overlap)


def boundary_constrained_synthesize(exemplar, out_size, l_b=None, params: SynthesisParams | None = None,
                                    rng=None, mode="two_phase"):
    """Functional wrapper; returns (image, placement log)."""
    params = params or SynthesisParams()
    est = BoundarySynthesizer(l_b, params.patch_size, params.overlap, params.extraction_step, params.k_g,
                              params.eta, mode, params.greedy, params.leaf_size, params.max_leaf_visits, rng)
    out = est.fit_synthesize(exemplar, out_size)
    return out, est.placements_
