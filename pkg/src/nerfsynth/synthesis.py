"""Patch-based synthesis over flattened voxel columns.

The output lattice is filled patch by patch.  For every placement the part
of the footprint that already holds content (the overlap) is matched against
all extracted exemplar windows:

* ``two_phase`` -- k_g nearest windows by density-channel distance, then a
  random pick weighted by the feature-channel distance of those candidates;
* ``baseline`` -- one search over the concatenated, lambda-weighted
  density and feature channels followed by the same weighted pick;
* ``geometry`` -- density-only, greedy (used to build shading guiders).

Overlap cells are blended with linear inverse-distance weights, new cells
are copied verbatim.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.ndimage import distance_transform_cdt
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .columns import ColumnImage, flatten
from .exceptions import EmptyMaskError, ExemplarTooSmallError, NoCandidatesError, UnknownModeError
from .field import VoxelField
from .kdtree import KDTree, squared_distances

__all__ = [
    "SynthesisParams",
    "Patch",
    "PatchSet",
    "PatchIndex",
    "Selection",
    "PlacementRecord",
    "Canvas",
    "extract_patches",
    "patch_distance",
    "build_index",
    "ann_search",
    "select_by_pdf",
    "two_phase_select",
    "baseline_select",
    "blend_weights",
    "blend_overlap",
    "scan_origins",
    "synthesize",
    "PatchSynthesizer",
]

MODES = ("two_phase", "baseline", "geometry")
ROTATIONS = (0, 90, 180, 270)
_PDF_EPS = 1e-12


@dataclass
class SynthesisParams:
    patch_size: int = 15
    overlap: int = 5
    extraction_step: int = 3
    k_g: int = 10
    k_s: int = 20
    eta: float = math.inf
    lam: float = 1.0
    greedy: bool = False
    rotations: bool = False
    leaf_size: int = 32
    max_leaf_visits: int | None = None

    def __post_init__(self):
        if not 0 < self.overlap < self.patch_size:
            raise ValueError("need 0 < overlap < patch_size")
        if self.k_g < 1 or self.k_s < 1:
            raise ValueError("k_g and k_s must be >= 1")
        if self.extraction_step < 1:
            raise ValueError("extraction_step must be >= 1")

    @property
    def stride(self):
        return self.patch_size - self.overlap


@dataclass(frozen=True)
class Patch:
    id: int
    origin: tuple
    size: tuple
    rotation: int = 0


class PatchSet:
    """Windows of fixed size cut from (optionally rotated) copies of an exemplar.

    ``data`` is the exemplar column lattice, possibly with auxiliary
    channels appended after the ``n_primary`` density+feature channels.
    Ids follow rotation-major, then row-major window order.
    """

    def __init__(self, data, n_z, n_primary, size, step=1, rotations=(0,), bounds=None):
        data = np.asarray(data)
        self.n_z = int(n_z)
        self.n_primary = int(n_primary)
        self.size = (int(size[0]), int(size[1]))
        self.exemplar_shape = data.shape[:2]
        self.lattices = {}
        rots, oxs, oys = [], [], []
        h, w = self.size
        for rot in rotations:
            lat = np.ascontiguousarray(np.rot90(data, rot // 90, axes=(0, 1)))
            self.lattices[rot] = lat
            if bounds is None or rot != 0:
                x0, x1, y0, y1 = 0, lat.shape[0], 0, lat.shape[1]
            else:
                x0, x1, y0, y1 = bounds
            xs = np.arange(x0, x1 - h + 1, step)
            ys = np.arange(y0, y1 - w + 1, step)
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            rots.append(np.full(gx.size, rot))
            oxs.append(gx.ravel())
            oys.append(gy.ravel())
        self.rotation = np.concatenate(rots).astype(np.int64)
        self.ox = np.concatenate(oxs).astype(np.int64)
        self.oy = np.concatenate(oys).astype(np.int64)
        self._indices = {}

    def __len__(self):
        return self.rotation.size

    @property
    def depth(self):
        return next(iter(self.lattices.values())).shape[2]

    def channels(self, selector):
        if selector == "density":
            return slice(0, self.n_z)
        if selector == "feature":
            return slice(self.n_z, self.n_primary)
        if selector == "primary":
            return slice(0, self.n_primary)
        if selector == "shading":
            if self.depth == self.n_primary:
                raise UnknownModeError("patch set carries no shading channels")
            return slice(self.n_primary, self.depth)
        raise UnknownModeError(f"unknown selector {selector!r}")

    def patch(self, pid):
        return Patch(int(pid), (int(self.ox[pid]), int(self.oy[pid])), self.size, int(self.rotation[pid]))

    def patches(self):
        return [self.patch(i) for i in range(len(self))]

    def window(self, pid):
        h, w = self.size
        lat = self.lattices[int(self.rotation[pid])]
        x, y = self.ox[pid], self.oy[pid]
        return lat[x:x + h, y:y + w]

    def gather(self, cells, channels, ids=None):
        """Values at footprint ``cells`` (rows, cols) for windows ``ids``: (n, n_cells, n_channels)."""
        ids = np.arange(len(self)) if ids is None else np.asarray(ids, dtype=np.int64)
        a, b = cells
        out = np.empty((ids.size, a.size, channels.stop - channels.start),
                       dtype=next(iter(self.lattices.values())).dtype)
        for rot, lat in self.lattices.items():
            sel = np.nonzero(self.rotation[ids] == rot)[0]
            if sel.size:
                xs = self.ox[ids[sel]][:, None] + a
                ys = self.oy[ids[sel]][:, None] + b
                out[sel] = lat[xs, ys, channels]
        return out

    def source_cells(self, pid, mask=None):
        """Exemplar (unrotated) lattice coordinates covered by window ``pid``."""
        h, w = self.size
        a, b = np.nonzero(np.ones((h, w), bool) if mask is None else mask)
        x = self.ox[pid] + a
        y = self.oy[pid] + b
        nx, ny = self.exemplar_shape
        # np.rot90 maps B[i, j] = A[j, A.shape[1] - 1 - i]; unwind one turn at a time
        for m in range(int(self.rotation[pid]) // 90, 0, -1):
            width = ny if (m - 1) % 2 == 0 else nx
            x, y = y, width - 1 - x
        return x, y

    def index(self, mask, selector, lam=1.0, leaf_size=32, max_leaf_visits=None):
        key = (mask.shape, np.packbits(mask).tobytes(), selector, float(lam))
        idx = self._indices.get(key)
        if idx is None:
            idx = build_index(self, mask, selector, lam=lam, leaf_size=leaf_size,
                              max_leaf_visits=max_leaf_visits)
            self._indices[key] = idx
        return idx


def as_rng(random_state):
    """numpy Generator passes through; anything else goes via sklearn's check_random_state."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return check_random_state(random_state)


def random_index(rng, n):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(n))
    return int(rng.randint(n))


def _footprint_mask(mask, size):
    full = np.zeros(size, bool)
    full[: mask.shape[0], : mask.shape[1]] = mask
    return full


@dataclass
class PatchIndex:
    """kd-tree over the overlap-zone vectors of every window in a patch set."""

    patchset: PatchSet
    mask: np.ndarray
    selector: str
    lam: float
    tree: KDTree

    def vectors_for(self, values):
        """Query vector built from a (h, w, D) array aligned with the footprint."""
        return _selector_vectors(values[self.mask][None], self.patchset, self.selector, self.lam)[0]


def _selector_vectors(cell_values, patchset, selector, lam):
    """(n, n_cells, D) -> (n, n_cells * channels) for the given selector."""
    if selector == "concat":
        dens = cell_values[..., patchset.channels("density")]
        feat = cell_values[..., patchset.channels("feature")]
        dens = dens * np.asarray(lam, dtype=dens.dtype)
        vec = np.concatenate([dens, feat], axis=-1)
    else:
        vec = cell_values[..., patchset.channels(selector)]
    return np.ascontiguousarray(vec.reshape(vec.shape[0], -1))


def extract_patches(exemplar: ColumnImage, params: SynthesisParams):
    """All ``patch_size`` windows at stride ``extraction_step`` (x4 with rotations)."""
    nx, ny = exemplar.shape
    if min(nx, ny) < params.patch_size:
        raise ExemplarTooSmallError(f"exemplar {nx}x{ny} smaller than patch size {params.patch_size}")
    rots = ROTATIONS if params.rotations else (0,)
    ps = PatchSet(exemplar.data, exemplar.n_z, exemplar.data.shape[2],
                  (params.patch_size, params.patch_size), params.extraction_step, rots)
    return ps.patches()


def patch_distance(a, b, mask, selector="concat", n_z=None, lam=1.0):
    """L2 distance between two footprints restricted to ``mask`` cells.

    ``selector`` is one of ``density``, ``feature``, ``concat`` (the
    baseline's sqrt(lam^2 d_density^2 + d_feature^2)) or ``all``.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise EmptyMaskError("overlap mask has no cells")
    a = np.asarray(a, dtype=np.float64)[mask]
    b = np.asarray(b, dtype=np.float64)[mask]
    diff = a - b
    if selector == "all":
        return float(np.sqrt(np.sum(diff ** 2)))
    if n_z is None:
        raise ValueError("n_z is required for channel selectors")
    dd = np.sum(diff[:, :n_z] ** 2)
    df = np.sum(diff[:, n_z:] ** 2)
    if selector == "density":
        return float(np.sqrt(dd))
    if selector == "feature":
        return float(np.sqrt(df))
    if selector == "concat":
        return float(np.sqrt(lam * lam * dd + df))
    raise UnknownModeError(f"unknown selector {selector!r}")


def build_index(patchset: PatchSet, mask, selector, lam=1.0, leaf_size=32, max_leaf_visits=None):
    mask = np.asarray(mask, bool)
    if len(patchset) == 0:
        raise NoCandidatesError("cannot index an empty patch set")
    if not mask.any():
        raise EmptyMaskError("overlap mask has no cells")
    cells = np.nonzero(mask)
    chans = patchset.channels("primary" if selector == "concat" else selector)
    vec = patchset.gather(cells, chans)
    if selector == "concat":
        # per-cell layout is already [density | feature]; scale density in place
        vec[..., : patchset.n_z] *= np.asarray(lam, dtype=vec.dtype)
    vec = vec.reshape(vec.shape[0], -1)
    tree = KDTree(vec, leaf_size=leaf_size, max_leaf_visits=max_leaf_visits)
    return PatchIndex(patchset, mask.copy(), selector, lam, tree)


def ann_search(index: PatchIndex, query, k):
    """``k`` nearest windows as (patch id, distance) pairs, ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    dist, ids = index.tree.query(np.asarray(query).reshape(-1), k)
    return list(zip(ids.tolist(), dist.tolist()))


def select_by_pdf(candidates, rng=None, greedy=False):
    """Pick one of ``(patch, distance)`` pairs.

    Probability is proportional to ``exp(-d^2 / (2 dbar^2))`` with ``dbar``
    the mean candidate distance; if ``dbar`` vanishes the pick is uniform.
    ``greedy`` returns the smallest (distance, id) instead.
    """
    if not candidates:
        raise NoCandidatesError("no candidates to select from")
    if len(candidates) == 1:
        return candidates[0][0]
    # canonical (distance, id) order: the pick depends on the candidate set, not its listing order
    candidates = sorted(candidates, key=lambda c: (c[1], c[0].id if isinstance(c[0], Patch) else c[0]))
    if greedy:
        return candidates[0][0]
    d = np.array([c[1] for c in candidates], dtype=np.float64)
    rng = as_rng(rng)
    dbar = d.mean()
    if dbar < _PDF_EPS:
        p = np.ones_like(d)
    else:
        p = np.exp(-(d ** 2) / (2.0 * dbar ** 2))
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    return candidates[min(i, len(candidates) - 1)][0]


@dataclass
class Selection:
    patch_id: int
    d_density: float
    d_feature: float
    candidates: list = dc_field(default_factory=list)
    shading_candidates: list | None = None


def _eta_filter(pairs, eta):
    kept = [p for p in pairs if p[1] <= eta]
    return kept if kept else pairs[:1]


def _masked_distances(patchset, ids, cells, target_cells, selector):
    chans = patchset.channels(selector)
    vals = patchset.gather(cells, chans, ids).reshape(len(ids), -1)
    q = np.ascontiguousarray(target_cells[:, chans].reshape(-1)).astype(vals.dtype)
    return np.sqrt(squared_distances(vals, q))


def _check_target(target_values, mask, patchset):
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise EmptyMaskError("overlap mask has no cells")
    if mask.shape != patchset.size:
        mask = _footprint_mask(mask, patchset.size)
    tv = np.asarray(target_values)
    if tv.shape[:2] != patchset.size:
        full = np.zeros(patchset.size + tv.shape[2:], dtype=tv.dtype)
        full[: tv.shape[0], : tv.shape[1]] = tv
        tv = full
    return tv, mask


def two_phase_select(target_values, mask, patchset: PatchSet, params: SynthesisParams, rng=None,
                     candidates=None):
    """Density-first, feature-second patch choice for one footprint.

    ``candidates`` restricts the search to a subset of patch ids (shading
    guidance); otherwise phase 1 runs on the cached density index.
    """
    tv, mask = _check_target(target_values, mask, patchset)
    cells = np.nonzero(mask)
    target_cells = tv[mask]
    if candidates is None:
        index = patchset.index(mask, "density", leaf_size=params.leaf_size,
                               max_leaf_visits=params.max_leaf_visits)
        phase1 = ann_search(index, index.vectors_for(tv), params.k_g)
    else:
        ids = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
        if ids.size == 0:
            raise NoCandidatesError("empty candidate restriction")
        d = _masked_distances(patchset, ids, cells, target_cells, "density")
        order = np.lexsort((ids, d))[: params.k_g]
        phase1 = list(zip(ids[order].tolist(), d[order].tolist()))
    phase1 = _eta_filter(phase1, params.eta)
    ids1 = np.array([p for p, _ in phase1], dtype=np.int64)
    d_feat = _masked_distances(patchset, ids1, cells, target_cells, "feature")
    pairs = list(zip(ids1.tolist(), d_feat.tolist()))
    chosen = select_by_pdf(pairs, rng, greedy=params.greedy)
    k = ids1.tolist().index(chosen)
    return Selection(chosen, phase1[k][1], float(d_feat[k]), [p for p, _ in phase1])


def baseline_select(target_values, mask, patchset: PatchSet, params: SynthesisParams, rng=None):
    """Single search on lambda-weighted concatenated channels, then weighted pick."""
    tv, mask = _check_target(target_values, mask, patchset)
    index = patchset.index(mask, "concat", lam=params.lam, leaf_size=params.leaf_size,
                           max_leaf_visits=params.max_leaf_visits)
    found = _eta_filter(ann_search(index, index.vectors_for(tv), params.k_g), params.eta)
    chosen = select_by_pdf(found, rng, greedy=params.greedy)
    cells = np.nonzero(mask)
    target_cells = tv[mask]
    ids = np.array([chosen])
    dd = float(_masked_distances(patchset, ids, cells, target_cells, "density")[0])
    df = float(_masked_distances(patchset, ids, cells, target_cells, "feature")[0])
    return Selection(chosen, dd, df, [p for p, _ in found])


def _geometry_select(target_values, mask, patchset, params, rng=None, candidates=None):
    """Phase 1 only: the density-nearest window (id tie-break)."""
    tv, mask = _check_target(target_values, mask, patchset)
    cells = np.nonzero(mask)
    if candidates is None:
        index = patchset.index(mask, "density", leaf_size=params.leaf_size,
                               max_leaf_visits=params.max_leaf_visits)
        pid, dd = ann_search(index, index.vectors_for(tv), 1)[0]
    else:
        ids = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
        d = _masked_distances(patchset, ids, cells, tv[mask], "density")
        j = np.lexsort((ids, d))[0]
        pid, dd = int(ids[j]), float(d[j])
    df = float(_masked_distances(patchset, np.array([pid]), cells, tv[mask], "feature")[0])
    return Selection(pid, dd, df, [pid])


def blend_weights(existing_in_footprint, existing_outside, locked=None):
    """Weight of the incoming patch for every footprint cell.

    ``existing_in_footprint`` marks overlap cells; ``existing_outside`` is a
    window around the footprint (footprint centred, padded by the same
    amount on all sides) marking synthesized cells that the incoming patch
    does not cover.  With d_old/d_new the chessboard distance (minus one)
    from a cell to the nearest outside-existing / new cell,
    ``w_new = d_old / (d_old + d_new)``.  New cells get weight 1.
    """
    ov = np.asarray(existing_in_footprint, bool)
    h, w = ov.shape
    weights = np.ones((h, w))
    if not ov.any():
        return weights
    if (~ov).any():
        d_new = distance_transform_cdt(ov, metric="chessboard").astype(np.float64) - 1.0
    else:
        d_new = np.full((h, w), np.inf)
    outside = np.asarray(existing_outside, bool)
    if outside.any():
        d_old_full = distance_transform_cdt(~outside, metric="chessboard").astype(np.float64) - 1.0
        px = (outside.shape[0] - h) // 2
        py = (outside.shape[1] - w) // 2
        d_old = d_old_full[px:px + h, py:py + w]
    else:
        d_old = np.full((h, w), np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        wn = np.where(np.isinf(d_new), 0.0, np.where(np.isinf(d_old), 1.0, d_old / (d_old + d_new)))
    wn = np.where((d_old == 0) & (d_new == 0), 0.5, wn)
    weights[ov] = wn[ov]
    if locked is not None:
        weights[np.asarray(locked, bool)] = 0.0
    return weights


def blend_overlap(existing, incoming, weights):
    """``existing + w * (incoming - existing)``: exact when both agree."""
    existing = np.asarray(existing)
    incoming = np.asarray(incoming)
    w = np.asarray(weights, dtype=existing.dtype)[..., None]
    return existing + w * (incoming - existing)


@dataclass
class PlacementRecord:
    tx: int
    ty: int
    sx: int
    sy: int
    rot: int
    d_density: float
    d_feature: float
    region: str = ""
    patch_id: int = -1
    candidates: list = dc_field(default_factory=list)
    shading_candidates: list | None = None
    size: tuple = ()

    def line(self, with_region=False):
        s = f"{self.tx} {self.ty} {self.sx} {self.sy} {self.rot} {self.d_density:.9g} {self.d_feature:.9g}"
        return f"{s} {self.region}" if with_region else s


class Canvas:
    """Output lattice being filled, with written/locked masks."""

    def __init__(self, shape, depth, dtype=np.float32):
        self.values = np.zeros(tuple(shape) + (depth,), dtype=dtype)
        self.filled = np.zeros(tuple(shape), bool)
        self.locked = np.zeros(tuple(shape), bool)

    @property
    def shape(self):
        return self.filled.shape

    def footprint(self, origin, size):
        x, y = origin
        h = min(size[0], self.shape[0] - x)
        w = min(size[1], self.shape[1] - y)
        return slice(x, x + h), slice(y, y + w)

    def overlap(self, origin, size):
        """(known values, mask) over the cropped footprint."""
        fx, fy = self.footprint(origin, size)
        return self.values[fx, fy], self.filled[fx, fy]

    def paste(self, origin, window, lock=False):
        """Blend ``window`` (full patch size) into the canvas at ``origin``."""
        fx, fy = self.footprint(origin, window.shape[:2])
        h, w = fx.stop - fx.start, fy.stop - fy.start
        incoming = window[:h, :w]
        ov = self.filled[fx, fy]
        pad = max(h, w)
        x0, y0 = fx.start - pad, fy.start - pad
        outside = np.zeros((h + 2 * pad, w + 2 * pad), bool)
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1 = min(fx.stop + pad, self.shape[0])
        cy1 = min(fy.stop + pad, self.shape[1])
        outside[cx0 - x0:cx1 - x0, cy0 - y0:cy1 - y0] = self.filled[cx0:cx1, cy0:cy1]
        outside[pad:pad + h, pad:pad + w] = False
        cur = self.values[fx, fy]
        if ov.any():
            weights = blend_weights(ov, outside, self.locked[fx, fy])
            cur[ov] = blend_overlap(cur[ov], incoming[ov], weights[ov])
            cur[~ov] = incoming[~ov]
        else:
            cur[...] = incoming
        self.filled[fx, fy] = True
        if lock:
            self.locked[fx, fy] = True


def scan_origins(start, stop, size, stride):
    """Patch origins covering [start, stop) with the given stride (last one cropped)."""
    out = [start]
    while out[-1] + size < stop:
        out.append(out[-1] + stride)
    return out


def _choose(mode, canvas, origin, patchset, params, rng, candidates=None):
    values, mask = canvas.overlap(origin, patchset.size)
    if mode == "two_phase":
        return two_phase_select(values, mask, patchset, params, rng, candidates=candidates)
    if mode == "baseline":
        return baseline_select(values, mask, patchset, params, rng)
    if mode == "geometry":
        return _geometry_select(values, mask, patchset, params, rng, candidates=candidates)
    raise UnknownModeError(f"unknown synthesis mode {mode!r}")


def place_step(canvas, origin, patchset, params, mode, rng, region="", candidates=None, lock=False):
    """Choose and paste one window; returns its placement record."""
    sel = _choose(mode, canvas, origin, patchset, params, rng, candidates)
    canvas.paste(origin, patchset.window(sel.patch_id), lock=lock)
    return _record(origin, patchset, sel, region)


def _record(origin, patchset, sel, region):
    p = patchset.patch(sel.patch_id)
    return PlacementRecord(int(origin[0]), int(origin[1]), p.origin[0], p.origin[1], p.rotation,
                           float(sel.d_density), float(sel.d_feature), region, p.id,
                           list(sel.candidates), sel.shading_candidates, patchset.size)


def seed_step(canvas, origin, patchset, pid, region="", lock=False):
    canvas.paste(origin, patchset.window(pid), lock=lock)
    return _record(origin, patchset, Selection(int(pid), 0.0, 0.0, [int(pid)]), region)


def _as_column_image(X):
    if isinstance(X, ColumnImage):
        return X
    if isinstance(X, VoxelField):
        return flatten(X)
    raise TypeError("expected a VoxelField or ColumnImage exemplar")


def _out_size(out_size):
    if np.isscalar(out_size):
        return int(out_size), int(out_size)
    a, b = out_size
    return int(a), int(b)


class PatchSynthesizer(BaseEstimator):
    """Scanline patch synthesis of a larger column lattice from an exemplar.

    ``fit`` cuts the exemplar into windows; ``synthesize`` fills a canvas of
    the requested size left-to-right, top-to-bottom with stride
    ``patch_size - overlap``.  Indices for each overlap shape are built on
    first use and reused across calls.
    """

    def __init__(self, patch_size=15, overlap=5, extraction_step=3, k_g=10, eta=math.inf, lam=1.0,
                 mode="two_phase", greedy=False, rotations=False, leaf_size=32, max_leaf_visits=None,
                 random_state=None):
        self.patch_size = patch_size
        self.overlap = overlap
        self.extraction_step = extraction_step
        self.k_g = k_g
        self.eta = eta
        self.lam = lam
        self.mode = mode
        self.greedy = greedy
        self.rotations = rotations
        self.leaf_size = leaf_size
        self.max_leaf_visits = max_leaf_visits
        self.random_state = random_state

    def _params(self):
        return SynthesisParams(self.patch_size, self.overlap, self.extraction_step, self.k_g,
                               eta=self.eta, lam=self.lam, greedy=self.greedy,
                               rotations=self.rotations, leaf_size=self.leaf_size,
                               max_leaf_visits=self.max_leaf_visits)

    def fit(self, X, y=None, aux=None):
        """``aux`` (Nx, Ny, A) channels are carried through synthesis but never matched."""
        if self.mode not in MODES:
            raise UnknownModeError(f"unknown synthesis mode {self.mode!r}")
        ex = _as_column_image(X)
        params = self._params()
        if min(ex.shape) < params.patch_size:
            raise ExemplarTooSmallError(f"exemplar {ex.shape} smaller than patch size {params.patch_size}")
        data = ex.data if aux is None else np.concatenate([ex.data, np.asarray(aux, ex.data.dtype)], -1)
        self.exemplar_ = ex
        self.params_ = params
        self.n_aux_ = 0 if aux is None else np.asarray(aux).shape[-1]
        self.patchset_ = PatchSet(data, ex.n_z, ex.data.shape[2], (params.patch_size,) * 2,
                                  params.extraction_step, ROTATIONS if params.rotations else (0,))
        return self

    def synthesize(self, out_size, seed_patch=None):
        check_is_fitted(self, "patchset_")
        nx, ny = _out_size(out_size)
        params = self.params_
        if min(nx, ny) < params.patch_size:
            raise ExemplarTooSmallError(f"output {nx}x{ny} smaller than patch size {params.patch_size}")
        rng = as_rng(self.random_state)
        ps = self.patchset_
        canvas = Canvas((nx, ny), ps.depth, ps.lattices[0].dtype)
        log = []
        xs = scan_origins(0, nx, params.patch_size, params.stride)
        ys = scan_origins(0, ny, params.patch_size, params.stride)
        for x in xs:
            for y in ys:
                if x == 0 and y == 0:
                    pid = random_index(rng, len(ps)) if seed_patch is None else int(seed_patch)
                    log.append(seed_step(canvas, (0, 0), ps, pid))
                else:
                    log.append(place_step(canvas, (x, y), ps, params, self.mode, rng))
        self.placements_ = log
        self.canvas_ = canvas
        return self._result(canvas)

    def _result(self, canvas):
        ex = self.exemplar_
        n = ex.data.shape[2]
        self.aux_ = canvas.values[..., n:] if self.n_aux_ else None
        return ex.with_data(np.ascontiguousarray(canvas.values[..., :n]))

    def fit_synthesize(self, X, out_size, seed_patch=None, aux=None):
        return self.fit(X, aux=aux).synthesize(out_size, seed_patch=seed_patch)


def synthesize(exemplar, out_size, params: SynthesisParams | None = None, mode="two_phase", rng=None,
               seed_patch=None):
    """Functional wrapper around :class:`PatchSynthesizer`; returns (image, log)."""
    params = params or SynthesisParams()
    est = PatchSynthesizer(params.patch_size, params.overlap, params.extraction_step, params.k_g,
                           params.eta, params.lam, mode, params.greedy, params.rotations,
                           params.leaf_size, params.max_leaf_visits, rng)
    out = est.fit_synthesize(exemplar, out_size, seed_patch=seed_patch)
    return out, est.placements_
