"""On-disk formats.

Bundles are directories holding a UTF-8 ``meta`` file of ``key = value``
lines plus little-endian float32 C-order ``.bin`` arrays whose shapes are
declared in ``meta``.  Images are binary PPM (RGB) and PFM.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .columns import ColumnImage
from .exceptions import BundleFormatError
from .field import Camera, ColorHead, VoxelField

__all__ = [
    "read_meta",
    "write_meta",
    "save_field",
    "load_field",
    "save_columns",
    "load_columns",
    "bundle_hash",
    "file_hash",
    "write_ppm",
    "read_ppm",
    "write_pfm",
    "read_pfm",
    "write_placement_log",
    "read_placement_log",
    "save_shading_map",
    "load_shading_map",
    "write_shading_manifest",
    "read_shading_manifest",
    "write_correspondences",
    "read_correspondences",
    "save_mlp",
    "load_mlp",
    "write_json",
]

_F32 = np.dtype("<f4")


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.asarray(v).ravel().tolist())
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_meta(path, items: dict):
    lines = [f"{k} = {_fmt(v)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_meta(path):
    path = Path(path)
    if not path.is_file():
        raise BundleFormatError(f"missing meta file {path}")
    out = {}
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BundleFormatError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _ints(s):
    return [int(x) for x in s.split()]


def _floats(s):
    return [float(x) for x in s.split()]


def _write_array(path, arr):
    np.ascontiguousarray(arr, dtype=_F32).tofile(path)


def _read_array(path, shape):
    path = Path(path)
    if not path.is_file():
        raise BundleFormatError(f"missing array file {path}")
    arr = np.fromfile(path, dtype=_F32)
    if arr.size != int(np.prod(shape)):
        raise BundleFormatError(f"{path}: {arr.size} values, expected shape {tuple(shape)}")
    return arr.reshape(shape).astype(np.float32)


def save_mlp(path, weights, biases):
    flat = np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in zip(weights, biases)])
    _write_array(path, flat)


def load_mlp(path, layer_sizes):
    flat = np.fromfile(path, dtype=_F32).astype(np.float64)
    need = sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))
    if flat.size != need:
        raise BundleFormatError(f"{path}: {flat.size} values, layer sizes {layer_sizes} need {need}")
    ws, bs, pos = [], [], 0
    for i, o in zip(layer_sizes[:-1], layer_sizes[1:]):
        ws.append(flat[pos:pos + o * i].reshape(o, i))
        pos += o * i
        bs.append(flat[pos:pos + o])
        pos += o
    return ws, bs


def _head_meta(head: ColorHead):
    return {
        "pe_degrees_x": head.pe_degrees_x,
        "pe_degrees_d": head.pe_degrees_d,
        "layer_sizes": head.layer_sizes,
    }


def save_field(field: VoxelField, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nx, ny, nz = field.shape
    write_meta(d / "meta", {
        "format": "voxel-field 1",
        "grid_shape": [nx, ny, nz],
        "n_features": field.n_features,
        "bbox": field.bbox.ravel(),
        "shift_b": float(field.shift_b),
        **_head_meta(field.color_head),
    })
    _write_array(d / "density.bin", field.density)
    _write_array(d / "feature.bin", field.feature)
    save_mlp(d / "mlp.bin", field.color_head.weights, field.color_head.biases)
    return d


def _load_head(d, meta):
    sizes = _ints(meta["layer_sizes"])
    ws, bs = load_mlp(d / "mlp.bin", sizes)
    return ColorHead(ws, bs, int(meta["pe_degrees_x"]), int(meta["pe_degrees_d"]))


def load_field(directory) -> VoxelField:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"exemplar bundle not found: {d}")
    meta = read_meta(d / "meta")
    try:
        nx, ny, nz = _ints(meta["grid_shape"])
        c = int(meta["n_features"])
        bbox = np.array(_floats(meta["bbox"])).reshape(2, 3)
        shift = float(meta.get("shift_b", "0"))
    except (KeyError, ValueError) as exc:
        raise BundleFormatError(f"{d}/meta: {exc}") from exc
    density = _read_array(d / "density.bin", (nx, ny, nz))
    feature = _read_array(d / "feature.bin", (c, nx, ny, nz))
    return VoxelField(density, feature, bbox, _load_head(d, meta), shift)


def save_columns(image: ColumnImage, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nx, ny, depth = image.data.shape
    items = {
        "format": "column-image 1",
        "lattice_shape": [nx, ny],
        "n_z": image.n_z,
        "n_features": image.n_features,
        "shift_b": float(image.shift_b),
    }
    if image.spacing is not None:
        items["spacing"] = np.asarray(image.spacing, dtype=np.float64)
    if image.origin is not None:
        items["origin"] = np.asarray(image.origin, dtype=np.float64)
    if image.source_bbox is not None:
        items["bbox"] = np.asarray(image.source_bbox).ravel()
    if image.color_head is not None:
        items.update(_head_meta(image.color_head))
        save_mlp(d / "mlp.bin", image.color_head.weights, image.color_head.biases)
    write_meta(d / "meta", items)
    _write_array(d / "columns.bin", image.data)
    return d


def load_columns(directory) -> ColumnImage:
    d = Path(directory)
    meta = read_meta(d / "meta")
    nx, ny = _ints(meta["lattice_shape"])
    nz, c = int(meta["n_z"]), int(meta["n_features"])
    data = _read_array(d / "columns.bin", (nx, ny, nz * (1 + c)))
    head = _load_head(d, meta) if "layer_sizes" in meta else None
    spacing = np.array(_floats(meta["spacing"])) if "spacing" in meta else None
    origin = np.array(_floats(meta["origin"])) if "origin" in meta else None
    bbox = np.array(_floats(meta["bbox"])).reshape(2, 3) if "bbox" in meta else None
    return ColumnImage(data, nz, c, spacing, origin, head, float(meta.get("shift_b", "0")), bbox)


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def bundle_hash(path):
    """sha256 over a file, or over every file of a directory in name order."""
    p = Path(path)
    if p.is_file():
        return file_hash(p)
    h = hashlib.sha256()
    for f in sorted(x for x in p.rglob("*") if x.is_file()):
        h.update(f.relative_to(p).as_posix().encode())
        h.update(bytes.fromhex(file_hash(f)))
    return h.hexdigest()


def write_ppm(path, rgb):
    """8-bit binary PPM from floats in [0, 1]."""
    img = np.clip(np.round(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.reshape(h, w, 3).tobytes())


def _header_tokens(fh, count):
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise BundleFormatError("unexpected end of image header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_ppm(path):
    with open(path, "rb") as fh:
        magic, w, h, maxval = _header_tokens(fh, 4)
        if magic != b"P6":
            raise BundleFormatError(f"{path}: not a binary PPM")
        w, h, maxval = int(w), int(h), int(maxval)
        data = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_pfm(path, img):
    """Little-endian PFM; rows stored bottom-to-top as the format requires."""
    arr = np.asarray(img, dtype=_F32)
    color = arr.ndim == 3
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{'PF' if color else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        magic, w, h, scale = _header_tokens(fh, 4)
        if magic not in (b"PF", b"Pf"):
            raise BundleFormatError(f"{path}: not a PFM file")
        w, h, scale = int(w), int(h), float(scale)
        ch = 3 if magic == b"PF" else 1
        dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
        data = np.frombuffer(fh.read(w * h * ch * 4), dtype=dtype)
    shape = (h, w, 3) if ch == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float32)


def write_placement_log(path, records, with_region=None):
    if with_region is None:
        with_region = any(r.region for r in records)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.line(with_region) + "\n")


def read_placement_log(path):
    """List of dicts with keys tx ty sx sy rot d_density d_feature [region]."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        rec = {
            "tx": int(parts[0]), "ty": int(parts[1]), "sx": int(parts[2]), "sy": int(parts[3]),
            "rot": int(parts[4]), "d_density": float(parts[5]), "d_feature": float(parts[6]),
        }
        if len(parts) > 7:
            rec["region"] = parts[7]
        out.append(rec)
    return out


def save_shading_map(smap, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nx, ny, nc = smap.values.shape
    write_meta(d / "meta", {
        "format": "shading-map 1",
        "lattice_shape": [nx, ny],
        "n_channels": nc,
        "view_order": list(smap.view_order),
    })
    _write_array(d / "values.bin", smap.values)
    np.packbits(smap.valid.ravel()).tofile(d / "valid.bin")
    return d


def load_shading_map(directory):
    from .shading import ShadingMap

    d = Path(directory)
    meta = read_meta(d / "meta")
    nx, ny = _ints(meta["lattice_shape"])
    nc = int(meta["n_channels"])
    values = _read_array(d / "values.bin", (nx, ny, nc)).astype(np.float64)
    bits = np.fromfile(d / "valid.bin", dtype=np.uint8)
    valid = np.unpackbits(bits)[: nx * ny * nc].astype(bool).reshape(nx, ny, nc)
    return ShadingMap(values, valid, _ints(meta["view_order"]))


def write_shading_manifest(path, views):
    """``views``: iterable of (view_id, image_file, Camera)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# view_id file c2w[16] focal width height cx cy orthographic\n")
        for vid, fname, cam in views:
            c2w = " ".join(repr(float(x)) for x in cam.c2w.ravel())
            fh.write(f"{vid} {fname} {c2w} {cam.focal!r} {cam.width} {cam.height} "
                     f"{cam.cx!r} {cam.cy!r} {int(cam.orthographic)}\n")


def read_shading_manifest(path):
    """List of (view_id, image path, Camera); image paths resolved next to the manifest."""
    base = Path(path).parent
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        p = line.split()
        if len(p) != 24:
            raise BundleFormatError(f"{path}:{n}: expected 24 fields, got {len(p)}")
        c2w = np.array([float(x) for x in p[2:18]]).reshape(4, 4)
        cam = Camera(c2w, float(p[18]), int(p[19]), int(p[20]), float(p[21]), float(p[22]), bool(int(p[23])))
        out.append((int(p[0]), base / p[1], cam))
    return out


def write_correspondences(path, deformed, canonical):
    arr = np.hstack([np.asarray(deformed, dtype=np.float64), np.asarray(canonical, dtype=np.float64)])
    np.savetxt(path, arr, fmt="%.10g")


def read_correspondences(path):
    arr = np.loadtxt(path, ndmin=2)
    if arr.shape[1] != 6:
        raise BundleFormatError(f"{path}: expected 6 columns 'dx dy dz cx cy cz'")
    if not np.isfinite(arr).all():
        raise BundleFormatError(f"{path}: non-finite coordinates")
    return arr[:, :3], arr[:, 3:]


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, os.PathLike):
        return os.fspath(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")
