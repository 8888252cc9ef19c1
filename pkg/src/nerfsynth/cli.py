"""Command-line front end.

Every subcommand reads its options from (highest precedence first) the
command line, an optional ``--config`` file of ``key = value`` lines (or a
previous run's JSON manifest) and built-in defaults.  Each run that writes
artifacts also writes ``<output>.manifest.json`` with the resolved
configuration, the seed and sha256 hashes of its inputs and outputs.

Exit status: 0 ok, 2 usage, 3 input error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import NerfSynthError, NonConvergenceWarning, UnknownModeError

THREADS_ENV = "NERFSYNTH_THREADS"
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- value parsers


def _size2(text):
    """``200`` or ``200x150``."""
    parts = str(text).lower().replace(",", "x").split("x")
    vals = [int(p) for p in parts if p.strip()]
    if len(vals) == 1:
        return (vals[0], vals[0])
    if len(vals) != 2:
        raise ValueError(f"expected N or NxM, got {text!r}")
    return tuple(vals)


def _size3(text):
    vals = [int(p) for p in str(text).lower().replace(",", "x").split("x") if p.strip()]
    if len(vals) != 3:
        raise ValueError(f"expected NXxNYxNZ, got {text!r}")
    return tuple(vals)


def _vec3(text):
    vals = [float(p) for p in str(text).split(",") if p.strip()]
    if len(vals) != 3:
        raise ValueError(f"expected x,y,z, got {text!r}")
    return tuple(vals)


def _int_list(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


def _opt_float(text):
    return None if str(text).lower() in ("", "none") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------- option tables
# (name, type, default, help); booleans become --flag / --no-flag

SYNTH_OPTS = [
    ("patch_size", int, 15, "patch width w_p in columns"),
    ("overlap", int, 5, "overlap width w_o in columns"),
    ("extraction_step", int, 3, "stride of the exemplar window scan"),
    ("k_g", int, 10, "phase-1 density candidates"),
    ("eta", float, math.inf, "match threshold on candidate distance"),
    ("lam", float, 1.0, "density weight of the baseline's concatenated search"),
    ("greedy", bool, False, "pick the nearest candidate instead of sampling"),
    ("leaf_size", int, 32, "kd-tree leaf size"),
    ("max_leaf_visits", _opt_int, None, "bounded kd-tree search (approximate)"),
]

SHADE_OPTS = [
    ("n_views", int, 50, "candidate viewpoints M"),
    ("n_channels", int, 20, "retained channels n_c"),
    ("n_s", int, 64, "samples per traced segment"),
    ("blur_passes", int, 10, "Gaussian blur passes on shading images"),
    ("blur_variance", float, 7.0, "Gaussian blur variance (pixels^2)"),
    ("poly_degree", int, 3, "degree of the smoothing polynomial"),
    ("knn_k", int, 8, "neighbours for hole filling"),
    ("median_window", int, 3, "median filter window"),
]

RIG_OPTS = [
    ("light", _vec3, None, "light position x,y,z (default: rig light above the box)"),
    ("intensity", float, 1.0, "light intensity I"),
    ("rig_seed", int, 0, "seed of the viewpoint directions"),
    ("pixels_per_column", float, 0.5, "camera resolution relative to the column spacing"),
    ("render_samples", int, 96, "samples per ray for depth"),
]

COMMANDS = {
    "gen": {
        "help": "generate a procedural exemplar bundle",
        "opts": [
            ("output", str, None, "output bundle directory"),
            ("kind", str, "pebbles", "grass | pebbles | carpet"),
            ("shape", _size3, (96, 96, 48), "grid shape NXxNYxNZ"),
            ("n_features", int, 12, "feature channels C"),
            ("count", _opt_int, None, "number of primitives (default: from shape)"),
            ("radius", _opt_float, None, "primitive radius in voxels"),
            ("height", _opt_float, None, "primitive height in voxels"),
            ("voxel_size", float, 1.0 / 64.0, "world size of one voxel"),
            ("seed", int, 0, "random seed"),
        ],
        "required": ["output"],
    },
    "synth": {
        "help": "synthesize a larger field from an exemplar",
        "opts": [
            ("exemplar", str, None, "exemplar bundle directory"),
            ("output", str, None, "output bundle directory"),
            ("out_size", _size2, (200, 200), "output lattice N or NxM"),
            ("mode", str, "two_phase", "two_phase | baseline | boundary"),
            ("l_b", _opt_int, None, "boundary width for boundary mode (default: patch size)"),
            ("rotations", bool, False, "add 90/180/270 degree rotated windows"),
            ("seed_patch", _opt_int, None, "id of the first patch (default: random, or the corner when greedy)"),
            ("seed", int, 0, "random seed"),
            ("log", str, None, "placement log path (default: <output>.placements.log)"),
        ] + SYNTH_OPTS,
        "required": ["exemplar", "output"],
    },
    "shade-extract": {
        "help": "shading map from per-view shading images (projection path)",
        "opts": [
            ("exemplar", str, None, "field bundle directory"),
            ("images", str, None, "shading image manifest file"),
            ("output", str, None, "output shading map directory"),
        ] + SHADE_OPTS + [("render_samples", int, 96, "samples per ray for depth")],
        "required": ["exemplar", "images", "output"],
    },
    "shade-rt": {
        "help": "ray-traced shading map for a point light",
        "opts": [
            ("exemplar", str, None, "field bundle directory"),
            ("output", str, None, "output shading map directory"),
            ("write_images", str, None, "also write per-view shading PFMs and a manifest here"),
        ] + SHADE_OPTS + RIG_OPTS,
        "required": ["exemplar", "output"],
    },
    "guider": {
        "help": "shading map guider for a target size",
        "opts": [
            ("mode", str, "scale-up", "scale-up | ray-traced"),
            ("output", str, None, "output shading map directory"),
            ("out_size", _size2, (200, 200), "target lattice N or NxM"),
            ("exemplar_map", str, None, "exemplar shading map (scale-up; view order for ray-traced)"),
            ("exemplar", str, None, "exemplar bundle (ray-traced)"),
            ("seed", int, 0, "random seed"),
            ("seed_patch", _opt_int, None, "id of the first patch of the geometry synthesis"),
        ] + SYNTH_OPTS + SHADE_OPTS + RIG_OPTS,
        "required": ["output"],
    },
    "relight": {
        "help": "shading-guided synthesis",
        "opts": [
            ("exemplar", str, None, "exemplar bundle directory"),
            ("exemplar_map", str, None, "exemplar shading map directory"),
            ("guider", str, None, "guider shading map directory (sets the output size)"),
            ("output", str, None, "output bundle directory"),
            ("k_s", int, 20, "shading candidates per placement"),
            ("rotations", bool, True, "add 90/180/270 degree rotated windows"),
            ("seed_patch", _opt_int, None, "id of the first patch"),
            ("seed", int, 0, "random seed"),
            ("log", str, None, "placement log path (default: <output>.placements.log)"),
        ] + SYNTH_OPTS,
        "required": ["exemplar", "exemplar_map", "guider", "output"],
    },
    "deform-fit": {
        "help": "fit a deformation field to point correspondences",
        "opts": [
            ("output", str, None, "output model directory"),
            ("surface", str, None, "plane | sphere:cx,cy,cz,r | cylinder:cx,cy,cz,r"),
            ("exemplar", str, None, "canonical field bundle (its box is the flat patch)"),
            ("correspondences", str, None, "correspondence file 'dx dy dz cx cy cz' per line"),
            ("write_correspondences", str, None, "save the analytic pairs to this file"),
            ("n_u", int, 32, "correspondence grid size along x"),
            ("n_v", int, 32, "correspondence grid size along y"),
            ("n_h", int, 4, "correspondence layers along the normal"),
            ("epochs", int, 2000, "training epochs"),
            ("learning_rate", float, 1e-3, "Adam step size"),
            ("batch_size", _opt_int, None, "mini-batch size (default: full batch)"),
            ("tol", float, 1e-3, "loss above which NONCONVERGENCE is reported"),
            ("seed", int, 0, "random seed"),
        ],
        "required": ["output"],
    },
    "render": {
        "help": "render a field (optionally through a deformation) to PPM + PFM depth",
        "opts": [
            ("field", str, None, "field bundle directory"),
            ("output", str, None, "output PPM path"),
            ("depth", str, None, "depth PFM path (default: <output> with .pfm)"),
            ("deformation", str, None, "fitted deformation model directory"),
            ("surface", str, None, "surface of the deformation (sets the render box)"),
            ("eye", _vec3, None, "camera position (default: above the box)"),
            ("target", _vec3, None, "look-at point (default: box center)"),
            ("width", int, 128, "image width"),
            ("height", int, 128, "image height"),
            ("focal", _opt_float, None, "focal length in pixels (pixels per unit if orthographic)"),
            ("orthographic", bool, False, "orthographic projection"),
            ("n_samples", int, 128, "samples per ray"),
            ("near", float, 0.0, "near distance"),
            ("far", _opt_float, None, "far distance (default: enough to cross the box)"),
            ("bg_color", _vec3, (1.0, 1.0, 1.0), "background color r,g,b"),
        ],
        "required": ["field", "output"],
    },
    "bench": {
        "help": "speed of two-phase vs baseline synthesis at several output sizes",
        "opts": [
            ("exemplar", str, None, "exemplar bundle (default: generate a procedural one)"),
            ("output", str, None, "table output path (default: print only)"),
            ("sizes", _int_list, (100, 200, 300, 400), "output sizes, comma separated"),
            ("repeats", int, 1, "timed runs per cell (minimum kept)"),
            ("kind", str, "pebbles", "procedural exemplar kind"),
            ("shape", _size3, (96, 96, 48), "procedural exemplar grid shape"),
            ("seed", int, 0, "random seed"),
        ] + SYNTH_OPTS,
        "required": [],
    },
}


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser():
    parser = argparse.ArgumentParser(prog="nerfsynth", description="Radiance-field synthesis toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value file (or a manifest .json) with option values")
        p.add_argument("--threads", type=int, help=f"worker thread cap (env {THREADS_ENV})")
        p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
        for opt, typ, default, help_text in spec["opts"]:
            shown = "" if default is None else f" [default: {default}]"
            if typ is bool:
                p.add_argument(_flag(opt), dest=opt, action="store_true", help=help_text + shown)
                p.add_argument("--no-" + opt.replace("_", "-"), dest=opt, action="store_false",
                               help=argparse.SUPPRESS)
            elif opt == "output":
                p.add_argument("-o", "--output", dest=opt, type=str, help=help_text)
            else:
                p.add_argument(_flag(opt), dest=opt, type=typ, help=help_text + shown)
    return parser


def read_config(path):
    """``key = value`` lines (``#`` comments), or the ``config`` of a JSON manifest."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    if p.suffix == ".json":
        data = json.loads(p.read_text(encoding="utf-8"))
        cfg = data.get("config", data)
        return {k: v for k, v in cfg.items()}
    out = {}
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{p}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(typ, value):
    if value is None:
        return None
    if typ is bool:
        return _bool(value)
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return typ(value)


def resolve(command, given: dict):
    """Merge CLI values over config-file values over defaults; reject unknown keys."""
    spec = COMMANDS[command]
    types = {o[0]: o[1] for o in spec["opts"]}
    cfg = {o[0]: o[2] for o in spec["opts"]}
    if given.get("config"):
        file_vals = read_config(given["config"])
        unknown = sorted(set(file_vals) - set(types))
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        for k, v in file_vals.items():
            try:
                cfg[k] = _coerce(types[k], v)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {k}: {exc}") from exc
    for k, v in given.items():
        if k in types:
            cfg[k] = v
    missing = [k for k in spec["required"] if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError(f"{command}: missing required option(s): {', '.join(_flag(m) for m in missing)}")
    return cfg


def _thread_limit(given):
    n = given.get("threads")
    if n is None and os.environ.get(THREADS_ENV):
        n = int(os.environ[THREADS_ENV])
    if n is None:
        return nullcontext(), None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n), n


# ---------------------------------------------------------------- manifests


def _hash_inputs(paths):
    from .io import bundle_hash

    return {str(p): bundle_hash(p) for p in paths if p is not None and Path(p).exists()}


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def write_manifest(path, command, cfg, inputs, outputs, threads, extra=None):
    from .io import write_json

    doc = {
        "tool": "nerfsynth",
        "version": __version__,
        "command": command,
        "config": {k: _jsonable(v) for k, v in cfg.items()},
        "seed": cfg.get("seed"),
        "inputs": _hash_inputs(inputs),
        "outputs": _hash_inputs(outputs),
        "threads": threads,
    }
    if extra:
        doc.update(extra)
    write_json(path, doc)
    return path


def _default_manifest(output):
    return str(Path(str(output).rstrip("/"))) + ".manifest.json"


def _synth_params(cfg, k_s=20):
    from .synthesis import SynthesisParams

    return SynthesisParams(cfg["patch_size"], cfg["overlap"], cfg["extraction_step"], cfg["k_g"], k_s,
                           cfg["eta"], cfg["lam"], cfg["greedy"], cfg.get("rotations", False),
                           cfg["leaf_size"], cfg["max_leaf_visits"])


def _shade_cfg(cfg):
    from .shading import ShadingConfig

    return ShadingConfig(cfg["n_views"], cfg["n_channels"], cfg["n_s"], cfg["blur_passes"],
                         cfg["blur_variance"], cfg["poly_degree"], cfg["knn_k"], cfg["median_window"])


def _rig(cfg):
    from .shading import ShadingRig

    return ShadingRig(intensity=cfg["intensity"], n_views=cfg["n_views"], seed=cfg["rig_seed"],
                      pixels_per_column=cfg["pixels_per_column"])


def _light(cfg, rig, bbox):
    from .shading import Light

    if cfg["light"] is None:
        return rig.light(bbox)
    return Light(np.asarray(cfg["light"]), cfg["intensity"])


# ---------------------------------------------------------------- commands


def cmd_gen(cfg):
    from .io import save_field
    from .procedural import ProcExemplarSpec, generate_field

    spec = ProcExemplarSpec(cfg["kind"], cfg["shape"], cfg["n_features"], cfg["count"], cfg["radius"],
                            cfg["height"], voxel_size=cfg["voxel_size"], seed=cfg["seed"])
    save_field(generate_field(spec), cfg["output"])
    return [], [cfg["output"]], {}


def _log_path(cfg):
    return cfg["log"] or str(Path(str(cfg["output"]).rstrip("/"))) + ".placements.log"


def cmd_synth(cfg):
    from .boundary import BoundarySynthesizer
    from .columns import flatten, unflatten
    from .io import load_field, save_field, write_placement_log
    from .synthesis import PatchSynthesizer

    ex = flatten(load_field(cfg["exemplar"]))
    p = _synth_params(cfg)
    if cfg["mode"] == "boundary":
        est = BoundarySynthesizer(cfg["l_b"], p.patch_size, p.overlap, p.extraction_step, p.k_g, p.eta,
                                  "two_phase", p.greedy, p.leaf_size, p.max_leaf_visits, cfg["seed"])
    elif cfg["mode"] in ("two_phase", "baseline"):
        est = PatchSynthesizer(p.patch_size, p.overlap, p.extraction_step, p.k_g, p.eta, p.lam, cfg["mode"],
                               p.greedy, cfg["rotations"], p.leaf_size, p.max_leaf_visits, cfg["seed"])
    else:
        raise UnknownModeError(f"unknown synthesis mode {cfg['mode']!r}")
    seed_patch = cfg["seed_patch"]
    if seed_patch is None and p.greedy:
        seed_patch = 0  # greedy runs are fully deterministic: start from the exemplar's corner
    out = est.fit_synthesize(ex, cfg["out_size"], seed_patch=seed_patch)
    save_field(unflatten(out), cfg["output"])
    log = _log_path(cfg)
    write_placement_log(log, est.placements_, with_region=cfg["mode"] == "boundary")
    extra = {}
    if cfg["mode"] == "boundary":
        extra["provenance"] = est.provenance()
    return [cfg["exemplar"]], [cfg["output"], log], extra


def cmd_shade_rt(cfg):
    from .io import load_field, save_shading_map, write_pfm, write_shading_manifest
    from .shading import (build_shading_map_rt, fill_holes_knn, median_repair, render_shading_images,
                          select_channels)

    field = load_field(cfg["exemplar"])
    scfg, rig = _shade_cfg(cfg), _rig(cfg)
    if scfg.n_channels > rig.n_views:
        raise UsageError(f"n_channels={scfg.n_channels} exceeds n_views={rig.n_views}")
    light = _light(cfg, rig, field.bbox)
    all_cams = rig.cameras(field)
    rcfg = rig.render_config(field, cfg["render_samples"])
    raw = build_shading_map_rt(field, light, all_cams, scfg, rcfg, repair=False)
    smap = select_channels(raw, scfg.n_channels)
    smap = median_repair(fill_holes_knn(smap, scfg.knn_k, scfg.eps), scfg.median_window)
    save_shading_map(smap, cfg["output"])
    outputs = [cfg["output"]]
    if cfg["write_images"]:
        d = Path(cfg["write_images"])
        d.mkdir(parents=True, exist_ok=True)
        imgs = render_shading_images(field, light, all_cams, scfg, rcfg)
        views = []
        for vid, (img, cam) in enumerate(zip(imgs, all_cams)):
            name = f"view_{vid:03d}.pfm"
            write_pfm(d / name, img)
            views.append((vid, name, cam))
        write_shading_manifest(d / "views.txt", views)
        outputs.append(str(d))
    return [cfg["exemplar"]], outputs, {"light": light.position.tolist(), "view_order": smap.view_order}


def cmd_shade_extract(cfg):
    from .field import RenderConfig
    from .io import load_field, read_pfm, read_shading_manifest, save_shading_map
    from .shading import fill_holes_knn, median_repair, project_shading, select_channels

    field = load_field(cfg["exemplar"])
    views = read_shading_manifest(cfg["images"])
    scfg = _shade_cfg(cfg)
    if len(views) < scfg.n_channels:
        raise UsageError(f"{len(views)} views listed, need at least n_channels={scfg.n_channels}")
    imgs = [read_pfm(p) for _, p, _ in views]
    cams = [c for _, _, c in views]
    radius = 0.5 * float(np.linalg.norm(field.bbox[1] - field.bbox[0]))
    rcfg = RenderConfig(0.0, 4.0 * radius, cfg["render_samples"])
    raw = project_shading(imgs, cams, field, scfg, rcfg, [v for v, _, _ in views])
    smap = select_channels(raw, scfg.n_channels)
    smap = median_repair(fill_holes_knn(smap, scfg.knn_k, scfg.eps), scfg.median_window)
    save_shading_map(smap, cfg["output"])
    return [cfg["exemplar"], cfg["images"]], [cfg["output"]], {"view_order": smap.view_order}


def cmd_guider(cfg):
    from .io import load_field, load_shading_map, save_shading_map
    from .shading import build_guider

    inputs = []
    exemplar_map = None
    if cfg["exemplar_map"]:
        exemplar_map = load_shading_map(cfg["exemplar_map"])
        inputs.append(cfg["exemplar_map"])
    if cfg["mode"] == "scale-up":
        if exemplar_map is None:
            raise UsageError("scale-up guider needs --exemplar-map")
        g = build_guider("scale-up", exemplar_map=exemplar_map, out_size=cfg["out_size"])
    elif cfg["mode"] == "ray-traced":
        if not cfg["exemplar"]:
            raise UsageError("ray-traced guider needs --exemplar")
        from .columns import flatten

        field = load_field(cfg["exemplar"])
        inputs.append(cfg["exemplar"])
        rig = _rig(cfg)
        light = None
        if cfg["light"] is not None:
            light = _light(cfg, rig, field.bbox)
        g = build_guider("ray-traced", exemplar_map=exemplar_map, out_size=cfg["out_size"],
                         exemplar=flatten(field), light=light, rig=rig, params=_synth_params(cfg),
                         cfg=_shade_cfg(cfg), seed_patch=cfg["seed_patch"], random_state=cfg["seed"],
                         n_samples=cfg["render_samples"])
    else:
        raise UnknownModeError(f"unknown guider mode {cfg['mode']!r}; expected scale-up or ray-traced")
    save_shading_map(g, cfg["output"])
    return inputs, [cfg["output"]], {}


def cmd_relight(cfg):
    from .columns import flatten, unflatten
    from .io import load_field, load_shading_map, save_field, write_placement_log
    from .shading import ShadingGuidedSynthesizer

    ex = flatten(load_field(cfg["exemplar"]))
    ex_map = load_shading_map(cfg["exemplar_map"])
    guider = load_shading_map(cfg["guider"])
    p = _synth_params(cfg, cfg["k_s"])
    est = ShadingGuidedSynthesizer(p.patch_size, p.overlap, p.extraction_step, p.k_g, p.k_s, p.eta, p.greedy,
                                   cfg["rotations"], True, p.leaf_size, p.max_leaf_visits, cfg["seed"])
    out = est.fit_synthesize(ex, guider, ex_map, seed_patch=cfg["seed_patch"])
    save_field(unflatten(out), cfg["output"])
    log = _log_path(cfg)
    write_placement_log(log, est.placements_)
    return [cfg["exemplar"], cfg["exemplar_map"], cfg["guider"]], [cfg["output"], log], {}


def cmd_deform_fit(cfg):
    from .deform import DeformationField, analytic_correspondences, parse_surface, save_deformation
    from .io import load_field, read_correspondences, write_correspondences

    inputs = []
    if cfg["correspondences"]:
        deformed, canonical = read_correspondences(cfg["correspondences"])
        inputs.append(cfg["correspondences"])
    else:
        if not (cfg["surface"] and cfg["exemplar"]):
            raise UsageError("deform-fit needs --correspondences, or --surface with --exemplar")
        field = load_field(cfg["exemplar"])
        inputs.append(cfg["exemplar"])
        deformed, canonical = analytic_correspondences(parse_surface(cfg["surface"]), field.bbox,
                                                       cfg["n_u"], cfg["n_v"], None, cfg["n_h"])
    outputs = [cfg["output"]]
    if cfg["write_correspondences"]:
        write_correspondences(cfg["write_correspondences"], deformed, canonical)
        outputs.append(cfg["write_correspondences"])
    model = DeformationField(epochs=cfg["epochs"], learning_rate=cfg["learning_rate"],
                             batch_size=cfg["batch_size"], tol=cfg["tol"], random_state=cfg["seed"])
    model.fit(deformed, canonical)
    save_deformation(model, cfg["output"])
    return inputs, outputs, {"final_loss": model.final_loss_, "n_pairs": int(deformed.shape[0])}


def cmd_render(cfg):
    from .deform import load_deformation, parse_surface, render_deformed, shell_bbox
    from .field import Camera, RenderConfig, look_at, render_image
    from .io import load_field, write_pfm, write_ppm

    field = load_field(cfg["field"])
    inputs = [cfg["field"]]
    bbox = field.bbox
    warp = None
    if cfg["deformation"]:
        warp = load_deformation(cfg["deformation"])
        inputs.append(cfg["deformation"])
        if cfg["surface"]:
            bbox = shell_bbox(parse_surface(cfg["surface"]), field.bbox, pad=float(np.max(field.voxel_size)))
    center = bbox.mean(axis=0)
    radius = 0.5 * float(np.linalg.norm(bbox[1] - bbox[0]))
    target = np.asarray(cfg["target"]) if cfg["target"] is not None else center
    eye = np.asarray(cfg["eye"]) if cfg["eye"] is not None else center + np.array([0.0, -1.2, 2.0]) * radius
    if cfg["focal"] is not None:
        focal = cfg["focal"]
    elif cfg["orthographic"]:
        focal = cfg["width"] / (2.0 * radius)
    else:
        focal = 1.2 * cfg["width"]
    cam = Camera(look_at(eye, target), focal, cfg["width"], cfg["height"], orthographic=cfg["orthographic"])
    far = cfg["far"] if cfg["far"] is not None else float(np.linalg.norm(eye - center)) + 2.0 * radius
    rcfg = RenderConfig(cfg["near"], far, cfg["n_samples"], bg_color=cfg["bg_color"])
    if warp is None:
        rgb, depth = render_image(cam, field, rcfg)
    else:
        rgb, depth = render_deformed(cam, warp, field, rcfg, bbox=bbox)
    write_ppm(cfg["output"], rgb)
    depth_path = cfg["depth"] or str(Path(cfg["output"]).with_suffix(".pfm"))
    write_pfm(depth_path, depth)
    return inputs, [cfg["output"], depth_path], {}


def cmd_bench(cfg):
    import tempfile

    from .bench import format_table, run_bench
    from .io import save_field
    from .procedural import ProcExemplarSpec, generate_field

    kwargs = dict(patch_size=cfg["patch_size"], overlap=cfg["overlap"], extraction_step=cfg["extraction_step"],
                  k_g=cfg["k_g"], eta=cfg["eta"], lam=cfg["lam"], greedy=cfg["greedy"],
                  leaf_size=cfg["leaf_size"], max_leaf_visits=cfg["max_leaf_visits"])
    with tempfile.TemporaryDirectory() as tmp:
        bundle = cfg["exemplar"]
        if bundle is None:
            bundle = os.path.join(tmp, "exemplar")
            save_field(generate_field(ProcExemplarSpec(cfg["kind"], cfg["shape"], seed=cfg["seed"])), bundle)
        rows = run_bench(bundle, cfg["sizes"], cfg["repeats"], cfg["seed"],
                         progress=lambda m: print(m, file=sys.stderr), **kwargs)
    table = format_table(rows)
    print(table)
    outputs = []
    if cfg["output"]:
        Path(cfg["output"]).write_text(table + "\n", encoding="utf-8")
        outputs.append(cfg["output"])
    inputs = [cfg["exemplar"]] if cfg["exemplar"] else []
    extra = {"rows": [{"size": r.size, "baseline_s": r.baseline_s, "two_phase_s": r.two_phase_s,
                       "ratio": r.ratio} for r in rows]}
    return inputs, outputs, extra


HANDLERS = {
    "gen": cmd_gen,
    "synth": cmd_synth,
    "shade-extract": cmd_shade_extract,
    "shade-rt": cmd_shade_rt,
    "guider": cmd_guider,
    "relight": cmd_relight,
    "deform-fit": cmd_deform_fit,
    "render": cmd_render,
    "bench": cmd_bench,
}


def _missing_inputs(cfg):
    for key in ("exemplar", "field", "images", "exemplar_map", "guider", "correspondences", "deformation"):
        path = cfg.get(key)
        if path and not Path(path).exists():
            return key, path
    return None


def run(argv=None):
    """Parse ``argv`` and run one command; returns the exit status."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    given = vars(ns)
    command = given.pop("command")
    try:
        cfg = resolve(command, given)
        missing = _missing_inputs(cfg)
        if missing:
            raise FileNotFoundError(f"{missing[0]} not found: {missing[1]}")
        limit, threads = _thread_limit(given)
        with limit, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NonConvergenceWarning)
            inputs, outputs, extra = HANDLERS[command](cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        target = given.get("manifest") or (_default_manifest(cfg["output"]) if cfg.get("output") else None)
        if target:
            write_manifest(target, command, cfg, inputs, outputs, threads, extra)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NerfSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_status
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: NUMERICAL_FAILURE: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
