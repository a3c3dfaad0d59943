"""Command-line pipeline orchestration.

Commands operate on a JSON config plus per-flag overrides and exchange
data through a simple on-disk layout::

    <output_dir>/
      cameras.json            one entry per view
      views/NNN/              per-view maps
        depth.exr normal.exr contour.png coverage.png     (gbuffer)
        image.png                                         (user-supplied)
        basecolor.* roughness.* metallic.*                (user-supplied)
      atlas/                  baked atlas (bake)
      render_NNN.exr/.png     relit validation views (render)

Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
0 success, 1 configuration/validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenes
from .atlas import (
    BlendWeights,
    SVBRDFView,
    SVBRDFViewSet,
    TextureAtlas,
    bake_atlas,
    fill_holes,
)
from .brdf import PointLight
from .camera import Camera, OrbitSpec, load_cameras, orbit_cameras, save_cameras
from .errors import ConfigError, SvbakeError
from .image import ImageF, SCALAR, SRGB, center_crop_square, resize_box, tonemap_reinhard
from .imgio import (
    load_depth,
    load_image,
    load_mask,
    save_bundle,
    save_depth,
    save_image,
    save_mask,
)
from .flip import flip_mean
from .mesh import load_mesh
from .metrics import flicker_metric, psnr, si_psnr, ssim
from .raster import contour_map, rasterize_gbuffer
from .render import render_view
from .warp import hole_stats, warp_view

_BUILTIN_SCENES = {
    "builtin:quad": scenes.quad_scene,
    "builtin:two_planes": scenes.two_plane_scene,
    "builtin:room": scenes.room_scene,
}

_POW2 = {1 << k for k in range(8, 14)}  # 256 .. 8192


@dataclass
class PipelineConfig:
    mesh: str
    output_dir: Path
    views_dir: Path
    cameras: Path | None = None
    orbit: dict | None = None
    atlas_resolution: int = 2048
    blend: BlendWeights = field(default_factory=BlendWeights)
    eps_rel: float = 0.01
    contour_depth_thresh: float = 0.02
    contour_normal_thresh: float = 20.0
    tonemap_exposure: float = 1.0
    lights: list[PointLight] = field(default_factory=list)
    metric_toggles: dict = field(default_factory=dict)
    metric_pairs: list = field(default_factory=list)
    threads: int = 1


def _field(cfg: dict, name: str, default, caster):
    if name not in cfg:
        return default
    try:
        return caster(cfg[name])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config field '{name}': {e}") from None


def load_config(path, overrides: argparse.Namespace | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    mesh = raw.get("mesh")
    if not mesh:
        raise ConfigError("config field 'mesh' is required")
    if mesh not in _BUILTIN_SCENES and not os.path.isfile(mesh):
        raise ConfigError(f"config field 'mesh': file not found: {mesh}")

    out_dir = Path(_field(raw, "output_dir", "out", str))
    if overrides is not None and getattr(overrides, "out", None):
        out_dir = Path(overrides.out)
    views_dir = Path(_field(raw, "views_dir", "views", str))
    if not views_dir.is_absolute():
        views_dir = out_dir / views_dir

    cameras = raw.get("cameras")
    orbit = raw.get("orbit")
    if cameras is not None and not os.path.isfile(cameras):
        raise ConfigError(f"config field 'cameras': file not found: {cameras}")
    if cameras is None and orbit is None:
        orbit = {}  # scene-provided orbit defaults

    res = _field(raw, "atlas_resolution", 2048, int)
    if res not in _POW2:
        raise ConfigError(
            "config field 'atlas_resolution': must be a power of two in [256, 8192]"
        )

    blend_raw = raw.get("blend", {})
    try:
        blend = BlendWeights(
            angle_exponent=float(blend_raw.get("angle_exponent", 2.0)),
            border_erosion=float(blend_raw.get("border_erosion", 8.0)),
            depth_eps_rel=float(blend_raw.get("depth_eps_rel", 0.01)),
            reject_outliers=bool(blend_raw.get("reject_outliers", False)),
        )
    except ValueError as e:
        raise ConfigError(f"config field 'blend': {e}") from None

    contour = raw.get("contour", {})
    lights = []
    for i, entry in enumerate(raw.get("lights", [])):
        try:
            lights.append(
                PointLight(position=entry["position"], intensity=entry["intensity"])
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"config field 'lights[{i}]': {e}") from None

    cfg = PipelineConfig(
        mesh=mesh,
        output_dir=out_dir,
        views_dir=views_dir,
        cameras=Path(cameras) if cameras else None,
        orbit=orbit,
        atlas_resolution=res,
        blend=blend,
        eps_rel=_field(raw, "eps_rel", 0.01, float),
        contour_depth_thresh=float(contour.get("depth_rel_thresh", 0.02)),
        contour_normal_thresh=float(contour.get("normal_angle_thresh", 20.0)),
        tonemap_exposure=_field(raw, "tonemap_exposure", 1.0, float),
        lights=lights,
        metric_toggles=raw.get("metrics", {}),
        metric_pairs=raw.get("metric_pairs", []),
        threads=_field(raw, "threads", 1, int),
    )
    if overrides is not None:
        if getattr(overrides, "threads", None):
            cfg.threads = overrides.threads
        if getattr(overrides, "atlas_res", None):
            if overrides.atlas_res not in _POW2:
                raise ConfigError("--atlas-res must be a power of two in [256, 8192]")
            cfg.atlas_resolution = overrides.atlas_res
        if getattr(overrides, "eps_rel", None):
            cfg.eps_rel = overrides.eps_rel
    if cfg.eps_rel <= 0:
        raise ConfigError("config field 'eps_rel': must be > 0")
    if cfg.threads < 1:
        raise ConfigError("config field 'threads': must be >= 1")
    return cfg


def _load_scene(cfg: PipelineConfig):
    """Mesh plus the scene's recommended framing, if it is a builtin."""
    if cfg.mesh in _BUILTIN_SCENES:
        return _BUILTIN_SCENES[cfg.mesh]()
    mesh = load_mesh(cfg.mesh)
    lo, hi = mesh.bbox()
    size = float(np.linalg.norm(hi - lo))
    center = 0.5 * (lo + hi)
    eye = center + np.array([0.0, 0.25 * size, 1.1 * size])
    cam = scenes.camera_from_fov(eye, center, 768, 768, 60.0)
    return scenes.Scene(mesh=mesh, camera=cam, pivot=center)


def _resolve_cameras(cfg: PipelineConfig, scene) -> list[Camera]:
    if cfg.cameras is not None:
        return load_cameras(cfg.cameras)
    orbit = dict(cfg.orbit or {})
    base = scene.camera
    if isinstance(orbit.get("base"), dict):
        base = Camera.from_dict(orbit["base"])
    pivot = scene.pivot
    if isinstance(orbit.get("pivot"), (list, tuple)):
        pivot = np.asarray(orbit["pivot"], dtype=np.float64)
    spec = OrbitSpec(
        base=base,
        count=int(orbit.get("count", 5)),
        delta_lat=float(orbit.get("delta_lat", scene.delta_lat)),
        delta_lon=float(orbit.get("delta_lon", scene.delta_lon)),
        pivot=pivot,
    )
    return orbit_cameras(spec)


def _view_dir(cfg: PipelineConfig, index: int) -> Path:
    return cfg.views_dir / f"{index:03d}"


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_gbuffer(cfg: PipelineConfig) -> dict:
    scene = _load_scene(cfg)
    cams = _resolve_cameras(cfg, scene)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_cameras(cams, cfg.output_dir / "cameras.json")
    files = []
    for i, cam in enumerate(cams):
        t0 = time.perf_counter()
        g = rasterize_gbuffer(scene.mesh, cam, threads=cfg.threads)
        edges = contour_map(g, cfg.contour_depth_thresh, cfg.contour_normal_thresh)
        vd = _view_dir(cfg, i)
        vd.mkdir(parents=True, exist_ok=True)
        save_depth(g.depth, vd / "depth.exr")
        save_image(ImageF.from_array(g.normal, "LinearRGB"), vd / "normal.exr")
        save_image(edges, vd / "contour.png")
        save_mask(g.coverage, vd / "coverage.png")
        files.extend(
            str(vd / n) for n in ("depth.exr", "normal.exr", "contour.png", "coverage.png")
        )
        _log(f"view {i}: gbuffer in {time.perf_counter() - t0:.2f}s")
    return {"views": len(cams), "files": files, "cameras": str(cfg.output_dir / "cameras.json")}


def _load_view_image(vd: Path, name: str) -> ImageF:
    for ext in (".png", ".exr"):
        p = vd / f"{name}{ext}"
        if p.is_file():
            return load_image(p)
    raise ConfigError(f"no {name}.png or {name}.exr under {vd}")


def cmd_warp(cfg: PipelineConfig, src: int, dst: int, map_name: str = "image") -> dict:
    cams = load_cameras(cfg.output_dir / "cameras.json")
    for idx in (src, dst):
        if not 0 <= idx < len(cams):
            raise ConfigError(f"view index {idx} outside 0..{len(cams) - 1}")
    src_dir, dst_dir = _view_dir(cfg, src), _view_dir(cfg, dst)
    for d in (src_dir, dst_dir):
        if not (d / "depth.exr").is_file():
            raise ConfigError(f"missing g-buffer: {d / 'depth.exr'} (run gbuffer first)")
    img = _load_view_image(src_dir, map_name)
    res = warp_view(
        img,
        cams[src],
        load_depth(src_dir / "depth.exr"),
        cams[dst],
        load_depth(dst_dir / "depth.exr"),
        cfg.eps_rel,
    )
    stem = f"warp_{src:03d}_to_{dst:03d}_{map_name}"
    out_img = cfg.output_dir / f"{stem}.png"
    if img.colorspace == SRGB or img.colorspace == SCALAR:
        save_image(res.image, out_img)
    else:
        out_img = cfg.output_dir / f"{stem}.exr"
        save_image(res.image, out_img)
    mask_path = cfg.output_dir / f"{stem}_holes.png"
    save_mask(res.disoccluded, mask_path)  # 255 marks pixels to inpaint
    return {
        "image": str(out_img),
        "mask": str(mask_path),
        "hole_fraction": hole_stats(res),
    }


def _load_views(cfg: PipelineConfig, cams: list[Camera]) -> SVBRDFViewSet:
    views = []
    for i, cam in enumerate(cams):
        vd = _view_dir(cfg, i)
        depth_path = vd / "depth.exr"
        if not depth_path.is_file():
            raise ConfigError(f"missing {depth_path} (run gbuffer first)")
        mask = None
        mask_path = vd / "valid_mask.png"
        if mask_path.is_file():
            mask = load_mask(mask_path)
        views.append(
            SVBRDFView(
                camera=cam,
                basecolor=_load_view_image(vd, "basecolor"),
                roughness=_load_view_image(vd, "roughness"),
                metallic=_load_view_image(vd, "metallic"),
                depth=load_depth(depth_path),
                valid_mask=mask,
            )
        )
    return SVBRDFViewSet(views=views)


def save_atlas(atlas: TextureAtlas, directory: Path) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    base = ImageF.from_array(atlas.basecolor, atlas.basecolor_colorspace)
    rough = ImageF.from_array(atlas.roughness, SCALAR)
    metal = ImageF.from_array(atlas.metallic, SCALAR)
    wsum = ImageF.from_array(atlas.weight_sum, SCALAR)
    files = []
    for name, img in (
        ("basecolor", base), ("roughness", rough), ("metallic", metal),
        ("weight_sum", wsum),
    ):
        p = directory / f"{name}.exr"
        save_image(img, p)
        files.append(str(p))
    save_mask(atlas.observed, directory / "observed.png")
    files.append(str(directory / "observed.png"))
    save_bundle(
        {"basecolor": base, "roughness": rough, "metallic": metal, "weight": wsum},
        directory / "atlas.exr",
    )
    files.append(str(directory / "atlas.exr"))
    meta = {
        "resolution": atlas.resolution,
        "basecolor_colorspace": atlas.basecolor_colorspace,
        "hole_filled": atlas.hole_filled,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))
    files.append(str(directory / "meta.json"))
    return files


def load_atlas(directory: Path) -> TextureAtlas:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    colorspace = meta.get("basecolor_colorspace", SRGB)
    base = load_image(directory / "basecolor.exr", colorspace)
    rough = load_image(directory / "roughness.exr")
    metal = load_image(directory / "metallic.exr")
    wsum = load_image(directory / "weight_sum.exr")
    observed = load_mask(directory / "observed.png")
    return TextureAtlas(
        resolution=base.width,
        basecolor=base.data,
        roughness=rough.data[:, :, 0],
        metallic=metal.data[:, :, 0],
        weight_sum=wsum.data[:, :, 0],
        observed=observed,
        basecolor_colorspace=colorspace,
        hole_filled=bool(meta.get("hole_filled", observed.all())),
    )


def cmd_bake(cfg: PipelineConfig, fill: bool = True) -> dict:
    scene = _load_scene(cfg)
    cams = load_cameras(cfg.output_dir / "cameras.json")
    views = _load_views(cfg, cams)
    t0 = time.perf_counter()
    atlas = bake_atlas(
        scene.mesh, views, cfg.blend, cfg.atlas_resolution, threads=cfg.threads
    )
    bake_s = time.perf_counter() - t0
    observed_fraction = float(atlas.observed.mean())
    if fill:
        atlas = fill_holes(atlas)
    files = save_atlas(atlas, cfg.output_dir / "atlas")
    _log(f"baked {len(cams)} views into {cfg.atlas_resolution}^2 atlas in {bake_s:.2f}s")
    return {
        "atlas_dir": str(cfg.output_dir / "atlas"),
        "files": files,
        "observed_fraction": observed_fraction,
        "bake_seconds": bake_s,
    }


def cmd_render(cfg: PipelineConfig, view: int = 0) -> dict:
    scene = _load_scene(cfg)
    cams = load_cameras(cfg.output_dir / "cameras.json")
    if not 0 <= view < len(cams):
        raise ConfigError(f"view index {view} outside 0..{len(cams) - 1}")
    if not cfg.lights:
        _log("warning: no lights configured, output will be black")
    atlas = load_atlas(cfg.output_dir / "atlas")
    t0 = time.perf_counter()
    hdr = render_view(scene.mesh, atlas, cams[view], cfg.lights, threads=cfg.threads)
    render_s = time.perf_counter() - t0
    exr_path = cfg.output_dir / f"render_{view:03d}.exr"
    png_path = cfg.output_dir / f"render_{view:03d}.png"
    save_image(hdr, exr_path)
    save_image(tonemap_reinhard(hdr, cfg.tonemap_exposure), png_path)
    return {
        "exr": str(exr_path),
        "png": str(png_path),
        "render_seconds": render_s,
    }


def cmd_metrics(cfg: PipelineConfig) -> dict:
    toggles = {
        k: bool(cfg.metric_toggles.get(k, True))
        for k in ("psnr", "ssim", "flip", "si_psnr", "flicker")
    }
    out: dict = {}
    pair_rows = []
    for i, pair in enumerate(cfg.metric_pairs):
        try:
            pred = load_image(pair["pred"])
            gt = load_image(pair["gt"])
        except (KeyError, FileNotFoundError) as e:
            raise ConfigError(f"config field 'metric_pairs[{i}]': {e}") from None
        row = {"pred": pair["pred"], "gt": pair["gt"]}
        if toggles["psnr"]:
            row["psnr"] = psnr(pred, gt)
        if toggles["ssim"]:
            row["ssim"] = ssim(pred, gt)
        if toggles["flip"] and pred.channels == 3:
            row["flip_mean"] = flip_mean(gt, pred)
        if toggles["si_psnr"] and pred.channels == 3:
            row["si_psnr"] = si_psnr(pred, gt)
        pair_rows.append(row)
    if pair_rows:
        out["pairs"] = pair_rows
        for key in ("psnr", "ssim", "flip_mean", "si_psnr"):
            vals = [r[key] for r in pair_rows if key in r]
            if vals:
                out[key] = float(np.mean(vals))

    if toggles["flicker"]:
        cam_path = cfg.output_dir / "cameras.json"
        if cam_path.is_file():
            cams = load_cameras(cam_path)
            frames, depths, cams_used = [], [], []
            for i, cam in enumerate(cams):
                vd = _view_dir(cfg, i)
                if not (vd / "depth.exr").is_file():
                    break
                try:
                    frames.append(_load_view_image(vd, "image"))
                except ConfigError:
                    break
                depths.append(load_depth(vd / "depth.exr"))
                cams_used.append(cam)
            if len(frames) >= 2:
                report = flicker_metric(
                    frames, cams_used, depths, cfg.eps_rel, threads=cfg.threads
                )
                out["flicker"] = report.to_dict()
                csv_path = cfg.output_dir / "flicker.csv"
                with open(csv_path, "w", newline="") as f:
                    w = csv.writer(f)
                    w.writerow(["pair", "flip_mean", "valid_fraction"])
                    for i, (m, v) in enumerate(
                        zip(report.per_pair, report.valid_fraction)
                    ):
                        w.writerow([i, f"{m:.8f}", f"{v:.8f}"])
                out["flicker_csv"] = str(csv_path)
    if not out:
        raise ConfigError(
            "nothing to measure: provide 'metric_pairs' or view images for flicker"
        )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "metrics.json").write_text(json.dumps(out, indent=1))
    return out


def cmd_curate(directory, min_bytes: int = 2_097_152, target_res: int = 512,
               dry_run: bool = False) -> dict:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"dataset directory not found: {directory}")
    rejected_dir = directory / "_rejected"
    files = sorted(
        p for p in directory.iterdir() if p.is_file() and not p.name.startswith("_")
    )
    total = len(files)
    removed, processed, skipped = [], 0, 0
    for p in files:
        if p.stat().st_size < min_bytes:
            removed.append(p.name)
            if not dry_run:
                rejected_dir.mkdir(exist_ok=True)
                shutil.move(str(p), rejected_dir / p.name)
            continue
        try:
            img = load_image(p)
        except (SvbakeError, FileNotFoundError) as e:
            _log(f"warning: skipping unreadable {p.name}: {e}")
            skipped += 1
            continue
        out = resize_box(center_crop_square(img), target_res, target_res)
        if not dry_run:
            save_image(out, p)
        processed += 1
    return {
        "total": total,
        "removed": len(removed),
        "removed_fraction": len(removed) / total if total else 0.0,
        "removed_files": removed,
        "processed": processed,
        "skipped": skipped,
        "dry_run": dry_run,
    }


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors are validation errors
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="svbake", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def shared(sp):
        sp.add_argument("--config", required=True, help="pipeline config JSON")
        sp.add_argument("--out", help="override output directory")
        sp.add_argument("--threads", type=int, help="worker thread cap")
        sp.add_argument("--atlas-res", type=int, dest="atlas_res",
                        help="override atlas resolution")
        sp.add_argument("--eps-rel", type=float, dest="eps_rel",
                        help="relative depth-test tolerance")
        sp.add_argument("--seed", type=int, help="reserved; all commands deterministic")

    sp = sub.add_parser("gbuffer", help="render depth/normal/contour/coverage per view")
    shared(sp)
    sp = sub.add_parser("warp", help="reproject one view into another")
    shared(sp)
    sp.add_argument("--src", type=int, required=True)
    sp.add_argument("--dst", type=int, required=True)
    sp.add_argument("--map", default="image", help="view map to warp (default: image)")
    sp = sub.add_parser("bake", help="merge per-view material maps into the atlas")
    shared(sp)
    sp.add_argument("--no-fill", action="store_true", help="skip hole filling")
    sp = sub.add_parser("render", help="relight the baked atlas")
    shared(sp)
    sp.add_argument("--view", type=int, default=0)
    sp = sub.add_parser("metrics", help="image metrics and flicker consistency")
    shared(sp)
    sp = sub.add_parser("curate", help="dataset curation: size filter, square 512 crops")
    sp.add_argument("directory")
    sp.add_argument("--min-bytes", type=int, default=2_097_152)
    sp.add_argument("--target-res", type=int, default=512)
    sp.add_argument("--dry-run", action="store_true")
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "curate":
            result = cmd_curate(
                args.directory, args.min_bytes, args.target_res, args.dry_run
            )
        else:
            cfg = load_config(args.config, overrides=args)
            if args.command == "gbuffer":
                result = cmd_gbuffer(cfg)
            elif args.command == "warp":
                result = cmd_warp(cfg, args.src, args.dst, args.map)
            elif args.command == "bake":
                result = cmd_bake(cfg, fill=not args.no_fill)
            elif args.command == "render":
                result = cmd_render(cfg, args.view)
            elif args.command == "metrics":
                result = cmd_metrics(cfg)
            else:  # pragma: no cover
                raise ConfigError(f"unknown command {args.command}")
        _emit(result)
        return 0
    except ConfigError as e:
        _log(f"error: {e}")
        return 1
    except (SvbakeError, OSError, ValueError) as e:
        _log(f"runtime error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
