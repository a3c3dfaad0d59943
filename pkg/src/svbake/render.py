"""Forward renderer: relights a merged atlas under point lights.

Direct lighting only, with binary ray-cast shadows against the scene
mesh. The output is linear HDR; tone-map through the imaging module for
display. Intended for validating baked atlases from novel views and
lighting, not as a general renderer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .atlas import TextureAtlas, sample_atlas
from .brdf import BRDFSample, PointLight, shade_brdf
from .camera import Camera
from .image import ImageF, LINEAR_RGB, SRGB, srgb_eotf
from .mesh import TriangleMesh
from .raster import rasterize_gbuffer, raycast_any

_SHADOW_EPS = 1e-4  # parametric offset avoiding self-intersection


def _shade_rows(mesh, atlas, cam, lights, g, rows, out):
    sel = g.coverage[rows]
    if not sel.any():
        return
    pix = cam.pixel_centers()[rows][sel]
    depth = g.depth[rows][sel].astype(np.float64)
    pts = cam.unproject(pix, depth)
    nrm = g.normal[rows][sel].astype(np.float64)
    uv = g.uv[rows][sel].astype(np.float64)

    mat = sample_atlas(atlas, uv)
    base = mat["basecolor"]
    if atlas.basecolor_colorspace == SRGB:
        base = srgb_eotf(base)
    sample = BRDFSample(
        basecolor=base, roughness=mat["roughness"], metallic=mat["metallic"]
    )

    view = cam.center - pts
    view /= np.maximum(np.linalg.norm(view, axis=-1, keepdims=True), 1e-12)

    color = np.zeros((len(pts), 3))
    for light in lights:
        to_light = light.position - pts
        dist2 = np.sum(to_light * to_light, axis=-1)
        dist = np.sqrt(dist2)
        ldir = to_light / np.maximum(dist[:, None], 1e-12)
        n_dot_l = np.maximum(np.sum(nrm * ldir, axis=-1), 0.0)
        # pixels facing away receive nothing, skip their shadow rays
        facing = np.flatnonzero(n_dot_l > 0)
        if not len(facing):
            continue
        shadowed = np.ones(len(pts), dtype=bool)
        shadowed[facing] = raycast_any(
            mesh, pts[facing], to_light[facing], _SHADOW_EPS,
            np.full(len(facing), 1.0 - _SHADOW_EPS),
        )
        f = shade_brdf(sample, nrm, view, ldir)
        falloff = np.divide(
            1.0, dist2, out=np.zeros_like(dist2), where=dist2 > 1e-12
        )
        contrib = f * (n_dot_l * falloff * ~shadowed)[:, None] * light.intensity
        color += contrib
    out[rows][sel] = color.astype(np.float32)


def render_view(mesh: TriangleMesh, atlas: TextureAtlas, cam: Camera,
                lights: list[PointLight], threads: int = 1) -> ImageF:
    """Rasterize the mesh and shade every covered pixel from the atlas."""
    if not atlas.hole_filled and not atlas.observed.all():
        raise ValueError("atlas has unobserved texels; run fill_holes first")
    g = rasterize_gbuffer(mesh, cam, threads=threads)
    out = np.zeros((cam.height, cam.width, 3), dtype=np.float32)
    if threads <= 1 or cam.height < 2 * threads:
        _shade_rows(mesh, atlas, cam, lights, g, slice(0, cam.height), out)
    else:
        bounds = np.linspace(0, cam.height, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(
                    _shade_rows, mesh, atlas, cam, lights, g,
                    slice(int(a), int(b)), out,
                )
                for a, b in zip(bounds[:-1], bounds[1:])
                if a < b
            ]
            for fut in futs:
                fut.result()
    return ImageF.from_array(out, LINEAR_RGB)
