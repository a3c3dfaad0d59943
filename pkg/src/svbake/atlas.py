"""Texel-space merging of per-view material maps into a texture atlas.

All views are merged at once, photogrammetry style: every texel gathers
its observations from every view, gates them by a depth-visibility test,
weights them by viewing angle and border falloff, and stores the
weight-normalized average. Gathering per texel makes the result
independent of view order and trivially parallel.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy import ndimage

from .camera import Camera
from .image import ImageF
from .mesh import TriangleMesh
from .warp import _bilinear_setup, bilinear_sample

_MIN_UV_AREA = 1e-12
_EMPTY_DEPTH = np.float32(-1e30)  # finite sentinel, poisons the depth test


@dataclass(frozen=True)
class BlendWeights:
    """Observation weight: (cos theta)^angle_exponent, faded linearly over
    border_erosion pixels from the frame edge and from invalid-mask
    boundaries, gated by a relative depth-visibility test.

    Optional robust rejection discards observations farther than
    mad_k median absolute deviations from the per-texel median.
    """

    angle_exponent: float = 2.0
    border_erosion: float = 8.0
    depth_eps_rel: float = 0.01
    reject_outliers: bool = False
    mad_k: float = 3.0

    def __post_init__(self):
        if self.angle_exponent < 0:
            raise ValueError("angle_exponent must be >= 0")
        if self.border_erosion < 0:
            raise ValueError("border_erosion must be >= 0")
        if self.depth_eps_rel <= 0:
            raise ValueError("depth_eps_rel must be > 0")


@dataclass
class SVBRDFView:
    camera: Camera
    basecolor: ImageF          # 3 channels
    roughness: ImageF          # 1 channel
    metallic: ImageF           # 1 channel
    depth: np.ndarray          # (H, W) float, +inf where empty
    valid_mask: np.ndarray | None = None  # optional, False = to be ignored

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        shape = (self.camera.height, self.camera.width)
        for name, img, ch in (
            ("basecolor", self.basecolor, 3),
            ("roughness", self.roughness, 1),
            ("metallic", self.metallic, 1),
        ):
            if (img.height, img.width) != shape:
                raise ValueError(f"{name} resolution does not match the camera")
            if img.channels != ch:
                raise ValueError(f"{name} must have {ch} channel(s)")
        for name, img in (("roughness", self.roughness), ("metallic", self.metallic)):
            if img.data.min() < 0.0 or img.data.max() > 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.basecolor.data.min() < 0.0 or self.basecolor.data.max() > 1.0:
            raise ValueError("basecolor must lie in [0, 1]")
        if self.depth.shape != shape:
            raise ValueError("depth resolution does not match the camera")
        if self.valid_mask is not None:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
            if self.valid_mask.shape != shape:
                raise ValueError("valid_mask resolution does not match the camera")
        self._planes = None
        self._depth_flat = None
        self._mask_dist = None

    def value_planes(self) -> np.ndarray:
        """Flattened (H*W, 5) float32 basecolor+roughness+metallic stack."""
        if self._planes is None:
            h, w = self.depth.shape
            self._planes = np.ascontiguousarray(
                np.concatenate(
                    [
                        self.basecolor.data.reshape(h * w, 3),
                        self.roughness.data.reshape(h * w, 1),
                        self.metallic.data.reshape(h * w, 1),
                    ],
                    axis=1,
                ),
                dtype=np.float32,
            )
        return self._planes

    def depth_flat(self) -> np.ndarray:
        """Flat float32 depth with empty pixels set to a poison sentinel."""
        if self._depth_flat is None:
            d = self.depth.astype(np.float32).ravel()
            self._depth_flat = np.where(np.isfinite(d), d, _EMPTY_DEPTH)
        return self._depth_flat

    def mask_distance(self) -> np.ndarray:
        """Flat float32 distance (pixels) to the nearest invalid pixel."""
        if self._mask_dist is None:
            self._mask_dist = (
                ndimage.distance_transform_edt(self.valid_mask)
                .astype(np.float32)
                .ravel()
            )
        return self._mask_dist


@dataclass
class SVBRDFViewSet:
    views: list[SVBRDFView]

    def __post_init__(self):
        if not self.views:
            raise ValueError("view set is empty")
        tags = {v.basecolor.colorspace for v in self.views}
        if len(tags) > 1:
            raise ValueError(f"views mix basecolor colorspaces: {sorted(tags)}")


@dataclass
class TextureAtlas:
    resolution: int
    basecolor: np.ndarray       # (R, R, 3) float32
    roughness: np.ndarray       # (R, R) float32
    metallic: np.ndarray        # (R, R) float32
    weight_sum: np.ndarray      # (R, R) float32
    observed: np.ndarray        # (R, R) bool
    basecolor_colorspace: str
    hole_filled: bool = False


@dataclass
class AtlasGeometry:
    """Per-texel surface samples from UV-space rasterization."""

    position: np.ndarray  # (R, R, 3) float64
    normal: np.ndarray    # (R, R, 3) float64
    tri_id: np.ndarray    # (R, R) int32, -1 outside every chart
    mask: np.ndarray      # (R, R) bool


def rasterize_uv_charts(mesh: TriangleMesh, resolution: int,
                        dilation_texels: float = 1.0) -> AtlasGeometry:
    """Rasterize the mesh's UV charts into texel-space surface samples.

    Triangles are inflated by dilation_texels so chart borders own a ring
    of texels and bilinear atlas sampling does not bleed background; the
    texel nearest to a triangle interior wins contested texels (ties keep
    the lower triangle index). Barycentrics are clamped to the triangle,
    so dilated texels take boundary attributes rather than extrapolating.
    """
    r = resolution
    pos = np.zeros((r, r, 3), dtype=np.float64)
    nrm = np.zeros((r, r, 3), dtype=np.float64)
    tri_id = np.full((r, r), -1, dtype=np.int32)
    score = np.full((r, r), -np.inf)

    uv_px = mesh.uvs * r  # texel units so dilation distances are in texels
    for t, tri in enumerate(mesh.triangles):
        (x0, y0), (x1, y1), (x2, y2) = uv_px[tri]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if abs(area2) < _MIN_UV_AREA:
            continue
        sgn = 1.0 if area2 > 0 else -1.0

        xmin = max(int(np.floor(min(x0, x1, x2) - 0.5 - dilation_texels)), 0)
        xmax = min(int(np.ceil(max(x0, x1, x2) - 0.5 + dilation_texels)), r - 1)
        ymin = max(int(np.floor(min(y0, y1, y2) - 0.5 - dilation_texels)), 0)
        ymax = min(int(np.ceil(max(y0, y1, y2) - 0.5 + dilation_texels)), r - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px, py = np.meshgrid(
            np.arange(xmin, xmax + 1) + 0.5, np.arange(ymin, ymax + 1) + 0.5
        )

        dists = []
        edges = ((x1, y1, x2, y2), (x2, y2, x0, y0), (x0, y0, x1, y1))
        for ax, ay, bx, by in edges:
            e = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            elen = np.hypot(bx - ax, by - ay)
            dists.append(sgn * e / max(elen, 1e-12))
        inner = np.minimum(np.minimum(dists[0], dists[1]), dists[2])
        claim = inner >= -dilation_texels
        if not claim.any():
            continue

        rows = slice(ymin, ymax + 1)
        cols = slice(xmin, xmax + 1)
        better = claim & (inner > score[rows, cols])
        if not better.any():
            continue

        bx = px[better]
        by = py[better]
        l0 = sgn * ((x2 - x1) * (by - y1) - (y2 - y1) * (bx - x1)) / abs(area2)
        l1 = sgn * ((x0 - x2) * (by - y2) - (y0 - y2) * (bx - x2)) / abs(area2)
        lam = np.clip(np.stack([l0, l1, 1.0 - l0 - l1], axis=-1), 0.0, 1.0)
        lam /= lam.sum(axis=-1, keepdims=True)

        p = lam @ mesh.positions[tri]
        n = lam @ mesh.normals[tri]
        lens = np.linalg.norm(n, axis=-1, keepdims=True)
        n = np.divide(n, lens, out=np.zeros_like(n), where=lens > 1e-20)

        score[rows, cols][better] = inner[better]
        pos[rows, cols][better] = p
        nrm[rows, cols][better] = n
        tri_id[rows, cols][better] = t

    return AtlasGeometry(position=pos, normal=nrm, tri_id=tri_id, mask=tri_id >= 0)


@njit(cache=True, nogil=True)
def _observe_kernel(pos, nrm, rot, center, fx, fy, cx, cy, width, height,
                    depth_flat, planes, mask_dist, has_mask,
                    eps_rel, alpha, erosion, out_w, out_vals):
    """Fused per-texel observation: project, depth-test, weigh, sample.

    One pass per texel keeps the bake memory-bound parts inside a single
    loop; the kernel is pure per-texel gather, so chunked multi-thread
    runs match the serial run bit for bit.
    """
    for t in range(pos.shape[0]):
        px = pos[t, 0] - center[0]
        py = pos[t, 1] - center[1]
        pz = pos[t, 2] - center[2]
        xc = px * rot[0, 0] + py * rot[1, 0] + pz * rot[2, 0]
        yc = px * rot[0, 1] + py * rot[1, 1] + pz * rot[2, 1]
        zc = px * rot[0, 2] + py * rot[1, 2] + pz * rot[2, 2]
        d = -zc
        if d <= 0.0:
            continue
        u = cx + fx * xc / d
        v = cy - fy * yc / d
        if u < 0.0 or u > width or v < 0.0 or v > height:
            continue
        x = min(max(u - 0.5, 0.0), width - 1.0)
        y = min(max(v - 0.5, 0.0), height - 1.0)
        x0 = int(x)
        y0 = int(y)
        gx = x - x0
        gy = y - y0
        x1 = min(x0 + 1, width - 1)
        y1 = min(y0 + 1, height - 1)
        i00 = y0 * width + x0
        i10 = y0 * width + x1
        i01 = y1 * width + x0
        i11 = y1 * width + x1
        w00 = (1.0 - gx) * (1.0 - gy)
        w10 = gx * (1.0 - gy)
        w01 = (1.0 - gx) * gy
        w11 = gx * gy
        # empty pixels hold a huge negative sentinel: any contaminated
        # footprint drives d_map negative and fails the test below
        d_map = (
            w00 * depth_flat[i00] + w10 * depth_flat[i10]
            + w01 * depth_flat[i01] + w11 * depth_flat[i11]
        )
        if d_map <= 0.0 or abs(d - d_map) > eps_rel * d_map:
            continue
        tl = (px * px + py * py + pz * pz) ** 0.5
        if tl < 1e-20:
            continue
        cos = -(nrm[t, 0] * px + nrm[t, 1] * py + nrm[t, 2] * pz) / tl
        if cos <= 0.0:
            continue
        ramp = 1.0
        if erosion > 0.0:
            edge = min(min(u, v), min(width - u, height - v))
            ramp = min(edge / erosion, 1.0)
        if has_mask:
            md = (
                w00 * mask_dist[i00] + w10 * mask_dist[i10]
                + w01 * mask_dist[i01] + w11 * mask_dist[i11]
            )
            ramp *= min(max(md / max(erosion, 1.0), 0.0), 1.0)
        weight = cos ** alpha * ramp
        if weight <= 0.0:
            continue
        out_w[t] = weight
        for c in range(5):
            out_vals[t, c] = (
                w00 * planes[i00, c] + w10 * planes[i10, c]
                + w01 * planes[i01, c] + w11 * planes[i11, c]
            )


def _view_observation(view: SVBRDFView, weights: BlendWeights,
                      pos: np.ndarray, nrm: np.ndarray):
    """Weight and sampled quantities of one view at the given texels."""
    cam = view.camera
    n = len(pos)
    out_w = np.zeros(n)
    out_vals = np.zeros((n, 5), dtype=np.float32)
    has_mask = view.valid_mask is not None
    mask_dist = view.mask_distance() if has_mask else np.zeros(1, dtype=np.float32)
    _observe_kernel(
        np.ascontiguousarray(pos), np.ascontiguousarray(nrm),
        cam.rotation, cam.center,
        float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
        cam.width, cam.height,
        view.depth_flat(), view.value_planes(), mask_dist, has_mask,
        float(weights.depth_eps_rel), float(weights.angle_exponent),
        float(weights.border_erosion), out_w, out_vals,
    )
    return out_w, out_vals


def _reject_outliers(w_stack: np.ndarray, v_stack: np.ndarray, mad_k: float):
    """Per-quantity MAD gating; returns one weight stack per quantity."""
    quantities = ((0, 3), (3, 4), (4, 5))  # basecolor, roughness, metallic
    out = []
    masked = np.where(w_stack[..., None] > 0, v_stack, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN texels
        for lo, hi in quantities:
            vals = masked[:, :, lo:hi]
            med = np.nanmedian(vals, axis=0)
            mad = np.nanmedian(np.abs(vals - med), axis=0)
            with np.errstate(invalid="ignore"):
                keep = np.all(
                    np.abs(vals - med) <= mad_k * np.maximum(mad, 1e-6), axis=-1
                )
            out.append(np.where(keep, w_stack, 0.0))
    return out


def bake_atlas(mesh: TriangleMesh, views: SVBRDFViewSet,
               weights: BlendWeights | None = None, resolution: int = 2048,
               threads: int = 1) -> TextureAtlas:
    """Merge all views into one atlas by weighted per-texel blending."""
    if weights is None:
        weights = BlendWeights()
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if mesh.num_triangles == 0:
        raise ValueError("mesh has no triangles")

    geo = rasterize_uv_charts(mesh, resolution)
    flat_mask = geo.mask.ravel()
    pos = geo.position.reshape(-1, 3)[flat_mask]
    nrm = geo.normal.reshape(-1, 3)[flat_mask]
    n_texels = len(pos)

    # canonical view order: permutation-invariant accumulation
    order = sorted(
        range(len(views.views)),
        key=lambda i: tuple(views.views[i].camera.center) + (i,),
    )

    def gather(lo, hi):
        if weights.reject_outliers:
            ws, vs = [], []
            for i in order:
                w_obs, values = _view_observation(
                    views.views[i], weights, pos[lo:hi], nrm[lo:hi]
                )
                ws.append(w_obs)
                vs.append(values)
            w_stack = np.stack(ws)
            v_stack = np.stack(vs)
            wq = _reject_outliers(w_stack, v_stack, weights.mad_k)
            spans = ((0, 3), (3, 4), (4, 5))
            planes = []
            for q, (a, b) in enumerate(spans):
                num = np.einsum(
                    "vt,vtc->tc", wq[q], v_stack[:, :, a:b], dtype=np.float64
                )
                den = wq[q].sum(axis=0, dtype=np.float64)
                planes.append(
                    np.divide(
                        num, den[:, None], out=np.zeros_like(num),
                        where=den[:, None] > 0,
                    )
                )
            return np.concatenate(planes, axis=-1), w_stack.sum(axis=0, dtype=np.float64)

        num = np.zeros((hi - lo, 5))
        den = np.zeros(hi - lo)
        for i in order:
            w_obs, values = _view_observation(
                views.views[i], weights, pos[lo:hi], nrm[lo:hi]
            )
            num += w_obs[:, None] * values
            den += w_obs
        blended = np.divide(
            num, den[:, None], out=np.zeros_like(num), where=den[:, None] > 0
        )
        return blended, den

    if threads <= 1 or n_texels < 1 << 16:
        blended, wsum = gather(0, n_texels)
    else:
        bounds = np.linspace(0, n_texels, threads + 1).astype(int)
        blended = np.zeros((n_texels, 5))
        wsum = np.zeros(n_texels)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {
                pool.submit(gather, int(a), int(b)): (int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
                if a < b
            }
            for fut, (a, b) in futs.items():
                blended[a:b], wsum[a:b] = fut.result()

    r = resolution
    base = np.zeros((r * r, 3), dtype=np.float32)
    rough = np.zeros(r * r, dtype=np.float32)
    metal = np.zeros(r * r, dtype=np.float32)
    wfull = np.zeros(r * r, dtype=np.float32)
    base[flat_mask] = blended[:, 0:3].astype(np.float32)
    rough[flat_mask] = blended[:, 3].astype(np.float32)
    metal[flat_mask] = blended[:, 4].astype(np.float32)
    wfull[flat_mask] = wsum.astype(np.float32)

    return TextureAtlas(
        resolution=r,
        basecolor=base.reshape(r, r, 3),
        roughness=rough.reshape(r, r),
        metallic=metal.reshape(r, r),
        weight_sum=wfull.reshape(r, r),
        observed=(wfull > 0).reshape(r, r),
        basecolor_colorspace=views.views[0].basecolor.colorspace,
    )


def _pull_push(planes: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Fill unobserved texels from a mip pyramid of observed averages."""
    levels = [(planes.astype(np.float64), observed.astype(np.float64))]
    while levels[-1][0].shape[0] > 1 or levels[-1][0].shape[1] > 1:
        v, m = levels[-1]
        h, w = v.shape[:2]
        ph, pw = (h + 1) // 2 * 2, (w + 1) // 2 * 2
        vp = np.zeros((ph, pw, v.shape[2]))
        mp = np.zeros((ph, pw))
        vp[:h, :w] = v * m[:, :, None]
        mp[:h, :w] = m
        vs = (
            vp[0::2, 0::2] + vp[0::2, 1::2] + vp[1::2, 0::2] + vp[1::2, 1::2]
        )
        ms = mp[0::2, 0::2] + mp[0::2, 1::2] + mp[1::2, 0::2] + mp[1::2, 1::2]
        vc = np.divide(vs, ms[:, :, None], out=np.zeros_like(vs), where=ms[:, :, None] > 0)
        levels.append((vc, (ms > 0).astype(np.float64)))

    coarse = levels[-1][0]
    for v, m in reversed(levels[:-1]):
        h, w = v.shape[:2]
        xs = (np.arange(w) + 0.5) / w * coarse.shape[1] - 0.5
        ys = (np.arange(h) + 0.5) / h * coarse.shape[0] - 0.5
        gx, gy = np.meshgrid(xs, ys)
        up = bilinear_sample(coarse, gx, gy)
        coarse = np.where(m[:, :, None] > 0, v, up)
    return coarse


def fill_holes(atlas: TextureAtlas) -> TextureAtlas:
    """Fill unobserved texels by pull-push; observed texels are untouched."""
    if not atlas.observed.any():
        raise ValueError("fully-unobserved atlas cannot be filled")
    if atlas.observed.all():
        return replace(atlas, hole_filled=True)
    planes = np.concatenate(
        [atlas.basecolor, atlas.roughness[:, :, None], atlas.metallic[:, :, None]],
        axis=-1,
    )
    filled = _pull_push(planes, atlas.observed)
    obs3 = atlas.observed[:, :, None]
    base = np.where(obs3, atlas.basecolor, filled[:, :, 0:3].astype(np.float32))
    rough = np.where(atlas.observed, atlas.roughness, filled[:, :, 3].astype(np.float32))
    metal = np.where(atlas.observed, atlas.metallic, filled[:, :, 4].astype(np.float32))
    return replace(
        atlas, basecolor=base, roughness=rough, metallic=metal, hole_filled=True
    )


def sample_atlas(atlas: TextureAtlas, uv: np.ndarray) -> dict[str, np.ndarray]:
    """Bilinear atlas lookup with clamp addressing; uv is (..., 2).

    One set of taps serves all three quantities, gathered from the native
    float32 planes and blended in double precision.
    """
    uv = np.asarray(uv, dtype=np.float64)
    r = atlas.resolution
    x = np.clip(uv[..., 0] * r - 0.5, 0.0, r - 1.0)
    y = np.clip(uv[..., 1] * r - 0.5, 0.0, r - 1.0)
    (y0, x0, y1, x1), (w00, w10, w01, w11) = _bilinear_setup(x, y, r, r)

    def blend(plane):
        if plane.ndim == 3:
            ww = (w00[..., None], w10[..., None], w01[..., None], w11[..., None])
        else:
            ww = (w00, w10, w01, w11)
        return (
            ww[0] * plane[y0, x0] + ww[1] * plane[y0, x1]
            + ww[2] * plane[y1, x0] + ww[3] * plane[y1, x1]
        )

    return {
        "basecolor": blend(atlas.basecolor),
        "roughness": blend(atlas.roughness),
        "metallic": blend(atlas.metallic),
    }
