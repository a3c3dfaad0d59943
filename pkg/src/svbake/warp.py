"""Depth-based cross-view warping with disocclusion masks.

Warping is an inverse gather: each covered destination pixel is
unprojected with the destination depth, reprojected into the source view
and bilinearly sampled when the source depth map confirms visibility
(relative tolerance eps_rel). Pixels that fail the test, fall outside the
source frame, or land on empty source pixels are disoccluded; they are
exactly the holes an inpainter has to fill.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .camera import Camera
from .image import ImageF


@dataclass
class WarpResult:
    image: ImageF            # same channel count and tag as the source
    valid: np.ndarray        # (H, W) bool, confirmed correspondence
    disoccluded: np.ndarray  # (H, W) bool, covered but unexplained

    @property
    def covered(self) -> np.ndarray:
        return self.valid | self.disoccluded


def _bilinear_setup(x: np.ndarray, y: np.ndarray, w: int, h: int):
    """Integer taps and weights for bilinear sampling at texel coords.

    Coordinates within 1e-7 of a grid point snap to it so that identity
    warps reproduce the source bit for bit.
    """
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = x - x0f
    fy = y - y0f
    fx = np.where(fx < 1e-7, 0.0, np.where(fx > 1.0 - 1e-7, 1.0, fx))
    fy = np.where(fy < 1e-7, 0.0, np.where(fy > 1.0 - 1e-7, 1.0, fy))
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    return (y0, x0, y1, x1), (w00, w10, w01, w11)


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamped bilinear sampling; img is (H, W) or (H, W, C)."""
    h, w = img.shape[:2]
    (y0, x0, y1, x1), (w00, w10, w01, w11) = _bilinear_setup(x, y, w, h)
    if img.ndim == 2:
        return (
            w00 * img[y0, x0] + w10 * img[y0, x1]
            + w01 * img[y1, x0] + w11 * img[y1, x1]
        )
    ww = (w00[..., None], w10[..., None], w01[..., None], w11[..., None])
    return (
        ww[0] * img[y0, x0] + ww[1] * img[y0, x1]
        + ww[2] * img[y1, x0] + ww[3] * img[y1, x1]
    )


@njit(cache=True, nogil=True)
def _warp_kernel(dst_depth, dst_rot, dst_center, dfx, dfy, dcx, dcy,
                 src_rot, src_center, sfx, sfy, scx, scy, sw, sh,
                 src_depth, src_img, eps_rel, out, valid, disocc):
    """Per-pixel inverse warp; pure gather, deterministic, GIL-free."""
    height, width = dst_depth.shape
    channels = src_img.shape[1]
    for i in range(height):
        for j in range(width):
            d = dst_depth[i, j]
            if not (d > 0.0 and np.isfinite(d)):
                continue
            # unproject through the destination camera
            xc = (j + 0.5 - dcx) / dfx * d
            yc = -(i + 0.5 - dcy) / dfy * d
            zc = -d
            wx = dst_rot[0, 0] * xc + dst_rot[0, 1] * yc + dst_rot[0, 2] * zc + dst_center[0]
            wy = dst_rot[1, 0] * xc + dst_rot[1, 1] * yc + dst_rot[1, 2] * zc + dst_center[1]
            wz = dst_rot[2, 0] * xc + dst_rot[2, 1] * yc + dst_rot[2, 2] * zc + dst_center[2]
            # into the source camera
            px = wx - src_center[0]
            py = wy - src_center[1]
            pz = wz - src_center[2]
            sx = px * src_rot[0, 0] + py * src_rot[1, 0] + pz * src_rot[2, 0]
            sy = px * src_rot[0, 1] + py * src_rot[1, 1] + pz * src_rot[2, 1]
            sz = px * src_rot[0, 2] + py * src_rot[1, 2] + pz * src_rot[2, 2]
            ds = -sz
            if ds <= 0.0:
                disocc[i, j] = True
                continue
            u = scx + sfx * sx / ds
            v = scy - sfy * sy / ds
            if u < 0.0 or u > sw or v < 0.0 or v > sh:
                disocc[i, j] = True
                continue
            x = min(max(u - 0.5, 0.0), sw - 1.0)
            y = min(max(v - 0.5, 0.0), sh - 1.0)
            x0 = int(x)
            y0 = int(y)
            fx = x - x0
            fy = y - y0
            # snap near-integer coordinates so identity warps are bit-exact
            if fx < 1e-7:
                fx = 0.0
            elif fx > 1.0 - 1e-7:
                fx = 1.0
            if fy < 1e-7:
                fy = 0.0
            elif fy > 1.0 - 1e-7:
                fy = 1.0
            x1 = min(x0 + 1, sw - 1)
            y1 = min(y0 + 1, sh - 1)
            w00 = (1.0 - fx) * (1.0 - fy)
            w10 = fx * (1.0 - fy)
            w01 = (1.0 - fx) * fy
            w11 = fx * fy
            i00 = y0 * sw + x0
            i10 = y0 * sw + x1
            i01 = y1 * sw + x0
            i11 = y1 * sw + x1
            d_map = 0.0
            ok = True
            for wgt, idx in ((w00, i00), (w10, i10), (w01, i01), (w11, i11)):
                if wgt == 0.0:
                    continue
                tap = src_depth[idx]
                if not np.isfinite(tap):
                    ok = False
                    break
                d_map += wgt * tap
            if not ok or abs(ds - d_map) > eps_rel * d_map:
                disocc[i, j] = True
                continue
            valid[i, j] = True
            for c in range(channels):
                out[i, j, c] = (
                    w00 * src_img[i00, c] + w10 * src_img[i10, c]
                    + w01 * src_img[i01, c] + w11 * src_img[i11, c]
                )


def warp_view(src_img: ImageF, src_cam: Camera, src_depth: np.ndarray,
              dst_cam: Camera, dst_depth: np.ndarray,
              eps_rel: float = 0.01) -> WarpResult:
    """Warp a source view into the destination camera."""
    if eps_rel <= 0:
        raise ValueError(f"eps_rel must be > 0, got {eps_rel}")
    src_depth = np.ascontiguousarray(src_depth, dtype=np.float64)
    dst_depth = np.ascontiguousarray(dst_depth, dtype=np.float64)
    if src_depth.shape != (src_cam.height, src_cam.width):
        raise ValueError("source depth resolution does not match its camera")
    if dst_depth.shape != (dst_cam.height, dst_cam.width):
        raise ValueError("destination depth resolution does not match its camera")
    if (src_img.height, src_img.width) != src_depth.shape:
        raise ValueError("source image resolution does not match source depth")

    out = np.zeros((dst_cam.height, dst_cam.width, src_img.channels), dtype=np.float64)
    valid = np.zeros(dst_depth.shape, dtype=np.bool_)
    disocc = np.zeros(dst_depth.shape, dtype=np.bool_)
    src_flat = np.ascontiguousarray(
        src_img.data.reshape(-1, src_img.channels), dtype=np.float32
    )
    _warp_kernel(
        dst_depth, dst_cam.rotation, dst_cam.center,
        float(dst_cam.fx), float(dst_cam.fy), float(dst_cam.cx), float(dst_cam.cy),
        src_cam.rotation, src_cam.center,
        float(src_cam.fx), float(src_cam.fy), float(src_cam.cx), float(src_cam.cy),
        src_cam.width, src_cam.height,
        src_depth.ravel(), src_flat, float(eps_rel), out, valid, disocc,
    )
    return WarpResult(
        image=ImageF.from_array(out.astype(np.float32), src_img.colorspace),
        valid=valid,
        disoccluded=disocc,
    )


def normals_from_depth(cam: Camera, depth: np.ndarray) -> np.ndarray:
    """World-space normals estimated from a depth map.

    Central differences of unprojected positions; one-sided at borders and
    next to empty pixels. Normals are oriented toward the camera.
    """
    depth = np.asarray(depth, dtype=np.float64)
    covered = np.isfinite(depth) & (depth > 0)
    world = cam.unproject(cam.pixel_centers(), np.where(covered, depth, 1.0))
    world[~covered] = np.nan

    def diff(axis):
        fwd = np.roll(world, -1, axis=axis)
        bwd = np.roll(world, 1, axis=axis)
        take = (slice(None),) * axis
        fwd[take + (-1,)] = np.nan
        bwd[take + (0,)] = np.nan
        d2 = fwd - bwd
        d1f = fwd - world
        d1b = world - bwd
        out = np.where(np.isfinite(d2), d2, np.where(np.isfinite(d1f), d1f, d1b))
        return np.nan_to_num(out)

    dy = diff(0)
    dx = diff(1)
    n = np.cross(dy, dx)
    lens = np.linalg.norm(n, axis=-1, keepdims=True)
    n = np.divide(n, lens, out=np.zeros_like(n), where=lens > 1e-20)
    to_cam = cam.center - world
    flip = np.nansum(n * to_cam, axis=-1) < 0
    n[flip] = -n[flip]
    n[~covered] = 0.0
    return n


def accumulate_views(sources, dst_cam: Camera, dst_depth: np.ndarray,
                     eps_rel: float = 0.01,
                     dst_normal: np.ndarray | None = None) -> WarpResult:
    """Merge several source views into one destination frame.

    Each source is a (ImageF, Camera, depth map) triple. Per pixel the
    valid sample whose source views the surface most head-on (largest
    cosine between the surface normal and the direction to the source
    camera) wins; ties keep the earliest source. A covered pixel with no
    valid sample is disoccluded. When dst_normal is omitted, normals are
    estimated from dst_depth.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source view")
    dst_depth = np.asarray(dst_depth, dtype=np.float64)
    covered = np.isfinite(dst_depth) & (dst_depth > 0)
    if dst_normal is None:
        dst_normal = normals_from_depth(dst_cam, dst_depth)
    world = dst_cam.unproject(dst_cam.pixel_centers(), np.where(covered, dst_depth, 1.0))

    channels = sources[0][0].channels
    colorspace = sources[0][0].colorspace
    out = np.zeros((dst_cam.height, dst_cam.width, channels), dtype=np.float32)
    best_cos = np.full(dst_depth.shape, -np.inf)
    any_valid = np.zeros(dst_depth.shape, dtype=bool)

    for img, cam, depth in sources:
        if img.channels != channels:
            raise ValueError("all sources must share the channel count")
        res = warp_view(img, cam, depth, dst_cam, dst_depth, eps_rel)
        to_src = cam.center - world
        lens = np.linalg.norm(to_src, axis=-1, keepdims=True)
        to_src = np.divide(to_src, lens, out=np.zeros_like(to_src), where=lens > 1e-20)
        cos = np.einsum("ijk,ijk->ij", dst_normal, to_src)
        better = res.valid & (cos > best_cos)  # strict: first source keeps ties
        out[better] = res.image.data[better]
        best_cos[better] = cos[better]
        any_valid |= res.valid

    return WarpResult(
        image=ImageF.from_array(out, colorspace),
        valid=any_valid,
        disoccluded=covered & ~any_valid,
    )


def hole_stats(w: WarpResult) -> float:
    """Disoccluded fraction of the covered destination pixels."""
    covered = int(np.count_nonzero(w.covered))
    if covered == 0:
        return 0.0
    return float(np.count_nonzero(w.disoccluded)) / covered
