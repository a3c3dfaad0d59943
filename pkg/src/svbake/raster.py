"""Software rasterizer producing per-pixel geometry buffers.

Rasterization is perspective-correct and z-buffered with a top-left fill
rule. Depth ties resolve to the lower triangle index, which makes the
result deterministic and lets banded multi-thread runs match the serial
run bit for bit (bands own exclusive output rows and each band processes
triangles in index order).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .camera import Camera
from .image import ImageF, SCALAR
from .mesh import TriangleMesh

_NEAR = 1e-5  # metric near plane for clipping


@dataclass
class GBuffer:
    depth: np.ndarray     # (H, W) float32, view-space -Z distance, +inf empty
    normal: np.ndarray    # (H, W, 3) float32, world-space unit vectors
    uv: np.ndarray        # (H, W, 2) float32
    tri_id: np.ndarray    # (H, W) int32, -1 where empty
    coverage: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


def _clip_near(corners: np.ndarray, attrs: np.ndarray):
    """Sutherland-Hodgman clip of one triangle against depth >= _NEAR.

    corners: (3, 3) camera-space points; attrs: (3, k) linear attributes.
    Returns lists of clipped polygon corners/attributes (0, 3 or 4 verts).
    """
    depth = -corners[:, 2]
    inside = depth >= _NEAR
    if inside.all():
        return corners, attrs
    if not inside.any():
        return None, None
    out_c, out_a = [], []
    for i in range(3):
        j = (i + 1) % 3
        ci, cj = corners[i], corners[j]
        if inside[i]:
            out_c.append(ci)
            out_a.append(attrs[i])
        if inside[i] != inside[j]:
            t = (depth[i] - _NEAR) / (depth[i] - depth[j])
            out_c.append(ci + t * (cj - ci))
            out_a.append(attrs[i] + t * (attrs[j] - attrs[i]))
    return np.asarray(out_c), np.asarray(out_a)


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by) -> bool:
    dy = by - ay
    dx = bx - ax
    return dy < 0 or (dy == 0 and dx > 0)


def _raster_rows(mesh_data, cam: Camera, row0: int, row1: int,
                 depth, normal, uv, tri_id):
    """Rasterize all triangles into rows [row0, row1)."""
    tri_pix, tri_depth, tri_attr, tri_index = mesh_data
    width = cam.width
    for pix, d, attr, index in zip(tri_pix, tri_depth, tri_attr, tri_index):
        ymin = max(int(np.floor(pix[:, 1].min() - 0.5)), row0)
        ymax = min(int(np.ceil(pix[:, 1].max() - 0.5)), row1 - 1)
        xmin = max(int(np.floor(pix[:, 0].min() - 0.5)), 0)
        xmax = min(int(np.ceil(pix[:, 0].max() - 0.5)), width - 1)
        if ymin > ymax or xmin > xmax:
            continue
        xs = np.arange(xmin, xmax + 1) + 0.5
        ys = np.arange(ymin, ymax + 1) + 0.5
        px, py = np.meshgrid(xs, ys)

        (x0, y0), (x1, y1), (x2, y2) = pix
        area2 = _edge(x0, y0, x1, y1, x2, y2)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            (x1, y1), (x2, y2) = (x2, y2), (x1, y1)
            d = d[[0, 2, 1]]
            attr = attr[[0, 2, 1]]
            area2 = -area2

        e0 = _edge(x1, y1, x2, y2, px, py)  # opposite vertex 0
        e1 = _edge(x2, y2, x0, y0, px, py)
        e2 = _edge(x0, y0, x1, y1, px, py)
        inside = (
            ((e0 > 0) | ((e0 == 0) & _top_left(x1, y1, x2, y2)))
            & ((e1 > 0) | ((e1 == 0) & _top_left(x2, y2, x0, y0)))
            & ((e2 > 0) | ((e2 == 0) & _top_left(x0, y0, x1, y1)))
        )
        if not inside.any():
            continue

        l0 = e0 / area2
        l1 = e1 / area2
        l2 = e2 / area2
        inv_d = l0 / d[0] + l1 / d[1] + l2 / d[2]
        frag_depth = 1.0 / inv_d

        rows = slice(ymin - row0, ymax + 1 - row0)
        cols = slice(xmin, xmax + 1)
        zslab = depth[rows, cols]
        win = inside & (frag_depth < zslab)  # strict: earlier index keeps ties
        if not win.any():
            continue

        w = np.where(
            win[..., None],
            np.stack([l0 / d[0], l1 / d[1], l2 / d[2]], axis=-1) / inv_d[..., None],
            0.0,
        )
        interp = np.tensordot(w, attr, axes=(2, 0))
        nrm = interp[..., :3]
        lens = np.linalg.norm(nrm, axis=-1, keepdims=True)
        nrm = np.divide(nrm, lens, out=np.zeros_like(nrm), where=lens > 1e-20)

        zslab[win] = frag_depth[win]
        normal[rows, cols][win] = nrm[win].astype(np.float32)
        uv[rows, cols][win] = interp[..., 3:5][win].astype(np.float32)
        tri_id[rows, cols][win] = index


def _prepare_triangles(mesh: TriangleMesh, cam: Camera):
    """Transform, near-clip and project every triangle once."""
    pos_cam = cam.world_to_camera(mesh.positions)
    corner_pos = pos_cam[mesh.triangles]            # (T, 3, 3)
    corner_nrm = mesh.normals[mesh.triangles]       # (T, 3, 3)
    corner_uv = mesh.uvs[mesh.triangles]            # (T, 3, 2)
    depths = -corner_pos[..., 2]

    tri_pix, tri_depth, tri_attr, tri_index = [], [], [], []

    def emit(idx, cpos, cattr):
        pix, d = cam.project_camera(cpos)
        tri_pix.append(pix)
        tri_depth.append(d)
        tri_attr.append(cattr)
        tri_index.append(idx)

    all_front = (depths >= _NEAR).all(axis=1)
    attrs_all = np.concatenate([corner_nrm, corner_uv], axis=-1)  # (T, 3, 5)
    for t in range(len(mesh.triangles)):
        if all_front[t]:
            emit(t, corner_pos[t], attrs_all[t])
            continue
        poly, pattr = _clip_near(corner_pos[t], attrs_all[t])
        if poly is None:
            continue
        for k in range(1, len(poly) - 1):
            emit(t, poly[[0, k, k + 1]], pattr[[0, k, k + 1]])
    return tri_pix, tri_depth, tri_attr, tri_index


def rasterize_gbuffer(mesh: TriangleMesh, cam: Camera, threads: int = 1) -> GBuffer:
    """Render depth / normal / UV / coverage buffers for one camera."""
    if cam.fx <= 0 or cam.fy <= 0:
        raise ValueError("degenerate camera")
    h, w = cam.height, cam.width
    depth = np.full((h, w), np.inf, dtype=np.float64)
    normal = np.zeros((h, w, 3), dtype=np.float32)
    uv = np.zeros((h, w, 2), dtype=np.float32)
    tri_id = np.full((h, w), -1, dtype=np.int32)

    mesh_data = _prepare_triangles(mesh, cam)
    if threads <= 1 or h < 2 * threads:
        _raster_rows(mesh_data, cam, 0, h, depth, normal, uv, tri_id)
    else:
        bounds = np.linspace(0, h, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(
                    _raster_rows, mesh_data, cam, int(a), int(b),
                    depth[a:b], normal[a:b], uv[a:b], tri_id[a:b],
                )
                for a, b in zip(bounds[:-1], bounds[1:])
                if a < b
            ]
            for fut in futs:
                fut.result()

    coverage = np.isfinite(depth)
    return GBuffer(
        depth=depth.astype(np.float32),
        normal=normal,
        uv=uv,
        tri_id=tri_id,
        coverage=coverage,
    )


def contour_map(g: GBuffer, depth_rel_thresh: float = 0.02,
                normal_angle_thresh: float = 20.0) -> ImageF:
    """Binary geometry-edge image used as a line-drawing condition.

    A covered pixel is marked when any 4-neighbor is uncovered
    (silhouette), lies behind it by more than depth_rel_thresh relative
    depth (near side of a depth step), or its normal deviates by more than
    normal_angle_thresh degrees (crease, marked on both sides).
    """
    if depth_rel_thresh <= 0 or normal_angle_thresh <= 0:
        raise ValueError("thresholds must be positive")
    d = g.depth.astype(np.float64)
    n = g.normal.astype(np.float64)
    cov = g.coverage
    cos_thresh = np.cos(np.radians(normal_angle_thresh))
    edge = np.zeros(d.shape, dtype=bool)

    shifts = ((0, 1), (0, -1), (1, 0), (-1, 0))
    for dy, dx in shifts:
        nb_d = np.full_like(d, np.nan)
        nb_n = np.zeros_like(n)
        nb_cov = np.zeros_like(cov)
        src = (
            slice(max(dy, 0), d.shape[0] + min(dy, 0)),
            slice(max(dx, 0), d.shape[1] + min(dx, 0)),
        )
        dst = (
            slice(max(-dy, 0), d.shape[0] + min(-dy, 0)),
            slice(max(-dx, 0), d.shape[1] + min(-dx, 0)),
        )
        nb_d[dst] = d[src]
        nb_n[dst] = n[src]
        nb_cov[dst] = cov[src]
        has_nb = np.zeros_like(cov)
        has_nb[dst] = True

        silhouette = cov & has_nb & ~nb_cov
        both = cov & nb_cov
        with np.errstate(invalid="ignore"):
            step_behind = both & ((nb_d - d) > depth_rel_thresh * d)
            crease = both & (np.sum(n * nb_n, axis=-1) < cos_thresh)
        edge |= silhouette | step_behind | crease
    return ImageF.from_array(edge.astype(np.float32), SCALAR)


def raycast_nearest(mesh: TriangleMesh, origins: np.ndarray, dirs: np.ndarray,
                    t_min: float = 1e-6, t_max: float = np.inf):
    """Nearest ray-triangle hits (Moller-Trumbore, no backface culling).

    Returns (t, tri_id, bary) with t=+inf and tri_id=-1 for misses.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(o)
    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int32)
    best_uv = np.zeros((n, 2))
    corners = mesh.positions[mesh.triangles]
    for idx in range(len(corners)):
        a, b, c = corners[idx]
        e1 = b - a
        e2 = c - a
        pvec = np.cross(d, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o - a
        u = np.einsum("ij,ij->i", s, pvec) * inv
        qvec = np.cross(s, e1)
        v = np.einsum("ij,ij->i", d, qvec) * inv
        t = (qvec @ e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > t_min) & (t < t_max)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_tri[closer] = idx
        best_uv[closer, 0] = u[closer]
        best_uv[closer, 1] = v[closer]
    return best_t, best_tri, best_uv


@njit(cache=True, nogil=True)
def _any_hit_kernel(o, d, t_min, far, corners, blocked):
    for r in range(o.shape[0]):
        ox, oy, oz = o[r, 0], o[r, 1], o[r, 2]
        dx, dy, dz = d[r, 0], d[r, 1], d[r, 2]
        fr = far[r]
        for k in range(corners.shape[0]):
            ax, ay, az = corners[k, 0, 0], corners[k, 0, 1], corners[k, 0, 2]
            e1x = corners[k, 1, 0] - ax
            e1y = corners[k, 1, 1] - ay
            e1z = corners[k, 1, 2] - az
            e2x = corners[k, 2, 0] - ax
            e2y = corners[k, 2, 1] - ay
            e2z = corners[k, 2, 2] - az
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = px * e1x + py * e1y + pz * e1z
            if abs(det) < 1e-14:
                continue
            inv = 1.0 / det
            sx = ox - ax
            sy = oy - ay
            sz = oz - az
            u = (sx * px + sy * py + sz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if t_min < t < fr:
                blocked[r] = True
                break


def raycast_any(mesh: TriangleMesh, origins: np.ndarray, dirs: np.ndarray,
                t_min: float, t_max_per_ray: np.ndarray) -> np.ndarray:
    """Boolean any-hit query with a per-ray far bound (shadow rays)."""
    o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    far = np.ascontiguousarray(t_max_per_ray, dtype=np.float64).reshape(-1)
    blocked = np.zeros(len(o), dtype=np.bool_)
    corners = np.ascontiguousarray(mesh.positions[mesh.triangles])
    if len(corners):
        _any_hit_kernel(o, d, float(t_min), far, corners, blocked)
    return blocked
