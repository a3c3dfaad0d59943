"""Bundled procedural test scenes with analytic ground truth.

Three scenes back the test and acceptance suites and the CLI examples:
a UV-identity quad, a two-plane occlusion setup, and a small furnished
room whose UV charts tile the atlas without overlap. A deterministic
material pattern provides ground-truth maps for any of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atlas import SVBRDFView, SVBRDFViewSet, TextureAtlas
from .camera import Camera, OrbitSpec, camera_from_fov
from .image import ImageF, SRGB, SCALAR
from .mesh import TriangleMesh
from .raster import rasterize_gbuffer


@dataclass
class Scene:
    mesh: TriangleMesh
    camera: Camera
    pivot: np.ndarray
    delta_lat: float = 25.0
    delta_lon: float = 25.0

    def orbit(self, count: int = 5) -> OrbitSpec:
        """Recommended five-view orbit for this scene."""
        return OrbitSpec(
            base=self.camera, count=count,
            delta_lat=self.delta_lat, delta_lon=self.delta_lon, pivot=self.pivot,
        )


def _quad(corners, uv_rect) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions, uvs and normals of one quad; corners wind counter-
    clockwise as seen from the front."""
    c = np.asarray(corners, dtype=np.float64)
    u0, v0, u1, v1 = uv_rect
    uv = np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]])
    n = np.cross(c[1] - c[0], c[3] - c[0])
    n = n / np.linalg.norm(n)
    return c, uv, np.tile(n, (4, 1))


def _mesh_from_quads(quads) -> TriangleMesh:
    pos, uv, nrm, tris = [], [], [], []
    for corners, uv_rect in quads:
        c, t, n = _quad(corners, uv_rect)
        start = sum(len(p) for p in pos)
        pos.append(c)
        uv.append(t)
        nrm.append(n)
        tris.append([[start, start + 1, start + 2], [start, start + 2, start + 3]])
    return TriangleMesh(
        positions=np.concatenate(pos),
        normals=np.concatenate(nrm),
        uvs=np.concatenate(uv),
        triangles=np.concatenate(tris),
    )


def _chart_cells(n: int, pad: float = 0.02):
    """Non-overlapping UV rectangles, one per quad, on a square grid."""
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    cells = []
    for i in range(n):
        r, c = divmod(i, cols)
        w, h = 1.0 / cols, 1.0 / rows
        cells.append(
            (c * w + pad * w, r * h + pad * h, (c + 1) * w - pad * w, (r + 1) * h - pad * h)
        )
    return cells


def quad_scene(resolution: int = 768, fov_x_deg: float = 35.0) -> Scene:
    """Unit quad in the XY plane with identity UVs, camera on the +Z axis."""
    mesh = _mesh_from_quads(
        [
            (
                [(-0.5, -0.5, 0.0), (0.5, -0.5, 0.0), (0.5, 0.5, 0.0), (-0.5, 0.5, 0.0)],
                (0.0, 0.0, 1.0, 1.0),
            )
        ]
    )
    cam = camera_from_fov((0, 0, 2.0), (0, 0, 0), resolution, resolution, fov_x_deg)
    return Scene(mesh=mesh, camera=cam, pivot=np.zeros(3))


def two_plane_scene(resolution: int = 256) -> Scene:
    """A front plane hiding part of a back wall; side motion disoccludes."""
    cells = _chart_cells(2)
    back = [(-4.0, -3.0, 0.0), (4.0, -3.0, 0.0), (4.0, 3.0, 0.0), (-4.0, 3.0, 0.0)]
    front = [(-2.5, -2.0, 1.5), (0.8, -2.0, 1.5), (0.8, 2.0, 1.5), (-2.5, 2.0, 1.5)]
    mesh = _mesh_from_quads([(back, cells[0]), (front, cells[1])])
    cam = camera_from_fov((0, 0, 4.0), (0, 0, 0), resolution, resolution, 70.0)
    return Scene(mesh=mesh, camera=cam, pivot=np.array([0.0, 0.0, 0.75]))


def _box_quads(lo, hi, inward: bool = False):
    """Six quads of an axis-aligned box, wound outward unless inward."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    faces = [
        [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],  # +z
        [(x1, y0, z0), (x0, y0, z0), (x0, y1, z0), (x1, y1, z0)],  # -z
        [(x1, y0, z1), (x1, y0, z0), (x1, y1, z0), (x1, y1, z1)],  # +x
        [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],  # -x
        [(x0, y1, z1), (x1, y1, z1), (x1, y1, z0), (x0, y1, z0)],  # +y
        [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],  # -y
    ]
    if inward:
        faces = [[f[0], f[3], f[2], f[1]] for f in faces]
    return faces


def room_scene(resolution: int = 768) -> Scene:
    """Furnished set-style room: floor, three walls, open top and front.

    Tuned together with its recommended orbit (descending 25-degree
    latitude steps, 25-degree azimuth steps) so that warping between
    neighbor views leaves at most ~23% disoccluded pixels and a five-view
    accumulation leaves under 10%; content swept in by the orbit lands
    mostly on the open side, which is background rather than holes.
    """
    quads = [
        # floor
        [(-3, -1.5, 3), (3, -1.5, 3), (3, -1.5, -3), (-3, -1.5, -3)],
        # back wall
        [(-3, -1.5, -3), (3, -1.5, -3), (3, 1.8, -3), (-3, 1.8, -3)],
        # left wall (lower, opens the azimuth sweep direction)
        [(-3, -1.5, -3), (-3, -1.5, 3), (-3, 1.0, 3), (-3, 1.0, -3)],
        # right wall
        [(3, -1.5, 3), (3, -1.5, -3), (3, 1.8, -3), (3, 1.8, 3)],
    ]
    quads.extend(_box_quads((-0.6, -1.5, -1.2), (0.6, -0.9, 0.0)))   # table
    quads.extend(_box_quads((1.2, -1.5, -1.8), (1.9, -0.85, -1.1)))  # crate
    quads.extend(_box_quads((-2.2, -1.5, -3.0), (-1.0, 0.3, -2.6)))  # shelf
    cells = _chart_cells(len(quads))
    mesh = _mesh_from_quads(list(zip(quads, cells)))
    pivot = np.array([0.0, -1.0, -0.2])
    cam = camera_from_fov((-0.4, 0.8, 2.8), pivot, resolution, resolution, 88.0)
    return Scene(mesh=mesh, camera=cam, pivot=pivot, delta_lat=-25.0, delta_lon=25.0)


def uv_sphere(segments: int = 32, rings: int = 16, radius: float = 1.0,
              center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    center = np.asarray(center, dtype=np.float64)
    pos, nrm, uv, tris = [], [], [], []
    for r in range(rings + 1):
        theta = np.pi * r / rings
        for s in range(segments + 1):
            phi = 2 * np.pi * s / segments
            n = np.array(
                [np.sin(theta) * np.cos(phi), np.cos(theta), np.sin(theta) * np.sin(phi)]
            )
            pos.append(center + radius * n)
            nrm.append(n)
            uv.append([s / segments, r / rings])
    stride = segments + 1
    for r in range(rings):
        for s in range(segments):
            a = r * stride + s
            b = a + stride
            tris.append([a, b, a + 1])
            tris.append([a + 1, b, b + 1])
    return TriangleMesh(
        positions=np.asarray(pos), normals=np.asarray(nrm),
        uvs=np.asarray(uv), triangles=np.asarray(tris, dtype=np.int32),
    )


def material_pattern(uv: np.ndarray):
    """Deterministic ground-truth material maps as functions of UV.

    Smooth sinusoid mixtures and a soft checker keep the maps band-limited
    enough to survive two bilinear resamplings in round-trip tests.
    """
    uv = np.asarray(uv, dtype=np.float64)
    u = uv[..., 0]
    v = uv[..., 1]
    checker = 0.5 + 0.5 * np.sin(2 * np.pi * 4 * u) * np.sin(2 * np.pi * 4 * v)
    base = np.stack(
        [
            0.45 + 0.35 * np.sin(2 * np.pi * (2.0 * u + 0.5 * v)),
            0.50 + 0.30 * np.sin(2 * np.pi * (1.5 * v + 0.25)),
            0.40 + 0.25 * checker,
        ],
        axis=-1,
    )
    rough = 0.35 + 0.40 * (0.5 + 0.5 * np.sin(2 * np.pi * (u + v)))
    metal = np.clip(1.5 * (0.5 + 0.5 * np.sin(2 * np.pi * 1.5 * u)) - 0.4, 0.0, 1.0) * 0.8
    return np.clip(base, 0.0, 1.0), rough, metal


def pattern_views(mesh: TriangleMesh, cams: list[Camera],
                  threads: int = 1) -> SVBRDFViewSet:
    """Perfectly consistent per-view material maps rendered from the
    ground-truth pattern; stands in for an external SVBRDF predictor."""
    views = []
    for cam in cams:
        g = rasterize_gbuffer(mesh, cam, threads=threads)
        base, rough, metal = material_pattern(g.uv.astype(np.float64))
        cov = g.coverage
        base[~cov] = 0.0
        rough = np.where(cov, rough, 0.0)
        metal = np.where(cov, metal, 0.0)
        views.append(
            SVBRDFView(
                camera=cam,
                basecolor=ImageF.from_array(base.astype(np.float32), SRGB),
                roughness=ImageF.from_array(rough.astype(np.float32), SCALAR),
                metallic=ImageF.from_array(metal.astype(np.float32), SCALAR),
                depth=g.depth,
            )
        )
    return SVBRDFViewSet(views=views)


def pattern_atlas(resolution: int = 512) -> TextureAtlas:
    """The ground-truth pattern sampled directly into a filled atlas."""
    ij = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(ij, ij)
    base, rough, metal = material_pattern(np.stack([uu, vv], axis=-1))
    full = np.ones((resolution, resolution), dtype=bool)
    return TextureAtlas(
        resolution=resolution,
        basecolor=base.astype(np.float32),
        roughness=rough.astype(np.float32),
        metallic=metal.astype(np.float32),
        weight_sum=np.ones((resolution, resolution), dtype=np.float32),
        observed=full,
        basecolor_colorspace=SRGB,
        hole_filled=True,
    )
