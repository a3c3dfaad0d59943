import numpy as np
import pytest

import svbake as sv
from svbake.raster import raycast_nearest
from svbake.scenes import quad_scene, room_scene, uv_sphere, _mesh_from_quads

from oracles import contour_scan, masks_agree_within_band, raycast_depth_map


def plane_at(z, half=10.0):
    quad = [(-half, -half, z), (half, -half, z), (half, half, z), (-half, half, z)]
    return _mesh_from_quads([(quad, (0, 0, 1, 1))])


class TestRasterizeGBuffer:
    def test_frustum_filling_plane_depth(self):
        cam = sv.camera_from_fov((0, 0, 2), (0, 0, 0), 64, 64, 60.0)
        g = sv.rasterize_gbuffer(plane_at(0.0), cam)
        assert g.coverage.all()
        assert np.abs(g.depth - 2.0).max() < 1e-5
        assert np.allclose(g.normal, [0, 0, 1], atol=1e-6)

    def test_empty_mesh(self):
        cam = sv.camera_from_fov((0, 0, 2), (0, 0, 0), 32, 32, 60.0)
        mesh = sv.TriangleMesh(
            positions=np.zeros((0, 3)), normals=np.zeros((0, 3)),
            uvs=np.zeros((0, 2)), triangles=np.zeros((0, 3), np.int32),
        )
        g = sv.rasterize_gbuffer(mesh, cam)
        assert not g.coverage.any()
        assert np.isinf(g.depth).all()
        assert (g.tri_id == -1).all()

    def test_z_test_keeps_nearer(self):
        cam = sv.camera_from_fov((0, 0, 4), (0, 0, 0), 48, 48, 60.0)
        near = plane_at(3.0)  # depth 1 from the camera
        far = plane_at(1.0)   # depth 3
        both = sv.TriangleMesh(
            positions=np.concatenate([far.positions, near.positions]),
            normals=np.concatenate([far.normals, near.normals]),
            uvs=np.concatenate([far.uvs, near.uvs]),
            triangles=np.concatenate([far.triangles, near.triangles + 4]),
        )
        g = sv.rasterize_gbuffer(both, cam)
        assert np.abs(g.depth - 1.0).max() < 1e-5

    def test_equal_depth_tie_keeps_lower_index(self):
        cam = sv.camera_from_fov((0, 0, 2), (0, 0, 0), 32, 32, 60.0)
        a = plane_at(0.0)
        both = sv.TriangleMesh(
            positions=np.concatenate([a.positions, a.positions]),
            normals=np.concatenate([a.normals, a.normals]),
            uvs=np.concatenate([a.uvs, a.uvs]),
            triangles=np.concatenate([a.triangles, a.triangles + 4]),
        )
        g = sv.rasterize_gbuffer(both, cam)
        assert g.tri_id.max() <= 1

    def test_resolution_consistency(self):
        mesh = plane_at(0.0)
        for res in (64, 256):
            cam = sv.camera_from_fov((0, 0, 2), (0, 0, 0), res, res, 60.0)
            g = sv.rasterize_gbuffer(mesh, cam)
            assert np.abs(g.depth - 2.0).max() < 1e-5

    def test_shared_edge_no_double_or_gap(self):
        # quad split along the diagonal: pixel centers on the diagonal must
        # belong to exactly one triangle (top-left rule)
        sc = quad_scene(33)
        g = sv.rasterize_gbuffer(sc.mesh, sc.camera)
        assert g.coverage[g.tri_id >= 0].all()
        covered = g.coverage.sum()
        assert (g.tri_id == 0).sum() + (g.tri_id == 1).sum() == covered

    def test_sphere_silhouette_raycast_oracle(self):
        mesh = uv_sphere(segments=48, rings=24, radius=0.8)
        cam = sv.camera_from_fov((0, 0, 3), (0, 0, 0), 64, 64, 45.0)
        g = sv.rasterize_gbuffer(mesh, cam)
        depth_rc, _ = raycast_depth_map(mesh, cam, raycast_nearest)
        assert masks_agree_within_band(g.coverage, np.isfinite(depth_rc), radius=1)

    def test_near_clip_camera_inside(self):
        sc = room_scene(96)
        g = sv.rasterize_gbuffer(sc.mesh, sc.camera)
        assert g.coverage.mean() > 0.9
        assert g.depth[g.coverage].min() > 0

    def test_perspective_correct_uv(self):
        # slanted quad: UV interpolation must follow the perspective mapping,
        # verified against per-pixel ray casting
        quad = [(-1, -1, 1.0), (1, -1, -1.0), (1, 1, -1.0), (-1, 1, 1.0)]
        mesh = _mesh_from_quads([(quad, (0, 0, 1, 1))])
        cam = sv.camera_from_fov((0, 0, 3.5), (0, 0, 0), 64, 64, 50.0)
        g = sv.rasterize_gbuffer(mesh, cam)
        depth_rc, _ = raycast_depth_map(mesh, cam, raycast_nearest)
        sel = g.coverage & np.isfinite(depth_rc)
        assert np.abs(g.depth[sel] - depth_rc[sel]).max() < 1e-4

    def test_threaded_matches_serial(self):
        sc = room_scene(96)
        g1 = sv.rasterize_gbuffer(sc.mesh, sc.camera, threads=1)
        g4 = sv.rasterize_gbuffer(sc.mesh, sc.camera, threads=4)
        assert np.array_equal(g1.depth, g4.depth)
        assert np.array_equal(g1.normal, g4.normal)
        assert np.array_equal(g1.uv, g4.uv)
        assert np.array_equal(g1.tri_id, g4.tri_id)


class TestContourMap:
    def test_flat_plane_interior_empty(self):
        cam = sv.camera_from_fov((0, 0, 2), (0, 0, 0), 64, 64, 60.0)
        g = sv.rasterize_gbuffer(plane_at(0.0), cam)
        edges = sv.contour_map(g).data[:, :, 0]
        assert edges.sum() == 0

    def test_two_plane_depth_step_single_band(self):
        # near plane on the left half, far plane on the right: the contour
        # marks the near side only, one pixel wide
        near = [(-10, -10, 1.0), (0, -10, 1.0), (0, 10, 1.0), (-10, 10, 1.0)]
        far = [(0, -10, 0.0), (10, -10, 0.0), (10, 10, 0.0), (0, 10, 0.0)]
        mesh = _mesh_from_quads([(near, (0, 0, 0.45, 1)), (far, (0.55, 0, 1, 1))])
        cam = sv.camera_from_fov((0, 0, 3), (0, 0, 0), 64, 64, 60.0)
        g = sv.rasterize_gbuffer(mesh, cam)
        edges = sv.contour_map(g, 0.02, 20.0).data[:, :, 0] > 0
        cols = np.unique(np.nonzero(edges)[1])
        assert len(cols) == 1
        assert edges[:, cols[0]].all()
        oracle = contour_scan(
            g.depth.astype(np.float64), g.normal.astype(np.float64),
            g.coverage, 0.02, 20.0,
        )
        assert np.array_equal(edges, oracle)

    def test_silhouette_equals_coverage_transitions(self):
        sc = quad_scene(64)
        g = sv.rasterize_gbuffer(sc.mesh, sc.camera)
        edges = sv.contour_map(g).data[:, :, 0] > 0
        oracle = contour_scan(
            g.depth.astype(np.float64), g.normal.astype(np.float64),
            g.coverage, 0.02, 20.0,
        )
        assert np.array_equal(edges, oracle)
        # covered pixels adjacent to background, and only those
        from scipy.ndimage import binary_erosion
        ring = g.coverage & ~binary_erosion(g.coverage, np.array(
            [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool))
        assert np.array_equal(edges, ring)

    def test_normal_crease_detected(self):
        # two quads meeting at a right angle along x=0
        left = [(-2, -1, 0), (0, -1, 0), (0, 1, 0), (-2, 1, 0)]
        right = [(0, -1, 0), (0, -1, -2), (0, 1, -2), (0, 1, 0)]
        mesh = _mesh_from_quads([(left, (0, 0, 0.45, 1)), (right, (0.55, 0, 1, 1))])
        cam = sv.camera_from_fov((1.2, 0, 2.5), (-0.2, 0, -0.4), 64, 64, 60.0)
        g = sv.rasterize_gbuffer(mesh, cam)
        edges = sv.contour_map(g, 0.02, 20.0).data[:, :, 0] > 0
        oracle = contour_scan(
            g.depth.astype(np.float64), g.normal.astype(np.float64),
            g.coverage, 0.02, 20.0,
        )
        assert edges.any()
        assert np.array_equal(edges, oracle)

    def test_threshold_validation(self):
        sc = quad_scene(16)
        g = sv.rasterize_gbuffer(sc.mesh, sc.camera)
        with pytest.raises(ValueError):
            sv.contour_map(g, depth_rel_thresh=0.0)
        with pytest.raises(ValueError):
            sv.contour_map(g, normal_angle_thresh=-1.0)
