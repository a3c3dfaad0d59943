import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import svbake as sv
from svbake.camera import look_at


@pytest.fixture
def cam():
    return sv.camera_from_fov((0.3, -0.2, 2.5), (0, 0, 0), 128, 96, 55.0)


class TestCameraModel:
    def test_orthonormality_enforced(self):
        m = np.eye(4)
        m[0, 0] = 1.5
        with pytest.raises(ValueError):
            sv.Camera(fx=100, fy=100, cx=32, cy=32, width=64, height=64,
                      world_from_camera=m)

    def test_focal_positive(self):
        with pytest.raises(ValueError):
            sv.Camera(fx=0, fy=100, cx=32, cy=32, width=64, height=64,
                      world_from_camera=np.eye(4))

    def test_project_unproject_inverse(self, cam, rng):
        pix = np.column_stack(
            [rng.uniform(0, cam.width, 500), rng.uniform(0, cam.height, 500)]
        )
        depth = rng.uniform(0.2, 10.0, 500)
        world = cam.unproject(pix, depth)
        pix2, depth2 = cam.project(world)
        assert np.abs(pix2 - pix).max() < 1e-4
        assert np.abs(depth2 - depth).max() < 1e-9

    def test_behind_camera_no_projection(self, cam):
        behind = cam.center + cam.world_from_camera[:3, 2] * 2.0  # +Z is backward
        pix, depth = cam.project(behind[None, :])
        assert depth[0] < 0
        assert not np.isfinite(pix[0]).any()

    def test_axis_conventions(self):
        cam = sv.camera_from_fov((0, 0, 5), (0, 0, 0), 100, 100, 60.0)
        # +X world point lands right of center, +Y lands above (smaller v)
        pix, _ = cam.project(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        assert pix[0, 0] > cam.cx and abs(pix[0, 1] - cam.cy) < 1e-9
        assert pix[1, 1] < cam.cy and abs(pix[1, 0] - cam.cx) < 1e-9

    def test_json_roundtrip(self, cam, tmp_path):
        p = tmp_path / "cams.json"
        sv.save_cameras([cam], p)
        back = sv.load_cameras(p)[0]
        assert np.allclose(back.world_from_camera, cam.world_from_camera)
        assert (back.fx, back.fy, back.width, back.height) == (
            cam.fx, cam.fy, cam.width, cam.height,
        )

    def test_look_at_degenerate(self):
        with pytest.raises(ValueError):
            look_at((0, 0, 0), (0, 0, 0))
        with pytest.raises(ValueError):
            look_at((0, 0, 0), (0, 1, 0))  # parallel to up


class TestOrbit:
    def test_count_one_is_base(self, cam):
        spec = sv.OrbitSpec(base=cam, count=1, pivot=(0, 0, 0))
        cams = sv.orbit_cameras(spec)
        assert len(cams) == 1 and cams[0] is cam

    def test_view_zero_is_base(self, cam):
        cams = sv.orbit_cameras(sv.OrbitSpec(base=cam, count=5, pivot=(0, 0, 0)))
        assert cams[0] is cam

    def test_pivot_distance_invariant(self, cam):
        pivot = np.array([0.1, -0.3, 0.2])
        cams = sv.orbit_cameras(
            sv.OrbitSpec(base=cam, count=5, delta_lat=25, delta_lon=25, pivot=pivot)
        )
        d0 = np.linalg.norm(cam.center - pivot)
        for c in cams:
            assert abs(np.linalg.norm(c.center - pivot) - d0) <= 1e-6 * d0

    def test_consecutive_axis_angles_match_composition(self, cam):
        # closed form: view i applies R_up(i*lon) o R_east(i*lat) to the rig
        pivot = np.zeros(3)
        spec = sv.OrbitSpec(base=cam, count=5, delta_lat=25, delta_lon=25, pivot=pivot)
        cams = sv.orbit_cameras(spec)
        up = np.array([0.0, 1.0, 0.0])
        radial = cam.center - pivot
        east = np.cross(up, radial / np.linalg.norm(radial))
        east /= np.linalg.norm(east)
        for i, c in enumerate(cams):
            rot = (
                Rotation.from_rotvec(np.radians(25 * i) * up)
                * Rotation.from_rotvec(np.radians(25 * i) * east)
            ).as_matrix()
            assert np.allclose(c.forward, rot @ cam.forward, atol=1e-9)
            assert np.allclose(c.center, rot @ radial + pivot, atol=1e-9)
        # consecutive optical axes separate by the composed step angle
        step = (
            Rotation.from_rotvec(np.radians(25) * up)
            * Rotation.from_rotvec(np.radians(25) * east)
        )
        step_angle = np.degrees(np.linalg.norm(step.as_rotvec()))
        axis_angle = np.degrees(
            np.arccos(np.clip(np.dot(cams[0].forward, cams[1].forward), -1, 1))
        )
        assert abs(step_angle - 35.21) < 0.1
        assert axis_angle <= step_angle + 1e-9

    def test_azimuth_full_circle_closes(self, cam):
        cams = sv.orbit_cameras(
            sv.OrbitSpec(base=cam, count=5, delta_lat=0, delta_lon=90, pivot=(0, 0, 0))
        )
        assert np.abs(cams[4].world_from_camera - cam.world_from_camera).max() < 1e-5

    def test_degenerate_pivot(self, cam):
        with pytest.raises(ValueError):
            sv.orbit_cameras(sv.OrbitSpec(base=cam, count=3, pivot=cam.center))

    def test_pole_degenerate(self):
        m = np.eye(4)
        m[1, 3] = 5.0  # directly above the pivot, east axis undefined
        top = sv.Camera(fx=64, fy=64, cx=32, cy=32, width=64, height=64,
                        world_from_camera=m)
        with pytest.raises(ValueError):
            sv.orbit_cameras(sv.OrbitSpec(base=top, count=3, pivot=(0, 0, 0)))

    def test_count_validation(self, cam):
        with pytest.raises(ValueError):
            sv.OrbitSpec(base=cam, count=0, pivot=(0, 0, 0))
