import numpy as np
import pytest

import svbake as sv
from svbake.errors import MeshParseError, MissingUVError
from svbake.mesh import compute_vertex_normals

QUAD_OBJ = """\
# unit quad, two triangles, uvs spanning the unit square
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
f 1/1/1 3/3/1 4/4/1
"""

QUAD_FACE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 1/1 2/2 3/3 4/4
"""


def write_obj(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestObjLoading:
    def test_unit_quad(self, tmp_path):
        mesh = sv.load_mesh(write_obj(tmp_path, QUAD_OBJ))
        assert mesh.num_triangles == 2
        assert mesh.num_vertices == 4
        assert mesh.uvs.min() == 0.0 and mesh.uvs.max() == 1.0
        assert np.allclose(mesh.normals, [0, 0, 1])

    def test_quad_face_fan_triangulated(self, tmp_path):
        mesh = sv.load_mesh(write_obj(tmp_path, QUAD_FACE_OBJ))
        assert mesh.num_triangles == 2
        # computed area-weighted normals replace the missing vn records
        assert np.allclose(np.abs(mesh.normals[:, 2]), 1.0, atol=1e-6)

    def test_missing_vt_raises(self, tmp_path):
        bad = QUAD_OBJ.replace("f 1/1/1 2/2/1 3/3/1", "f 1//1 2//1 3//1")
        with pytest.raises(MissingUVError):
            sv.load_mesh(write_obj(tmp_path, bad))

    def test_malformed_record(self, tmp_path):
        bad = QUAD_OBJ.replace("v 0 0 0", "v zero zero zero")
        with pytest.raises(MeshParseError):
            sv.load_mesh(write_obj(tmp_path, bad))

    def test_out_of_range_index(self, tmp_path):
        bad = QUAD_OBJ.replace("f 1/1/1 3/3/1 4/4/1", "f 1/1/1 3/3/1 9/4/1")
        with pytest.raises(MeshParseError):
            sv.load_mesh(write_obj(tmp_path, bad))

    def test_negative_indices(self, tmp_path):
        text = QUAD_FACE_OBJ.replace("f 1/1 2/2 3/3 4/4", "f -4/-4 -3/-3 -2/-2 -1/-1")
        mesh = sv.load_mesh(write_obj(tmp_path, text))
        assert mesh.num_triangles == 2

    def test_no_faces(self, tmp_path):
        with pytest.raises(MeshParseError):
            sv.load_mesh(write_obj(tmp_path, "v 0 0 0\nvt 0 0\n"))

    def test_save_load_roundtrip(self, tmp_path):
        mesh = sv.load_mesh(write_obj(tmp_path, QUAD_OBJ))
        out = tmp_path / "round.obj"
        sv.save_mesh(mesh, out)
        back = sv.load_mesh(out)
        assert np.allclose(back.positions, mesh.positions)
        assert np.allclose(back.uvs, mesh.uvs)
        assert np.array_equal(back.triangles, mesh.triangles)


class TestMeshValidation:
    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            sv.TriangleMesh(
                positions=np.zeros((3, 3)),
                normals=np.tile([0.0, 0.0, 1.0], (3, 1)),
                uvs=np.zeros((3, 2)),
                triangles=np.array([[0, 1, 5]]),
            )

    def test_non_unit_normals_rejected(self):
        with pytest.raises(ValueError):
            sv.TriangleMesh(
                positions=np.eye(3),
                normals=np.full((3, 3), 2.0),
                uvs=np.zeros((3, 2)),
                triangles=np.array([[0, 1, 2]]),
            )

    def test_area_weighted_normals(self):
        # two coplanar triangles of different area sharing all vertices:
        # the shared normal is their common plane normal
        pos = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        tris = np.array([[0, 1, 2], [1, 3, 2]])
        n = compute_vertex_normals(pos, tris)
        assert np.allclose(n, [0, 0, 1])
