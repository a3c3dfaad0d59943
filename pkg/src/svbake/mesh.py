"""Indexed triangle mesh and Wavefront OBJ I/O.

Every face must carry texture coordinates; atlas merging has no UV
unwrapper, so a parameterization is part of the input contract. Faces
with more than three vertices are fan-triangulated. Vertex normals are
taken from the file when present and otherwise computed area-weighted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import MeshParseError, MissingUVError


@dataclass
class TriangleMesh:
    positions: np.ndarray  # (V, 3) float64
    normals: np.ndarray    # (V, 3) float64, unit length
    uvs: np.ndarray        # (V, 2) float64 in [0, 1]^2
    triangles: np.ndarray  # (T, 3) int32

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        v = len(self.positions)
        if self.normals.shape != (v, 3) or self.uvs.shape != (v, 2):
            raise ValueError("positions, normals and uvs must share vertex count")
        if self.triangles.size and int(self.triangles.max()) >= v:
            raise ValueError("triangle index out of range")
        if v:
            lens = np.linalg.norm(self.normals, axis=1)
            if not np.all(np.abs(lens - 1.0) <= 1e-4):
                raise ValueError("normals must be unit length within 1e-4")

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def bbox(self):
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def bbox_centroid(self) -> np.ndarray:
        lo, hi = self.bbox()
        return 0.5 * (lo + hi)

    def triangle_corners(self, what: str = "positions") -> np.ndarray:
        """(T, 3, k) corner attributes for all triangles."""
        return getattr(self, what)[self.triangles]


def compute_vertex_normals(positions: np.ndarray, triangles: np.ndarray,
                           shared_position: np.ndarray | None = None) -> np.ndarray:
    """Area-weighted vertex normals.

    shared_position maps each vertex to a position-sharing group so that
    split vertices (one OBJ position referenced with several UVs) receive
    a smooth normal.
    """
    v = len(positions)
    groups = np.arange(v) if shared_position is None else shared_position
    n_groups = int(groups.max()) + 1 if v else 0
    acc = np.zeros((n_groups, 3))
    a = positions[triangles[:, 0]]
    b = positions[triangles[:, 1]]
    c = positions[triangles[:, 2]]
    face = np.cross(b - a, c - a)  # length = 2 * area, the weighting
    for k in range(3):
        np.add.at(acc, groups[triangles[:, k]], face)
    lens = np.linalg.norm(acc, axis=1, keepdims=True)
    acc = np.divide(acc, lens, out=np.zeros_like(acc), where=lens > 1e-20)
    out = acc[groups]
    degenerate = np.linalg.norm(out, axis=1) < 0.5
    out[degenerate] = (0.0, 0.0, 1.0)
    return out


def _parse_index(token: str, count: int, path, lineno: int) -> int:
    try:
        idx = int(token)
    except ValueError:
        raise MeshParseError(f"{path}:{lineno}: bad index {token!r}") from None
    if idx < 0:
        idx += count
    else:
        idx -= 1
    if not 0 <= idx < count:
        raise MeshParseError(f"{path}:{lineno}: index {token} out of range")
    return idx


def load_mesh(path) -> TriangleMesh:
    """Parse a Wavefront OBJ file (v/vt/vn/f records)."""
    path = os.fspath(path)
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    normals: list[list[float]] = []
    corners: list[tuple[int, int, int]] = []  # (pos, uv, normal or -1)
    face_sizes: list[int] = []

    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            try:
                if tag == "v":
                    positions.append([float(x) for x in args[:3]])
                elif tag == "vt":
                    uvs.append([float(x) for x in args[:2]])
                elif tag == "vn":
                    normals.append([float(x) for x in args[:3]])
                elif tag == "f":
                    if len(args) < 3:
                        raise MeshParseError(
                            f"{path}:{lineno}: face with fewer than 3 vertices"
                        )
                    for vert in args:
                        fields = vert.split("/")
                        vi = _parse_index(fields[0], len(positions), path, lineno)
                        if len(fields) < 2 or fields[1] == "":
                            raise MissingUVError(
                                f"{path}:{lineno}: face vertex {vert!r} has no "
                                "texture coordinate"
                            )
                        ti = _parse_index(fields[1], len(uvs), path, lineno)
                        ni = -1
                        if len(fields) > 2 and fields[2] != "":
                            ni = _parse_index(fields[2], len(normals), path, lineno)
                        corners.append((vi, ti, ni))
                    face_sizes.append(len(args))
            except (ValueError, IndexError):
                raise MeshParseError(f"{path}:{lineno}: malformed {tag!r} record") from None

    if not face_sizes:
        raise MeshParseError(f"{path}: no faces found")

    # Split vertices so each (position, uv, normal) combination is unique.
    unique: dict[tuple[int, int, int], int] = {}
    vert_pos, vert_uv, vert_nrm, vert_group = [], [], [], []
    remap = []
    for key in corners:
        if key not in unique:
            unique[key] = len(vert_pos)
            vert_pos.append(positions[key[0]])
            vert_uv.append(uvs[key[1]])
            vert_nrm.append(normals[key[2]] if key[2] >= 0 else None)
            vert_group.append(key[0])
        remap.append(unique[key])

    tris = []
    cursor = 0
    for size in face_sizes:
        idx = remap[cursor : cursor + size]
        for k in range(1, size - 1):
            tris.append((idx[0], idx[k], idx[k + 1]))
        cursor += size
    triangles = np.asarray(tris, dtype=np.int32)
    pos = np.asarray(vert_pos, dtype=np.float64)
    uv = np.asarray(vert_uv, dtype=np.float64)

    if any(n is None for n in vert_nrm):
        nrm = compute_vertex_normals(
            pos, triangles, np.asarray(vert_group, dtype=np.int64)
        )
    else:
        nrm = np.asarray(vert_nrm, dtype=np.float64)
        lens = np.linalg.norm(nrm, axis=1, keepdims=True)
        nrm = np.divide(nrm, lens, out=np.zeros_like(nrm), where=lens > 1e-20)

    return TriangleMesh(positions=pos, normals=nrm, uvs=uv, triangles=triangles)


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write the mesh as OBJ with v/vt/vn/f records."""
    with open(os.fspath(path), "w") as f:
        for p in mesh.positions:
            f.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for t in mesh.uvs:
            f.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for n in mesh.normals:
            f.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for tri in mesh.triangles:
            f.write(
                "f "
                + " ".join(f"{i + 1}/{i + 1}/{i + 1}" for i in tri)
                + "\n"
            )
