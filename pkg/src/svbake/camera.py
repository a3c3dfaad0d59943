"""Pinhole camera model and orbit viewpoint generation.

Convention: right-handed camera frame, the camera looks down -Z with +Y
up; pixel (0, 0) is the top-left corner and pixel centers sit at
half-integer coordinates. Depth is the view-space metric distance along
-Z, not an NDC value.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_from_camera: np.ndarray  # 4x4 rigid transform, float64

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")
        m = np.ascontiguousarray(self.world_from_camera, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"world_from_camera must be 4x4, got {m.shape}")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation block is not orthonormal within 1e-6")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("last row must be [0, 0, 0, 1]")
        object.__setattr__(self, "world_from_camera", m)

    @property
    def center(self) -> np.ndarray:
        return self.world_from_camera[:3, 3].copy()

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3].copy()

    @property
    def forward(self) -> np.ndarray:
        """Optical axis in world space (camera -Z)."""
        return -self.world_from_camera[:3, 2].copy()

    @property
    def camera_from_world(self) -> np.ndarray:
        r = self.world_from_camera[:3, :3]
        t = self.world_from_camera[:3, 3]
        out = np.eye(4)
        out[:3, :3] = r.T
        out[:3, 3] = -r.T @ t
        return out

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        r = self.world_from_camera[:3, :3]
        t = self.world_from_camera[:3, 3]
        return (p - t) @ r

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        r = self.world_from_camera[:3, :3]
        t = self.world_from_camera[:3, 3]
        return p @ r.T + t

    def project_camera(self, pts_cam: np.ndarray):
        """Camera-space points -> (pixel coords (..., 2), depth (...,)).

        Depth is -z; points with depth <= 0 are behind the camera and get
        non-finite pixel coordinates.
        """
        p = np.asarray(pts_cam, dtype=np.float64)
        depth = -p[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.cx + self.fx * p[..., 0] / depth
            v = self.cy - self.fy * p[..., 1] / depth
        bad = depth <= 0
        u = np.where(bad, np.nan, u)
        v = np.where(bad, np.nan, v)
        return np.stack([u, v], axis=-1), depth

    def project(self, points_world: np.ndarray):
        return self.project_camera(self.world_to_camera(points_world))

    def unproject(self, pixels: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Pixel coords plus view-space depth -> world points."""
        pix = np.asarray(pixels, dtype=np.float64)
        d = np.asarray(depth, dtype=np.float64)
        x = (pix[..., 0] - self.cx) / self.fx * d
        y = -(pix[..., 1] - self.cy) / self.fy * d
        z = -d
        return self.camera_to_world(np.stack([x, y, z], axis=-1))

    def pixel_centers(self) -> np.ndarray:
        """(H, W, 2) array of pixel-center coordinates."""
        u = np.arange(self.width, dtype=np.float64) + 0.5
        v = np.arange(self.height, dtype=np.float64) + 0.5
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "world_from_camera": [float(x) for x in self.world_from_camera.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        m = np.asarray(d["world_from_camera"], dtype=np.float64)
        if m.size != 16:
            raise ConfigError("world_from_camera must hold 16 row-major floats")
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            world_from_camera=m.reshape(4, 4),
        )


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """world_from_camera matrix for a camera at eye looking at target."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValueError("view direction parallel to up")
    right /= rn
    true_up = np.cross(right, fwd)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = true_up
    m[:3, 2] = -fwd  # camera looks down -Z
    m[:3, 3] = eye
    return m


def camera_from_fov(eye, target, width: int, height: int, fov_x_deg: float,
                    up=(0.0, 1.0, 0.0)) -> Camera:
    """Convenience constructor from a horizontal field of view."""
    fx = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2.0)
    return Camera(
        fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
        world_from_camera=look_at(eye, target, up),
    )


@dataclass(frozen=True)
class OrbitSpec:
    """Viewpoint orbit: view i rotates the base camera rigidly about the
    pivot by i*delta_lat in elevation and i*delta_lon in azimuth."""

    base: Camera
    count: int = 5
    delta_lat: float = 25.0
    delta_lon: float = 25.0
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        object.__setattr__(
            self, "pivot", np.asarray(self.pivot, dtype=np.float64).reshape(3)
        )


_WORLD_UP = np.array([0.0, 1.0, 0.0])


def orbit_cameras(spec: OrbitSpec) -> list[Camera]:
    """Rigid orbit of the base camera about the pivot.

    Azimuth rotates about the world up axis through the pivot; elevation
    rotates about the horizontal axis perpendicular to the pivot-to-camera
    direction. Positive elevation lifts the camera. Distance to the pivot
    is preserved exactly and view 0 equals the base camera.
    """
    base = spec.base
    radial = base.center - spec.pivot
    dist = np.linalg.norm(radial)
    if dist < 1e-9:
        raise ValueError("pivot coincides with the base camera center")
    east = np.cross(_WORLD_UP, radial / dist)
    en = np.linalg.norm(east)
    if en < 1e-9:
        raise ValueError("base camera is directly above or below the pivot")
    east /= en

    cams = []
    for i in range(spec.count):
        if i == 0:
            cams.append(base)
            continue
        rot = (
            Rotation.from_rotvec(np.radians(i * spec.delta_lon) * _WORLD_UP)
            * Rotation.from_rotvec(np.radians(i * spec.delta_lat) * east)
        ).as_matrix()
        m = np.eye(4)
        m[:3, :3] = rot @ base.rotation
        m[:3, 3] = rot @ radial + spec.pivot
        cams.append(
            Camera(
                fx=base.fx, fy=base.fy, cx=base.cx, cy=base.cy,
                width=base.width, height=base.height, world_from_camera=m,
            )
        )
    return cams


def save_cameras(cams, path) -> None:
    with open(os.fspath(path), "w") as f:
        json.dump([c.to_dict() for c in cams], f, indent=1)


def load_cameras(path) -> list[Camera]:
    with open(os.fspath(path)) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ConfigError("camera file must hold a JSON array")
    return [Camera.from_dict(d) for d in data]
