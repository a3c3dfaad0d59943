"""Metallic-roughness microfacet BRDF.

Basecolor doubles as diffuse albedo and specular color: dielectrics
(metallic 0) reflect with F0 = 0.04 and keep a Lambertian diffuse lobe,
conductors (metallic 1) tint the specular lobe with basecolor and lose
the diffuse term. The specular lobe is GGX with alpha = roughness^2 and
the height-correlated Smith visibility term, which is symmetric in view
and light, so the BRDF satisfies reciprocity exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_F0_DIELECTRIC = 0.04


@dataclass
class PointLight:
    position: np.ndarray   # (3,) meters
    intensity: np.ndarray  # (3,) radiant intensity per channel, W/sr

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(3)
        if np.any(self.intensity < 0):
            raise ValueError("light intensity must be non-negative")


@dataclass
class BRDFSample:
    """Material parameters; fields broadcast, so arrays shade in bulk."""

    basecolor: np.ndarray  # (..., 3) linear RGB in [0, 1]
    roughness: np.ndarray  # (...,) in [0, 1]
    metallic: np.ndarray   # (...,) in [0, 1]


def shade_brdf(s: BRDFSample, n: np.ndarray, v: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Evaluate the BRDF for unit vectors n, v, l; zero below the horizon.

    Half-vector cosines are computed from (1 + v.l) / |v + l|, which is
    the same expression for both directions and keeps reciprocity bitwise.
    """
    n = np.asarray(n, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    base = np.asarray(s.basecolor, dtype=np.float64)
    rough = np.asarray(s.roughness, dtype=np.float64)[..., None]
    metal = np.asarray(s.metallic, dtype=np.float64)[..., None]

    nv = np.sum(n * v, axis=-1, keepdims=True)
    nl = np.sum(n * l, axis=-1, keepdims=True)
    lit = (nv > 0) & (nl > 0)

    h_raw = v + l
    h_len = np.linalg.norm(h_raw, axis=-1, keepdims=True)
    h_len = np.maximum(h_len, 1e-12)
    nh = np.clip(np.sum(n * h_raw, axis=-1, keepdims=True) / h_len, 0.0, 1.0)
    vh = np.clip((1.0 + np.sum(v * l, axis=-1, keepdims=True)) / h_len, 0.0, 1.0)

    alpha = rough * rough
    a2 = alpha * alpha
    denom = nh * nh * (a2 - 1.0) + 1.0
    d_ggx = a2 / (np.pi * denom * denom)

    nv_c = np.clip(nv, 1e-9, 1.0)
    nl_c = np.clip(nl, 1e-9, 1.0)
    # height-correlated Smith visibility, includes the 1/(4 nv nl) factor
    vis = 0.5 / (
        nl_c * np.sqrt(nv_c * nv_c * (1.0 - a2) + a2)
        + nv_c * np.sqrt(nl_c * nl_c * (1.0 - a2) + a2)
    )

    f0 = _F0_DIELECTRIC * (1.0 - metal) + base * metal
    fresnel = f0 + (1.0 - f0) * (1.0 - vh) ** 5

    diffuse = (1.0 - metal) * base / np.pi
    spec = d_ggx * vis * fresnel
    return np.where(lit, diffuse + spec, 0.0)
