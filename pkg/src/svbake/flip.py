"""Perceptual image difference for alternating/flipping comparisons.

Implements the published LDR FLIP algorithm (Andersson et al., HPG 2020):
YCxCz opponent decomposition, contrast-sensitivity filtering, a
Hunt-adjusted HyAB color difference with error redistribution, and an
edge/point feature difference, combined into a per-pixel value in [0, 1].

The spatial filters here run as separable 1D passes, which is exact for
every kernel in the algorithm (each 2D kernel factorizes, including the
sign-normalized feature detectors) and keeps large frame sequences cheap.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .image import (
    ImageF,
    SCALAR,
    SRGB,
    linear_rgb_to_xyz,
    srgb_eotf,
    xyz_to_linear_rgb,
    xyz_to_ycxcz,
    ycxcz_to_xyz,
    D65_WHITE,
)

DEFAULT_PPD = 67.0

_QC = 0.7
_QF = 0.5
_PC = 0.4
_PT = 0.95
_FEATURE_WIDTH = 0.082

# contrast sensitivity as a sum of two Gaussians per opponent channel
_CSF = {
    "A": ((1.0, 0.0047), (0.0, 1e-5)),
    "RG": ((1.0, 0.0053), (0.0, 1e-5)),
    "BY": ((34.1, 0.04), (13.5, 0.025)),
}
_MAX_B = 0.04  # largest scale parameter, shared kernel radius


def _xyz_to_lab(xyz: np.ndarray) -> np.ndarray:
    n = np.asarray(xyz, dtype=np.float64) / D65_WHITE
    delta = 6.0 / 29.0
    limit = delta**3
    f = np.where(n > limit, np.cbrt(n), n / (3 * delta * delta) + 4.0 / 29.0)
    l = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([l, a, b], axis=-1)


def _hunt(lab: np.ndarray) -> np.ndarray:
    out = lab.copy()
    out[..., 1] *= 0.01 * lab[..., 0]
    out[..., 2] *= 0.01 * lab[..., 0]
    return out


def _hyab(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return np.abs(d[..., 0]) + np.linalg.norm(d[..., 1:3], axis=-1)


def _cmax() -> float:
    green = _hunt(_xyz_to_lab(linear_rgb_to_xyz(np.array([0.0, 1.0, 0.0]))))
    blue = _hunt(_xyz_to_lab(linear_rgb_to_xyz(np.array([0.0, 0.0, 1.0]))))
    return float(_hyab(green, blue) ** _QC)


_CMAX = _cmax()


def _redistribute(power_hyab: np.ndarray) -> np.ndarray:
    pccmax = _PC * _CMAX
    return np.where(
        power_hyab < pccmax,
        (_PT / pccmax) * power_hyab,
        _PT + ((power_hyab - pccmax) / (_CMAX - pccmax)) * (1.0 - _PT),
    )


def _csf_filter_channel(chan: np.ndarray, spec, radius: int, ppd: float) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64) / ppd
    out = np.zeros_like(chan)
    total = 0.0
    for a, b in spec:
        if a == 0.0:
            continue
        k1d = np.exp(-np.pi**2 * x**2 / b)
        scale = a * np.sqrt(np.pi / b)
        part = ndimage.correlate1d(chan, k1d, axis=0, mode="reflect")
        part = ndimage.correlate1d(part, k1d, axis=1, mode="reflect")
        out += scale * part
        total += scale * k1d.sum() ** 2
    return out / total


def _filtered_perceptual(ycc: np.ndarray, ppd: float) -> np.ndarray:
    """CSF-filter YCxCz, clamp back into the sRGB cube, Hunt-adjusted Lab."""
    radius = int(np.ceil(3 * np.sqrt(_MAX_B / (2 * np.pi**2)) * ppd))
    filt = np.stack(
        [
            _csf_filter_channel(ycc[..., 0], _CSF["A"], radius, ppd),
            _csf_filter_channel(ycc[..., 1], _CSF["RG"], radius, ppd),
            _csf_filter_channel(ycc[..., 2], _CSF["BY"], radius, ppd),
        ],
        axis=-1,
    )
    rgb = np.clip(xyz_to_linear_rgb(ycxcz_to_xyz(filt)), 0.0, 1.0)
    return _hunt(_xyz_to_lab(linear_rgb_to_xyz(rgb)))


def _feature_kernels(ppd: float):
    sd = 0.5 * _FEATURE_WIDTH * ppd
    radius = int(np.ceil(3 * sd))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2 * sd * sd))
    gn = g / g.sum()

    t_edge = -x * g
    edge = t_edge / t_edge[t_edge > 0].sum()

    t_point = (x**2 / (sd * sd) - 1.0) * g
    pos = t_point[t_point > 0].sum()
    neg = -t_point[t_point < 0].sum()
    point = np.where(t_point > 0, t_point / pos, t_point / neg)
    return edge, point, gn


def _feature_norm(img_y: np.ndarray, deriv_k: np.ndarray, smooth_k: np.ndarray) -> np.ndarray:
    fx = ndimage.correlate1d(img_y, deriv_k, axis=1, mode="reflect")
    fx = ndimage.correlate1d(fx, smooth_k, axis=0, mode="reflect")
    fy = ndimage.correlate1d(img_y, deriv_k, axis=0, mode="reflect")
    fy = ndimage.correlate1d(fy, smooth_k, axis=1, mode="reflect")
    return np.hypot(fx, fy)


def srgb_array_to_ycxcz(srgb: np.ndarray) -> np.ndarray:
    return xyz_to_ycxcz(linear_rgb_to_xyz(srgb_eotf(srgb)))


def flip_error(ref: ImageF, test: ImageF, ppd: float = DEFAULT_PPD) -> ImageF:
    """Per-pixel FLIP difference map in [0, 1]."""
    if ppd <= 0:
        raise ValueError("pixels-per-degree must be positive")
    if not ref.same_shape(test):
        raise ValueError("reference and test shapes differ")
    if ref.channels != 3:
        raise ValueError("FLIP needs 3-channel images")
    for img in (ref, test):
        if img.colorspace != SRGB:
            raise ValueError(f"FLIP expects SRGB images, got {img.colorspace}")

    ycc_r = srgb_array_to_ycxcz(ref.data.astype(np.float64))
    ycc_t = srgb_array_to_ycxcz(test.data.astype(np.float64))

    # color pipeline
    pre_r = _filtered_perceptual(ycc_r, ppd)
    pre_t = _filtered_perceptual(ycc_t, ppd)
    delta_c = _redistribute(np.power(_hyab(pre_r, pre_t), _QC))

    # feature pipeline on achromatic luminance
    edge_k, point_k, smooth_k = _feature_kernels(ppd)
    y_r = (ycc_r[..., 0] + 16.0) / 116.0
    y_t = (ycc_t[..., 0] + 16.0) / 116.0
    d_edge = np.abs(
        _feature_norm(y_r, edge_k, smooth_k) - _feature_norm(y_t, edge_k, smooth_k)
    )
    d_point = np.abs(
        _feature_norm(y_r, point_k, smooth_k) - _feature_norm(y_t, point_k, smooth_k)
    )
    delta_f = np.power((1.0 / np.sqrt(2.0)) * np.maximum(d_edge, d_point), _QF)

    err = np.power(delta_c, 1.0 - delta_f)
    return ImageF.from_array(err.astype(np.float32), SCALAR)


def flip_mean(ref: ImageF, test: ImageF, ppd: float = DEFAULT_PPD) -> float:
    return float(flip_error(ref, test, ppd).data.mean(dtype=np.float64))
