"""Image container and color transforms.

Images are float32 arrays in (height, width, channels) layout with a
colorspace tag. Four tags exist:

  LINEAR_RGB  scene-linear radiometric values, unbounded above
  SRGB        display-encoded values in [0, 1]
  YCXCZ       the opponent space used by perceptual color differencing
              (Y in [-16, 100] for in-gamut input, Cx/Cz signed)
  SCALAR      non-color data: material parameters, depth, masks

Treat ImageF instances as immutable after construction; every transform
returns a new image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ColorspaceError, RangeError

LINEAR_RGB = "LinearRGB"
SRGB = "SRGB"
YCXCZ = "YCxCz"
SCALAR = "Scalar"

_COLORSPACES = (LINEAR_RGB, SRGB, YCXCZ, SCALAR)

# Exact rational sRGB (D65) -> CIE XYZ matrix; the row sums are the D65
# white point, which keeps white -> (100, 0, 0) exact in YCxCz.
_RGB_TO_XYZ = np.array(
    [
        [10135552 / 24577794, 8788810 / 24577794, 4435075 / 24577794],
        [2613072 / 12288897, 8788810 / 12288897, 887015 / 12288897],
        [1425312 / 73733382, 8788810 / 73733382, 70074185 / 73733382],
    ],
    dtype=np.float64,
)
D65_WHITE = _RGB_TO_XYZ.sum(axis=1)


@dataclass(frozen=True)
class ImageF:
    """Float image with explicit colorspace tag.

    data is float32, shape (height, width, channels), C-contiguous.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray
    colorspace: str

    def __post_init__(self):
        if self.colorspace not in _COLORSPACES:
            raise ColorspaceError(f"unknown colorspace tag {self.colorspace!r}")
        if not (1 <= self.channels <= 4):
            raise ValueError(f"channels must be 1..4, got {self.channels}")
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {arr.shape} does not match "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if self.colorspace == SRGB:
            lo = float(arr.min(initial=0.0))
            hi = float(arr.max(initial=0.0))
            if lo < -1e-5 or hi > 1.0 + 1e-5:
                raise RangeError(f"SRGB data outside [0,1]: min={lo}, max={hi}")
            if lo < 0.0 or hi > 1.0:
                arr = np.clip(arr, 0.0, 1.0)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr, colorspace: str) -> "ImageF":
        """Wrap an (H, W), (H, W, C) or broadcastable array."""
        a = np.asarray(arr, dtype=np.float32)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise ValueError(f"expected 2D or 3D array, got shape {a.shape}")
        h, w, c = a.shape
        return cls(width=w, height=h, channels=c, data=a, colorspace=colorspace)

    def same_shape(self, other: "ImageF") -> bool:
        return (self.width, self.height, self.channels) == (
            other.width,
            other.height,
            other.channels,
        )

    def with_data(self, data, colorspace: str | None = None) -> "ImageF":
        return ImageF.from_array(data, colorspace or self.colorspace)


def _require(img: ImageF, colorspace: str, channels: int | None = None) -> None:
    if img.colorspace != colorspace:
        raise ColorspaceError(
            f"expected {colorspace} image, got {img.colorspace}"
        )
    if channels is not None and img.channels != channels:
        raise ColorspaceError(
            f"expected {channels}-channel image, got {img.channels}"
        )


def srgb_eotf(x: np.ndarray) -> np.ndarray:
    """Display-encoded -> linear, piecewise sRGB curve."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def srgb_oetf(x: np.ndarray) -> np.ndarray:
    """Linear -> display-encoded, inverse of srgb_eotf."""
    x = np.asarray(x, dtype=np.float64)
    x = np.maximum(x, 0.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_to_linear(img: ImageF) -> ImageF:
    _require(img, SRGB)
    return img.with_data(srgb_eotf(img.data), LINEAR_RGB)


def linear_to_srgb(img: ImageF) -> ImageF:
    _require(img, LINEAR_RGB)
    return img.with_data(np.clip(srgb_oetf(img.data), 0.0, 1.0), SRGB)


def linear_rgb_to_xyz(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb, dtype=np.float64) @ _RGB_TO_XYZ.T


def xyz_to_linear_rgb(xyz: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(_RGB_TO_XYZ)
    return np.asarray(xyz, dtype=np.float64) @ inv.T


def xyz_to_ycxcz(xyz: np.ndarray) -> np.ndarray:
    n = np.asarray(xyz, dtype=np.float64) / D65_WHITE
    y = 116.0 * n[..., 1] - 16.0
    cx = 500.0 * (n[..., 0] - n[..., 1])
    cz = 200.0 * (n[..., 1] - n[..., 2])
    return np.stack([y, cx, cz], axis=-1)


def ycxcz_to_xyz(ycc: np.ndarray) -> np.ndarray:
    ycc = np.asarray(ycc, dtype=np.float64)
    y = (ycc[..., 0] + 16.0) / 116.0
    x = y + ycc[..., 1] / 500.0
    z = y - ycc[..., 2] / 200.0
    return np.stack([x, y, z], axis=-1) * D65_WHITE


def srgb_to_ycxcz(img: ImageF) -> ImageF:
    """sRGB -> linear -> XYZ (D65) -> YCxCz opponent space."""
    _require(img, SRGB, channels=3)
    ycc = xyz_to_ycxcz(linear_rgb_to_xyz(srgb_eotf(img.data)))
    return img.with_data(ycc, YCXCZ)


def tonemap_reinhard(img: ImageF, exposure: float = 1.0) -> ImageF:
    """x -> e*x / (1 + e*x) per channel, then sRGB encode."""
    _require(img, LINEAR_RGB)
    if exposure <= 0:
        raise ValueError(f"exposure must be > 0, got {exposure}")
    x = np.maximum(img.data.astype(np.float64), 0.0) * exposure
    return img.with_data(np.clip(srgb_oetf(x / (1.0 + x)), 0.0, 1.0), SRGB)


def _resample_axis_box(arr: np.ndarray, new_n: int, axis: int) -> np.ndarray:
    """Area-weighted (box filter) resampling along one axis."""
    old_n = arr.shape[axis]
    if old_n == new_n:
        return arr
    arr = np.moveaxis(arr, axis, 0).astype(np.float64)
    scale = old_n / new_n
    out = np.empty((new_n,) + arr.shape[1:], dtype=np.float64)
    for i in range(new_n):
        lo = i * scale
        hi = (i + 1) * scale
        i0 = int(np.floor(lo))
        i1 = min(int(np.ceil(hi)), old_n)
        idx = np.arange(i0, i1)
        # fractional coverage of each source cell by the destination cell
        w = np.minimum(idx + 1.0, hi) - np.maximum(idx, lo)
        w /= w.sum()
        out[i] = np.tensordot(w, arr[i0:i1], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def resize_box(img: ImageF, width: int, height: int) -> ImageF:
    """Resize with an area/box filter; identity when the size matches."""
    if width <= 0 or height <= 0:
        raise ValueError("target size must be positive")
    if width == img.width and height == img.height:
        return img
    out = _resample_axis_box(img.data, height, axis=0)
    out = _resample_axis_box(out, width, axis=1)
    if img.colorspace == SRGB:
        out = np.clip(out, 0.0, 1.0)
    return img.with_data(out)


def center_crop_square(img: ImageF) -> ImageF:
    """Crop the centered square of side min(width, height)."""
    s = min(img.width, img.height)
    x0 = (img.width - s) // 2
    y0 = (img.height - s) // 2
    return img.with_data(img.data[y0 : y0 + s, x0 : x0 + s, :])
