"""Image file I/O.

Two containers are supported:

  .exr   32-bit float scanline container, loss-free; used for HDR data,
         depth, normals and material atlases.
  .png   8-bit LDR with the sRGB transfer; round-trip error is at most
         1/510 per channel.

Tag inference on load: float container -> LinearRGB (Scalar when single
channel), LDR -> SRGB (Scalar when grayscale, since material maps are
stored as linear scalars).

Multi-map EXR bundles use dotted channel names: ``basecolor.{R,G,B}``,
``roughness.Y``, ``metallic.Y``, ``depth.Y``, ``normal.{X,Y,Z}``.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from . import exr
from .errors import CorruptImageError, RangeError, UnsupportedFormatError
from .image import ImageF, LINEAR_RGB, SCALAR, SRGB

_PLANE_ORDER = {1: ("Y",), 3: ("R", "G", "B"), 4: ("R", "G", "B", "A")}
_SUFFIX_RANK = {s: i for i, s in enumerate("RGBAXYZW")}


def load_image(path, colorspace: str | None = None) -> ImageF:
    """Load a PNG or EXR file; the colorspace tag is inferred unless given."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".exr":
        planes = exr.read_exr(path)
        names = set(planes)
        for count, order in ((4, ("R", "G", "B", "A")), (3, ("R", "G", "B")), (1, ("Y",))):
            if names == set(order):
                data = np.stack([planes[c] for c in order], axis=-1)
                default = SCALAR if count == 1 else LINEAR_RGB
                return ImageF.from_array(data, colorspace or default)
        raise UnsupportedFormatError(
            f"EXR channels {sorted(names)} are not a plain image; "
            "use load_bundle for multi-map files"
        )
    if ext == ".png":
        try:
            with PILImage.open(path) as im:
                im.load()
                if im.mode not in ("L", "RGB", "RGBA"):
                    im = im.convert("RGBA" if "A" in im.getbands() else "RGB")
                arr = np.asarray(im, dtype=np.float32) / 255.0
        except UnidentifiedImageError as e:
            raise CorruptImageError(f"cannot decode {path}: {e}") from None
        except OSError as e:
            raise CorruptImageError(f"cannot decode {path}: {e}") from None
        if arr.ndim == 2:
            arr = arr[:, :, None]
        default = SCALAR if arr.shape[2] == 1 else SRGB
        return ImageF.from_array(arr, colorspace or default)
    raise UnsupportedFormatError(f"unsupported image extension {ext!r}")


def save_image(img: ImageF, path) -> None:
    """Write an ImageF; EXR is bit-exact, PNG quantizes to 8 bits."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".exr":
        order = _PLANE_ORDER.get(img.channels)
        if order is None:
            raise UnsupportedFormatError(f"{img.channels}-channel EXR image")
        exr.write_exr(path, {c: img.data[:, :, i] for i, c in enumerate(order)})
        return
    if ext == ".png":
        if img.colorspace == LINEAR_RGB:
            raise RangeError(
                "PNG stores display-encoded data; convert with linear_to_srgb "
                "or tonemap_reinhard first"
            )
        lo, hi = float(img.data.min()), float(img.data.max())
        if lo < 0.0 or hi > 1.0:
            raise RangeError(f"PNG save needs data in [0,1], got [{lo}, {hi}]")
        q = np.round(img.data * 255.0).astype(np.uint8)
        if img.channels == 1:
            PILImage.fromarray(q[:, :, 0], mode="L").save(path)
        elif img.channels == 3:
            PILImage.fromarray(q, mode="RGB").save(path)
        elif img.channels == 4:
            PILImage.fromarray(q, mode="RGBA").save(path)
        else:
            raise UnsupportedFormatError(f"{img.channels}-channel PNG image")
        return
    raise UnsupportedFormatError(f"unsupported image extension {ext!r}")


def save_bundle(bundle: dict[str, ImageF], path) -> None:
    """Write several named maps into one EXR with dotted channel names."""
    channels: dict[str, np.ndarray] = {}
    for name, img in bundle.items():
        order = _PLANE_ORDER.get(img.channels)
        if order is None:
            raise UnsupportedFormatError(f"{img.channels}-channel map {name!r}")
        if name in ("normal", "position") and img.channels == 3:
            order = ("X", "Y", "Z")
        for i, c in enumerate(order):
            channels[f"{name}.{c}"] = img.data[:, :, i]
    exr.write_exr(path, channels)


def load_bundle(path) -> dict[str, ImageF]:
    """Inverse of save_bundle; groups dotted channels by prefix."""
    planes = exr.read_exr(path)
    groups: dict[str, dict[str, np.ndarray]] = {}
    for full, arr in planes.items():
        name, _, suffix = full.rpartition(".")
        if not name:
            name, suffix = full, "Y"
        groups.setdefault(name, {})[suffix] = arr
    out: dict[str, ImageF] = {}
    for name, chans in groups.items():
        order = sorted(chans, key=lambda s: (_SUFFIX_RANK.get(s, 99), s))
        data = np.stack([chans[c] for c in order], axis=-1)
        cs = SCALAR if data.shape[2] == 1 else LINEAR_RGB
        out[name] = ImageF.from_array(data, cs)
    return out


def save_mask(mask: np.ndarray, path) -> None:
    """Write a boolean mask as 8-bit PNG, 255 where the mask is set."""
    arr = (np.asarray(mask, dtype=bool)).astype(np.uint8) * 255
    PILImage.fromarray(arr, mode="L").save(os.fspath(path))


def load_mask(path) -> np.ndarray:
    """Read an 8-bit mask PNG; values >= 128 count as set."""
    with PILImage.open(os.fspath(path)) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def save_depth(depth: np.ndarray, path) -> None:
    """Write a depth map (float32, +inf where empty) as single-channel EXR."""
    exr.write_exr(os.fspath(path), {"Y": np.asarray(depth, dtype=np.float32)})


def load_depth(path) -> np.ndarray:
    planes = exr.read_exr(os.fspath(path))
    if set(planes) != {"Y"}:
        raise UnsupportedFormatError("depth EXR must hold a single Y channel")
    return planes["Y"]
