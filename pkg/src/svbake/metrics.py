"""Quantitative evaluation: PSNR, SSIM, scale-invariant normalization,
the perceptual-colorspace L1 loss, the weighted material loss combiner,
and the warped-frame flicker consistency metric for view sequences.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .flip import DEFAULT_PPD, flip_error, srgb_array_to_ycxcz
from .image import ImageF
from .warp import warp_view

PSNR_CAP_DB = 99.0

# denominators that map each opponent channel onto a unit scale:
# luminance spans -16..100, the chroma axes carry 500x and 200x gains
_YCC_RANGES = np.array([116.0, 500.0, 200.0])


def _check_same_shape(a: ImageF, b: ImageF) -> None:
    if not a.same_shape(b):
        raise ValueError(
            f"shape mismatch: ({a.height},{a.width},{a.channels}) vs "
            f"({b.height},{b.width},{b.channels})"
        )


def mean_abs_diff(a: ImageF, b: ImageF) -> float:
    _check_same_shape(a, b)
    return float(
        np.mean(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)))
    )


def psnr(a: ImageF, b: ImageF, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 99 dB to keep reports finite."""
    _check_same_shape(a, b)
    if peak <= 0:
        raise ValueError("peak must be positive")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse < 1e-12:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    k1, k2, dynamic_range = 0.01, 0.03, 1.0
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    sigma, radius = 1.5, 5  # 11x11 Gaussian window

    off = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(off**2) / (2 * sigma * sigma))
    g /= g.sum()

    def smooth(a):
        out = ndimage.correlate1d(a, g, axis=0, mode="reflect")
        return ndimage.correlate1d(out, g, axis=1, mode="reflect")

    mx = smooth(x)
    my = smooth(y)
    sxx = smooth(x * x) - mx * mx
    syy = smooth(y * y) - my * my
    sxy = smooth(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    ssim_map = num / den
    interior = ssim_map[radius:-radius, radius:-radius]
    return float(interior.mean())


def ssim(a: ImageF, b: ImageF) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5, K1/K2 0.01/0.03,
    unit dynamic range); channels are scored independently and averaged."""
    _check_same_shape(a, b)
    if a.width < 11 or a.height < 11:
        raise ValueError("image smaller than the 11x11 SSIM window")
    scores = [
        _ssim_plane(
            a.data[:, :, c].astype(np.float64), b.data[:, :, c].astype(np.float64)
        )
        for c in range(a.channels)
    ]
    return float(np.mean(scores))


def scale_invariant_normalize(pred: ImageF, gt: ImageF) -> ImageF:
    """Rescale each predicted channel by the ratio of ground-truth to
    predicted means, removing any global per-channel gain."""
    _check_same_shape(pred, gt)
    p = pred.data.astype(np.float64)
    g = gt.data.astype(np.float64)
    p_means = p.reshape(-1, pred.channels).mean(axis=0)
    g_means = g.reshape(-1, gt.channels).mean(axis=0)
    if np.any(np.abs(p_means) <= 1e-8):
        raise ValueError("predicted per-channel mean is near zero")
    return pred.with_data(p * (g_means / p_means))


def si_psnr(pred: ImageF, gt: ImageF, peak: float = 1.0) -> float:
    return psnr(scale_invariant_normalize(pred, gt), gt, peak)


def flip_l1(pred: ImageF, gt: ImageF) -> float:
    """Mean absolute difference in the YCxCz opponent space, each channel
    scaled to unit range and the three channels weighted equally."""
    _check_same_shape(pred, gt)
    if pred.channels != 3:
        raise ValueError("perceptual-colorspace L1 needs 3-channel images")
    ya = srgb_array_to_ycxcz(pred.data.astype(np.float64))
    yb = srgb_array_to_ycxcz(gt.data.astype(np.float64))
    return float(np.mean(np.abs(ya - yb) / _YCC_RANGES))


@dataclass(frozen=True)
class LossWeights:
    alpha_b: float = 1.0
    alpha_m: float = 2.0
    alpha_r: float = 0.5
    lambda_b: float = 0.5
    lambda_r: float = 0.5

    def __post_init__(self):
        for name in ("alpha_b", "alpha_m", "alpha_r", "lambda_b", "lambda_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def training_loss(pred, gt, w: LossWeights | None = None, perceptual=None):
    """Weighted material regression loss with per-term breakdown.

    pred and gt expose .basecolor, .roughness, .metallic maps. The
    basecolor term uses the perceptual-colorspace L1; roughness and
    metallic use plain L1. perceptual is an optional callable
    (pred_map, gt_map) -> float standing in for a learned perceptual term;
    it defaults to zero.

    Returns (total, breakdown dict).
    """
    if w is None:
        w = LossWeights()
    p = perceptual if perceptual is not None else (lambda a, b: 0.0)
    terms = {
        "basecolor_l1_flip": flip_l1(pred.basecolor, gt.basecolor),
        "basecolor_perceptual": float(p(pred.basecolor, gt.basecolor)),
        "metallic_l1": mean_abs_diff(pred.metallic, gt.metallic),
        "roughness_l1": mean_abs_diff(pred.roughness, gt.roughness),
        "roughness_perceptual": float(p(pred.roughness, gt.roughness)),
    }
    total = (
        w.alpha_b * (terms["basecolor_l1_flip"] + w.lambda_b * terms["basecolor_perceptual"])
        + w.alpha_m * terms["metallic_l1"]
        + w.alpha_r * (terms["roughness_l1"] + w.lambda_r * terms["roughness_perceptual"])
    )
    return float(total), terms


@dataclass
class FlickerReport:
    """Warped-frame consistency over a view sequence.

    per_pair[i] is the mean FLIP value between frame i warped into view
    i+1 and frame i+1, averaged over valid (non-disoccluded, covered)
    pixels; disoccluded pixels are excluded and accounted for in
    valid_fraction so either convention can be reconstructed.
    """

    per_pair: list[float] = field(default_factory=list)
    valid_fraction: list[float] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(np.sum(self.per_pair))

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_pair)) if self.per_pair else 0.0

    def to_dict(self) -> dict:
        return {
            "per_pair": self.per_pair,
            "total": self.total,
            "mean": self.mean,
            "valid_fraction": self.valid_fraction,
        }


def _flicker_pair(frames, cams, depths, i, eps_rel, ppd):
    nxt = frames[i + 1]
    res = warp_view(frames[i], cams[i], depths[i], cams[i + 1], depths[i + 1], eps_rel)
    # invalid pixels take the target frame so the non-local spatial
    # filtering inside the difference cannot leak hole content into the
    # valid region; only valid pixels enter the mean anyway
    composite = np.where(res.valid[:, :, None], res.image.data, nxt.data)
    err = flip_error(nxt, nxt.with_data(composite), ppd).data[:, :, 0]
    n_valid = int(np.count_nonzero(res.valid))
    n_covered = int(np.count_nonzero(res.covered))
    mean_err = float(err[res.valid].mean(dtype=np.float64)) if n_valid else 0.0
    return mean_err, (n_valid / n_covered if n_covered else 0.0)


def flicker_metric(frames, cams, depths, eps_rel: float = 0.01,
                   ppd: float = DEFAULT_PPD, threads: int = 1) -> FlickerReport:
    """Warp each frame into its successor view and accumulate FLIP there.

    Only successive frames are compared, which scores short-range
    flickering; exact depth maps and cameras replace optical flow. Pairs
    are independent, so a thread pool evaluates them concurrently with
    results identical to the serial run.
    """
    frames = list(frames)
    cams = list(cams)
    depths = [np.asarray(d, dtype=np.float64) for d in depths]
    if not len(frames) == len(cams) == len(depths):
        raise ValueError("frames, cameras and depths must have equal length")
    if len(frames) < 2:
        raise ValueError("need at least two frames")

    n_pairs = len(frames) - 1
    report = FlickerReport()
    if threads <= 1 or n_pairs < 2:
        results = [
            _flicker_pair(frames, cams, depths, i, eps_rel, ppd)
            for i in range(n_pairs)
        ]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda i: _flicker_pair(frames, cams, depths, i, eps_rel, ppd),
                    range(n_pairs),
                )
            )
    for mean_err, frac in results:
        report.per_pair.append(mean_err)
        report.valid_fraction.append(frac)
    return report
