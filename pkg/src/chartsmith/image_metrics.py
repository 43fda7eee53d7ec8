"""Pixel-level comparison primitives: luma conversion, SSIM, MS-SSIM, and
region-of-interest segmentation.

SSIM is computed on Rec.601 luma normalized to [0, 1], with an 11x11 Gaussian
window (sigma 1.5) and the standard stabilizers C1=(k1*L)^2, C2=(k2*L)^2.
Local statistics use Gaussian-weighted means over every position where the
window fits entirely inside the image (no padding), and the score is the mean
of that local map.

MS-SSIM uses up to five scales reached by exact 2x2 mean-pool downsampling.
A deeper scale is only used while both dimensions are even and the halved
image still covers the window, so the scale count can drop below five; the
standard exponents are renormalized over the scales actually used. The
contrast-structure term contributes at every scale, the luminance term only
at the coarsest, and negative per-scale terms clamp to zero before
exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .bundle import ProgramLayout
from .errors import DimensionMismatch, TooSmall
from .images import ChartImage

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MIN_ROI_SIDE = 8


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    window_size: int = 11
    sigma: float = 1.5
    dynamic_range: float = 1.0  # images normalized to [0,1] luma

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.window_size % 2 != 1 or self.window_size < 3:
            raise ValueError("window size must be odd and >= 3")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """2D Gaussian kernel normalized to sum to 1."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def to_luma(image: ChartImage) -> np.ndarray:
    """Rec.601 luma in [0, 1] as float64."""
    px = image.pixels.astype(np.float64) / 255.0
    return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


def _check_pair(a: np.ndarray, b: np.ndarray, window_size: int) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < window_size:
        raise TooSmall(f"min side {min(a.shape)} < window {window_size}")


def _local_maps(a: np.ndarray, b: np.ndarray, p: SsimParams) -> tuple[np.ndarray, np.ndarray]:
    """(luminance, contrast-structure) local maps over valid window positions."""
    w = gaussian_window(p.window_size, p.sigma)
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2
    mu_a = fftconvolve(a, w, mode="valid")
    mu_b = fftconvolve(b, w, mode="valid")
    var_a = fftconvolve(a * a, w, mode="valid") - mu_a * mu_a
    var_b = fftconvolve(b * b, w, mode="valid") - mu_b * mu_b
    cov = fftconvolve(a * b, w, mode="valid") - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def ssim_gray(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Single-scale SSIM of two [0,1] gray planes; symmetric, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b, p.window_size)
    lum, cs = _local_maps(a, b, p)
    return float(np.mean(lum * cs))


def ssim(a: ChartImage, b: ChartImage, p: SsimParams = SsimParams()) -> float:
    return ssim_gray(to_luma(a), to_luma(b), p)


def _mean_pool(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    return x.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def msssim_depth(height: int, width: int, p: SsimParams = SsimParams()) -> int:
    """Number of scales usable on an image of the given size (1..5)."""
    if min(height, width) < p.window_size:
        raise TooSmall(f"min side {min(height, width)} < window {p.window_size}")
    depth, h, w = 1, height, width
    while (depth < len(MSSSIM_WEIGHTS) and h % 2 == 0 and w % 2 == 0
           and h // 2 >= p.window_size and w // 2 >= p.window_size):
        h, w, depth = h // 2, w // 2, depth + 1
    return depth


def ms_ssim_details(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()
                    ) -> tuple[float, list[float], list[float]]:
    """(score, per-scale cs means with luminance folded into the last,
    renormalized weights)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b, p.window_size)
    depth = msssim_depth(a.shape[0], a.shape[1], p)
    raw = np.asarray(MSSSIM_WEIGHTS[:depth], dtype=np.float64)
    weights = raw / raw.sum()
    terms: list[float] = []
    score = 1.0
    for level in range(depth):
        lum, cs = _local_maps(a, b, p)
        cs_mean = max(0.0, float(np.mean(cs)))
        if level == depth - 1:
            lum_mean = max(0.0, float(np.mean(lum)))
            term = lum_mean * cs_mean
        else:
            term = cs_mean
        terms.append(term)
        score *= term ** weights[level]
        if level < depth - 1:
            a, b = _mean_pool(a), _mean_pool(b)
    return float(score), terms, [float(w) for w in weights]


def ms_ssim_gray(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> float:
    score, _, _ = ms_ssim_details(a, b, p)
    return score


def ms_ssim(a: ChartImage, b: ChartImage, p: SsimParams = SsimParams()) -> float:
    return ms_ssim_gray(to_luma(a), to_luma(b), p)


# --- region segmentation ------------------------------------------------------

@dataclass(frozen=True)
class Roi:
    id: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < MIN_ROI_SIDE or self.h < MIN_ROI_SIDE:
            raise ValueError(f"roi {self.id} smaller than {MIN_ROI_SIDE}px: {self.w}x{self.h}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def intersects(self, other: "Roi") -> bool:
        return not (self.x + self.w <= other.x or other.x + other.w <= self.x
                    or self.y + self.h <= other.y or other.y + other.h <= self.y)


def crop(image: ChartImage, roi: Roi) -> ChartImage:
    ys, xs = roi.slices
    return ChartImage(image.pixels[ys, xs])


TITLE_BAND_FRACTION = 0.12
LEGEND_BOX_FRACTION = 0.20

_CORNERS = {
    "upper_right": (1.0, 0.0), "upper_left": (0.0, 0.0),
    "lower_right": (1.0, 1.0), "lower_left": (0.0, 1.0),
    "right": (1.0, 0.5), "left": (0.0, 0.5),
    "upper_center": (0.5, 0.0), "lower_center": (0.5, 1.0),
    "center": (0.5, 0.5), "best": (1.0, 0.0),
}


def semantic_rois(image_w: int, image_h: int, legend_position: str = "best") -> list[Roi]:
    """Title band (top 12%), legend box (20% x 20% corner), and plot area."""
    title_h = max(MIN_ROI_SIDE, round(image_h * TITLE_BAND_FRACTION))
    lw = max(MIN_ROI_SIDE, round(image_w * LEGEND_BOX_FRACTION))
    lh = max(MIN_ROI_SIDE, round(image_h * LEGEND_BOX_FRACTION))
    fx, fy = _CORNERS.get(legend_position, _CORNERS["best"])
    lx = round((image_w - lw) * fx)
    ly = round((image_h - lh) * fy)
    plot_h = image_h - title_h
    return [
        Roi("title", 0, 0, image_w, title_h),
        Roi("legend", lx, ly, lw, lh),
        Roi("plot_area", 0, title_h, image_w, max(MIN_ROI_SIDE, plot_h)),
    ]


def segment_rois(image: ChartImage, grid: tuple[int, int],
                 layout: ProgramLayout | None = None,
                 legend_position: str = "best") -> list[Roi]:
    """Uniform grid tiling that covers the image exactly; the last row and
    column absorb remainders. Layout metadata appends three semantic regions.
    """
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError("grid must be at least 1x1")
    base_h = image.height // rows
    base_w = image.width // cols
    if base_h < MIN_ROI_SIDE or base_w < MIN_ROI_SIDE:
        raise TooSmall(f"grid {rows}x{cols} over {image.width}x{image.height} "
                       f"yields cells below {MIN_ROI_SIDE}px")
    rois: list[Roi] = []
    for i in range(rows):
        y = i * base_h
        h = base_h if i < rows - 1 else image.height - y
        for j in range(cols):
            x = j * base_w
            w = base_w if j < cols - 1 else image.width - x
            rois.append(Roi(f"r{i}c{j}", x, y, w, h))
    if layout is not None:
        rois.extend(semantic_rois(image.width, image.height, legend_position))
    return rois
