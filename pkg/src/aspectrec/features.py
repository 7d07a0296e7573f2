"""Per-image multi-orientation spatial descriptor.

One image is filtered with an oriented complex Gabor bank; each magnitude
image is encoded with three-patch ring codes (TPLBP); code images are
histogrammed over a block grid and the per-orientation histogram vectors are
concatenated. With the default configuration on a 128x128 chip the result
has 6 * 7*7 * 256 = 75264 entries.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .numkit import conv2d_same

DEFAULT_ORIENTATIONS = tuple(i * math.pi / 6 for i in (0, 1, 2, 3, 4, 5))


@dataclass(frozen=True)
class GaborParams:
    """Oriented complex Gabor kernel parameters.

    sigma defaults to 0.56 * wavelength (one-octave bandwidth convention)
    and kernel_size to 2*ceil(3*sigma) + 1 so the Gaussian envelope decays
    to ~1e-2 at the kernel border.
    """

    wavelength: float = 8.0
    theta: float = 0.0
    phase: float = 0.0
    aspect_ratio: float = 0.5
    sigma: float = None
    kernel_size: int = None

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", 0.56 * self.wavelength)
        if self.kernel_size is None:
            object.__setattr__(self, "kernel_size",
                               2 * math.ceil(3.0 * self.sigma) + 1)
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.aspect_ratio <= 0:
            raise ValueError("aspect_ratio must be positive")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 3")


@dataclass(frozen=True)
class TplbpParams:
    """Ring-patch code parameters.

    patch_count patches of side patch_size sit on a ring of radius radius
    around the central patch; alpha is the comparison offset along the ring
    and tau the distance-difference threshold. block_size is the side of the
    histogram grid blocks applied to the code image.
    """

    radius: int = 12
    patch_count: int = 8
    patch_size: int = 3
    alpha: int = 1
    tau: float = 0.01
    block_size: int = 20

    def __post_init__(self):
        if not 2 <= self.patch_count <= 24:
            raise ValueError("patch_count must be in [2, 24] "
                             "(2**patch_count histogram bins)")
        if not 0 < self.alpha < self.patch_count:
            raise ValueError("alpha must satisfy 0 < alpha < patch_count")
        if self.patch_size % 2 == 0 or self.patch_size < 1:
            raise ValueError("patch_size must be odd and >= 1")
        if self.radius < self.patch_size:
            raise ValueError("radius must be >= patch_size")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    @property
    def bins(self):
        return 1 << self.patch_count


@dataclass(frozen=True)
class FeatureConfig:
    """Full per-image descriptor configuration.

    normalize_magnitudes divides each magnitude image by its kernel's total
    absolute weight, so unit-intensity input bounds the responses to [0, 1]
    and the fixed tau threshold acts on a stable, image-independent scale.
    """

    gabor: GaborParams = field(default_factory=GaborParams)
    orientations: tuple = DEFAULT_ORIENTATIONS
    tplbp: TplbpParams = field(default_factory=TplbpParams)
    normalize_magnitudes: bool = True

    def __post_init__(self):
        if len(self.orientations) == 0:
            raise ValueError("at least one orientation is required")


def gabor_kernel(p):
    """Complex Gabor kernel on a centered pixel grid.

    With x the column offset and y the row offset from the kernel center,
    the rotated coordinates are x' = x cos(theta) + y sin(theta) and
    y' = -x sin(theta) + y cos(theta), and

        g(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2))
                  * exp(i (2 pi x' / wavelength + phase))
    """
    half = p.kernel_size // 2
    y, x = np.mgrid[-half: half + 1, -half: half + 1].astype(np.float64)
    xp = x * math.cos(p.theta) + y * math.sin(p.theta)
    yp = -x * math.sin(p.theta) + y * math.cos(p.theta)
    envelope = np.exp(-(xp ** 2 + (p.aspect_ratio ** 2) * yp ** 2)
                      / (2.0 * p.sigma ** 2))
    carrier = np.exp(1j * (2.0 * math.pi * xp / p.wavelength + p.phase))
    return envelope * carrier


def gabor_bank_magnitudes(image, base, orientations):
    """Magnitude responses of the image under one kernel per orientation."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a nonempty 2-D array")
    if len(orientations) == 0:
        raise ValueError("at least one orientation is required")
    out = []
    for theta in orientations:
        kernel = gabor_kernel(replace(base, theta=theta))
        out.append(np.abs(conv2d_same(image, kernel)))
    return out


def ring_offsets(p):
    """Rounded (dy, dx) offsets of the ring patch centers.

    Patch i sits at angle 2*pi*i/patch_count with dy = radius*sin(angle)
    (rows, downward) and dx = radius*cos(angle) (columns, rightward), both
    rounded half-up: floor(v + 0.5).
    """
    angles = 2.0 * math.pi * np.arange(p.patch_count) / p.patch_count
    dy = np.floor(p.radius * np.sin(angles) + 0.5).astype(np.int64)
    dx = np.floor(p.radius * np.cos(angles) + 0.5).astype(np.int64)
    return dy, dx


def _valid_rect(shape, dy, dx, w):
    """Largest rectangle of pixels whose central and ring patches all fit."""
    rows, cols = shape
    hw = w // 2
    r0 = max(hw, hw - int(dy.min()))
    r1 = min(rows - hw, rows - hw - int(dy.max()))
    c0 = max(hw, hw - int(dx.min()))
    c1 = min(cols - hw, cols - hw - int(dx.max()))
    return r0, r1, c0, c1


def tplbp_encode(image, p):
    """Integer ring-patch code image, same size as the input.

    Bit i of the code at pixel q is set when the Euclidean distance between
    the ring patch at offset i and the central patch exceeds the distance of
    the patch alpha steps further along the ring by at least tau. Pixels in
    the margin band, whose patches would leave the image, get code 0.
    """
    image = np.ascontiguousarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be a 2-D array")
    min_side = 2 * (p.radius + p.patch_size // 2) + 1
    if image.shape[0] < min_side or image.shape[1] < min_side:
        raise ValueError(
            f"image {image.shape[0]}x{image.shape[1]} too small for "
            f"radius {p.radius} and patch_size {p.patch_size}; "
            f"need at least {min_side}x{min_side}")
    dy, dx = ring_offsets(p)
    r0, r1, c0, c1 = _valid_rect(image.shape, dy, dx, p.patch_size)
    return _kernels.tplbp_codes(image, dy, dx, p.patch_size, p.alpha,
                                p.tau, r0, r1, c0, c1)


def block_histograms(codes, block_size, bins):
    """Concatenated L1-normalized histograms over a block grid.

    The code image is tiled with ceil(rows/block_size) x ceil(cols/block_size)
    blocks (trailing blocks partial); each block yields a bins-length count
    histogram normalized to sum 1, and the histograms are concatenated in
    row-major block order. An empty count vector stays all-zero.
    """
    codes = np.asarray(codes)
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    rows, cols = codes.shape
    n_br = -(-rows // block_size)
    n_bc = -(-cols // block_size)
    out = np.zeros(n_br * n_bc * bins)
    for bi in range(n_br):
        for bj in range(n_bc):
            block = codes[bi * block_size: (bi + 1) * block_size,
                          bj * block_size: (bj + 1) * block_size]
            hist = np.bincount(block.reshape(-1), minlength=bins).astype(np.float64)
            total = hist.sum()
            if total > 0:
                hist /= total
            start = (bi * n_bc + bj) * bins
            out[start: start + bins] = hist
    return out


def feature_dim(rows, cols, cfg):
    """Descriptor length for an image of the given size under cfg."""
    bs = cfg.tplbp.block_size
    blocks = (-(-rows // bs)) * (-(-cols // bs))
    return len(cfg.orientations) * blocks * cfg.tplbp.bins


def extract(image, cfg):
    """Full per-image descriptor: Gabor bank -> ring codes -> histograms.

    With normalize_magnitudes each magnitude image is divided by its
    kernel's gain (the sum of absolute kernel weights) before encoding, so
    the fixed tau threshold sees a stable [0, 1] response scale regardless
    of image content. The per-orientation histogram vectors are
    concatenated in orientation order.
    """
    image = np.asarray(image, dtype=np.float64)
    magnitudes = gabor_bank_magnitudes(image, cfg.gabor, cfg.orientations)
    parts = []
    for theta, mag in zip(cfg.orientations, magnitudes):
        if cfg.normalize_magnitudes:
            gain = np.abs(gabor_kernel(replace(cfg.gabor, theta=theta))).sum()
            mag = mag / gain
        codes = tplbp_encode(mag, cfg.tplbp)
        parts.append(block_histograms(codes, cfg.tplbp.block_size,
                                      cfg.tplbp.bins))
    return np.concatenate(parts)
