"""Pure per-image feature computations.

Grayscale conversion, mean-normalized brightness, perceptual hashes
(DCT/average/difference variants), Hamming distance, and a Canny edge
detector. Every function here is a pure function of pixel data and is safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt

import numpy as np
from scipy import ndimage

from .errors import ContractError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

HASH_ALGORITHMS = ("dct_phash", "average_hash", "difference_hash")
HASH_BIT_DEPTHS = (16, 64, 256)

CANNY_LOW_DEFAULT = 100.0
CANNY_HIGH_DEFAULT = 200.0
CANNY_SIGMA_DEFAULT = 1.4

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 4.0
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]) / 4.0


def to_gray(image: np.ndarray) -> np.ndarray:
    """Convert an RGB (or already-gray) uint8 image to 8-bit luma.

    Uses the 0.299/0.587/0.114 weights, rounded to nearest integer.
    """
    if image.size == 0:
        raise ContractError("empty image")
    if image.ndim == 2:
        return image.astype(np.uint8, copy=False)
    if image.ndim != 3 or image.shape[2] not in (3, 4):
        raise ContractError(f"expected HxW or HxWx3 image, got shape {image.shape}")
    rgb = image[..., :3].astype(np.float64)
    luma = rgb @ np.asarray(GRAY_WEIGHTS)
    return np.rint(luma).astype(np.uint8)


def brightness(gray: np.ndarray, max_value: int | None = None) -> float:
    """Mean normalized pixel value of a grayscale image, in [0, 1]."""
    if gray.ndim != 2 or gray.size == 0:
        raise ContractError("brightness expects a nonempty 2-D grayscale image")
    if max_value is None:
        max_value = int(np.iinfo(gray.dtype).max) if gray.dtype.kind == "u" else 255
    return float(gray.astype(np.float64).mean() / max_value)


def area_resize(gray: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact box-average resampling to (out_h, out_w), returned as float64.

    Each output cell averages the source pixels it covers, with fractional
    pixels weighted by overlap, so integer-factor downscales are plain block
    means and the operation composes exactly.
    """
    src = gray.astype(np.float64)
    return _box_weights(src.shape[0], out_h) @ src @ _box_weights(src.shape[1], out_w).T


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    edges = np.linspace(0.0, n_in, n_out + 1)
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for k in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            weights[i, k] = min(hi, k + 1.0) - max(lo, float(k))
    return weights * (n_out / n_in)


def _dct2(block: np.ndarray) -> np.ndarray:
    n = block.shape[0]
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    return basis @ block @ basis.T


@dataclass(frozen=True)
class PerceptualHash:
    """Fixed-length binary fingerprint of an image's low-frequency content."""

    bits: np.ndarray = field(repr=False)
    algorithm: str

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.size not in HASH_BIT_DEPTHS:
            raise ContractError(f"hash length must be one of {HASH_BIT_DEPTHS}, got {bits.size}")
        if self.algorithm not in HASH_ALGORITHMS:
            raise ContractError(f"unknown hash algorithm {self.algorithm!r}")
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, algorithm: str, bit_depth: int = 64) -> "PerceptualHash":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw)[:bit_depth]
        return cls(bits=bits, algorithm=algorithm)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PerceptualHash):
            return NotImplemented
        return self.algorithm == other.algorithm and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.algorithm, self.bits.tobytes()))


def phash(gray: np.ndarray, bit_depth: int = 64) -> PerceptualHash:
    """DCT perceptual hash.

    Box-average the image to 4*sqrt(n) per side, take the 2-D DCT, keep the
    top-left sqrt(n) x sqrt(n) coefficient block with the DC term swapped out
    for the next row-major coefficient, and threshold at the block median.
    Dropping DC makes the hash insensitive to global brightness offsets.
    """
    side = _hash_side(bit_depth)
    small = area_resize(_check_gray(gray), 4 * side, 4 * side)
    coeffs = _dct2(small)
    block = coeffs[:side, :side].flatten()
    block[0] = coeffs[0, side]
    # Snap float noise on exactly-zero coefficients so constant images hash
    # to all zeros under the strict > median rule.
    block[np.abs(block) < 1e-10 * max(abs(coeffs[0, 0]), 1.0)] = 0.0
    bits = (block > np.median(block)).astype(np.uint8)
    return PerceptualHash(bits=bits, algorithm="dct_phash")


def average_hash(gray: np.ndarray, bit_depth: int = 64) -> PerceptualHash:
    """Mean-threshold hash over a sqrt(n) x sqrt(n) box-averaged thumbnail."""
    side = _hash_side(bit_depth)
    small = area_resize(_check_gray(gray), side, side)
    bits = (small > small.mean()).astype(np.uint8).flatten()
    return PerceptualHash(bits=bits, algorithm="average_hash")


def difference_hash(gray: np.ndarray, bit_depth: int = 64) -> PerceptualHash:
    """Horizontal adjacent-pixel gradient hash on a sqrt(n) x (sqrt(n)+1) thumbnail."""
    side = _hash_side(bit_depth)
    small = area_resize(_check_gray(gray), side, side + 1)
    bits = (small[:, 1:] > small[:, :-1]).astype(np.uint8).flatten()
    return PerceptualHash(bits=bits, algorithm="difference_hash")


def compute_hash(gray: np.ndarray, algorithm: str = "dct_phash", bit_depth: int = 64) -> PerceptualHash:
    if algorithm == "dct_phash":
        return phash(gray, bit_depth)
    if algorithm == "average_hash":
        return average_hash(gray, bit_depth)
    if algorithm == "difference_hash":
        return difference_hash(gray, bit_depth)
    raise ContractError(f"unknown hash algorithm {algorithm!r}")


def hamming(a: PerceptualHash, b: PerceptualHash) -> int:
    """Number of differing bit positions between two equal-length hashes."""
    if a.n != b.n:
        raise ContractError(f"hash length mismatch: {a.n} vs {b.n}")
    if a.algorithm != b.algorithm:
        raise ContractError(f"hash algorithm mismatch: {a.algorithm} vs {b.algorithm}")
    return int(np.count_nonzero(a.bits != b.bits))


def _hash_side(bit_depth: int) -> int:
    if bit_depth not in HASH_BIT_DEPTHS:
        raise ContractError(f"bit depth must be one of {HASH_BIT_DEPTHS}, got {bit_depth}")
    return isqrt(bit_depth)


def _check_gray(gray: np.ndarray) -> np.ndarray:
    if gray.ndim != 2 or gray.size == 0:
        raise ContractError("expected a nonempty 2-D grayscale image")
    return gray


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge image plus the hysteresis thresholds that produced it."""

    edges: np.ndarray = field(repr=False)
    t_low: float
    t_high: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EdgeMap):
            return NotImplemented
        return (
            self.t_low == other.t_low
            and self.t_high == other.t_high
            and np.array_equal(self.edges, other.edges)
        )

    def __hash__(self) -> int:
        return hash((self.t_low, self.t_high, self.edges.tobytes()))

    def to_image(self) -> np.ndarray:
        return np.where(self.edges, 255, 0).astype(np.uint8)


def canny(
    gray: np.ndarray,
    t_low: float = CANNY_LOW_DEFAULT,
    t_high: float = CANNY_HIGH_DEFAULT,
    sigma: float = CANNY_SIGMA_DEFAULT,
) -> EdgeMap:
    """Canny edge detection: smooth, Sobel, thin, hysteresis-link.

    Magnitudes are on an 8-bit scale (a full-range step edge peaks at 255),
    so thresholds carry over from common 8-bit detector settings. sigma=0
    skips smoothing.
    """
    _check_gray(gray)
    if not 0 < t_low < t_high:
        raise ContractError(f"need 0 < t_low < t_high, got {t_low}, {t_high}")
    if sigma < 0:
        raise ContractError(f"sigma must be >= 0, got {sigma}")

    img = gray.astype(np.float64)
    if sigma > 0:
        kernel = _gaussian_kernel(sigma)
        img = ndimage.convolve1d(img, kernel, axis=0, mode="nearest")
        img = ndimage.convolve1d(img, kernel, axis=1, mode="nearest")

    gx = ndimage.convolve(img, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(img, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)

    thinned = _non_maximum_suppression(mag, gx, gy)
    strong = thinned >= t_high
    weak = thinned >= t_low
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    edges = weak & np.isin(labels, keep[keep > 0])
    return EdgeMap(edges=edges, t_low=float(t_low), t_high=float(t_high))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # Quantize the gradient direction into 4 bins; a pixel survives only if
    # strictly greater than the neighbor behind it and at least as large as
    # the one ahead, which keeps exactly one pixel of a tied plateau.
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1, mode="constant")

    def shifted(dr: int, dc: int) -> np.ndarray:
        h, w = mag.shape
        return padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((22.5 <= angle) & (angle < 67.5), (1, 1)),
        ((67.5 <= angle) & (angle < 112.5), (1, 0)),
        ((112.5 <= angle) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros(mag.shape, dtype=bool)
    for mask, (dr, dc) in bins:
        ahead = shifted(dr, dc)
        behind = shifted(-dr, -dc)
        keep |= mask & (mag > behind) & (mag >= ahead)
    return np.where(keep, mag, 0.0)
