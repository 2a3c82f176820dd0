"""Pixel-level carriers and shared raster math.

Images are float64 arrays of shape (H, W, 3) with intensities in [0, 1];
masks are bool arrays of shape (H, W).  Every module in the package uses
these two conventions, so the validators here are the single gate for them.
8-bit I/O quantizes with round-half-up, which keeps thresholds expressed in
[0, 1] independent of the storage format.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

PathLike = Union[str, "os.PathLike[str]"]


def ensure_image(arr: np.ndarray) -> np.ndarray:
    """Validate and return an (H, W, 3) float image in [0, 1]."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {a.shape[:2]}")
    if np.min(a) < 0.0 or np.max(a) > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return a


def ensure_mask(arr: np.ndarray) -> np.ndarray:
    """Validate and return an (H, W) boolean mask."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {a.shape}")
    if a.dtype != np.bool_:
        if not np.isin(a, (0, 1)).all():
            raise ValueError("mask values must be boolean or 0/1")
        a = a.astype(bool)
    return a


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"shape mismatch: {a.shape[:2]} vs {b.shape[:2]}")


def mask_area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to uint8 with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 255.0


def quantize(img: np.ndarray) -> np.ndarray:
    """Snap an image onto the 8-bit grid (idempotent)."""
    return from_uint8(to_uint8(img))


def save_image(path: PathLike, img: np.ndarray) -> None:
    PILImage.fromarray(to_uint8(ensure_image(img)), mode="RGB").save(path, format="PNG")


def load_image(path: PathLike) -> np.ndarray:
    with PILImage.open(path) as im:
        rgb = im.convert("RGB")
        return from_uint8(np.asarray(rgb))


def save_mask(path: PathLike, mask: np.ndarray) -> None:
    data = np.where(ensure_mask(mask), 255, 0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path, format="PNG")


def load_mask(path: PathLike) -> np.ndarray:
    """Load a grayscale PNG as a mask, thresholding at 128."""
    with PILImage.open(path) as im:
        gray = np.asarray(im.convert("L"))
    return gray >= 128


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, used wherever a single-channel view is needed."""
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def channel_abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel absolute difference, max over channels."""
    check_same_shape(a, b)
    return np.max(np.abs(a - b), axis=2)


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude, max over channels."""
    gy, gx = np.gradient(img, axis=(0, 1))
    return np.max(np.sqrt(gx * gx + gy * gy), axis=2)


def disk(radius: int) -> np.ndarray:
    """Disk-shaped structuring element of the given pixel radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius))


def open_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    return ndimage.binary_opening(mask, structure=disk(radius))


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop connected components (8-connectivity) smaller than min_area."""
    if min_area <= 1 or not mask.any():
        return mask.copy()
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return mask.copy()
    counts = np.bincount(labels.ravel())
    keep = counts >= min_area
    keep[0] = False
    return keep[labels]


def feather(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Soft alpha map from a binary mask.

    Gaussian support is truncated at 3 sigma, so alpha is exactly zero for
    pixels farther than round(3*sigma) from the mask.
    """
    if sigma <= 0:
        return mask.astype(np.float64)
    alpha = ndimage.gaussian_filter(mask.astype(np.float64), sigma=sigma, truncate=3.0)
    return np.clip(alpha, 0.0, 1.0)


def resample_image(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize to (height, width)."""
    pil = PILImage.fromarray(to_uint8(ensure_image(img)), mode="RGB")
    resized = pil.resize((width, height), resample=PILImage.Resampling.BILINEAR)
    return from_uint8(np.asarray(resized))
