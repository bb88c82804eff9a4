"""Raster container and shared radiometric operations.

A raster is a 2-D grid of float64 samples tagged with a semantic kind.
Intensity rasters are strictly positive; mask rasters hold only 0/1.
All operations are pure functions and never mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("intensity", "log-intensity", "response", "cost", "mask")


@dataclass
class Raster:
    """2-D image with a semantic tag.

    data is stored row-major as a float64 (height, width) array.
    """

    data: np.ndarray
    kind: str = "intensity"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"raster data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"raster dims must be >= 1, got {self.data.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown raster kind {self.kind!r}, expected one of {KINDS}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("raster contains non-finite values")
        if self.kind == "intensity" and not np.all(self.data > 0):
            bad = int(np.argmax(~(self.data > 0).ravel()))
            raise ValueError(f"intensity raster must be strictly positive "
                             f"(first offending flat index {bad})")
        if self.kind == "mask":
            if not np.all((self.data == 0) | (self.data == 1)):
                raise ValueError("mask raster must contain only 0 or 1")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def copy(self) -> "Raster":
        return Raster(self.data.copy(), self.kind)


def log_transform(img: Raster) -> Raster:
    """Natural log of an intensity raster (homomorphic transform)."""
    if not np.all(img.data > 0):
        bad = int(np.argmax(~(img.data > 0).ravel()))
        raise ValueError(f"log_transform requires strictly positive pixels "
                         f"(first offending flat index {bad})")
    return Raster(np.log(img.data), "log-intensity")


def exp_transform(img: Raster) -> Raster:
    """Inverse of log_transform: exponentiate back to intensity."""
    return Raster(np.exp(img.data), "intensity")


def _pad_to_even(a: np.ndarray) -> np.ndarray:
    ph = a.shape[0] % 2
    pw = a.shape[1] % 2
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw)), mode="edge")
    return a


def downsample2(img: Raster) -> Raster:
    """Halve both dims by disjoint 2x2 block means in the intensity domain.

    Log-intensity input is exponentiated before pooling and re-logged
    after, so the operation always averages physical intensities.
    Odd dims are edge-padded first; output dims are ceil(dims / 2).
    """
    if img.kind == "mask":
        raise ValueError("downsample2 is undefined for mask rasters")
    is_log = img.kind == "log-intensity"
    a = np.exp(img.data) if is_log else img.data
    a = _pad_to_even(a)
    h, w = a.shape
    pooled = a.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    if is_log:
        pooled = np.log(pooled)
    return Raster(pooled, img.kind)


def _linear_resample_axis(a: np.ndarray, target: int, axis: int) -> np.ndarray:
    """Linear interpolation along one axis using half-pixel sample centers."""
    n = a.shape[axis]
    if target == n:
        return a
    scale = n / target
    x = (np.arange(target) + 0.5) * scale - 0.5
    x = np.clip(x, 0.0, n - 1.0)
    lo = np.floor(x).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = x - lo
    a = np.moveaxis(a, axis, 0)
    out = a[lo] * (1.0 - frac)[:, None] + a[hi] * frac[:, None]
    return np.moveaxis(out, 0, axis)


def upsample2(img: Raster, target_w: int, target_h: int) -> Raster:
    """Bilinear upsample by ~2x to an explicit target size.

    Target dims must lie in {2*dim - 1, 2*dim} per axis.
    """
    h, w = img.shape
    if target_h not in (2 * h - 1, 2 * h) or target_w not in (2 * w - 1, 2 * w):
        raise ValueError(f"target dims ({target_h}, {target_w}) not within factor-2 "
                         f"range of ({h}, {w})")
    out = _linear_resample_axis(img.data, target_h, axis=0)
    out = _linear_resample_axis(out, target_w, axis=1)
    return Raster(out, img.kind)


def _region_values(img: Raster, region) -> np.ndarray:
    """Extract pixel values for a region given as a bool mask or (N, 2) index list."""
    region = np.asarray(region)
    if region.dtype == bool:
        if region.shape != img.shape:
            raise ValueError("boolean region mask must match raster shape")
        return img.data[region]
    region = np.atleast_2d(region)
    if region.ndim != 2 or region.shape[1] != 2:
        raise ValueError("region must be a bool mask or an (N, 2) array of (row, col)")
    return img.data[region[:, 0], region[:, 1]]


def enl_estimate(img: Raster, region) -> float:
    """Equivalent number of looks mean^2/var over a homogeneous region.

    Uses the unbiased sample variance (ddof=1).
    """
    vals = _region_values(img, region)
    if vals.size < 2:
        raise ValueError("ENL region must contain at least 2 pixels")
    var = float(np.var(vals, ddof=1))
    if var == 0.0:
        raise ValueError("ENL undefined: region has zero variance")
    mean = float(np.mean(vals))
    return mean * mean / var


def ratio_image(noisy: Raster, denoised: Raster) -> Raster:
    """Pixelwise noisy/denoised quotient; ideally structureless unit-mean speckle."""
    if noisy.shape != denoised.shape:
        raise ValueError(f"shape mismatch {noisy.shape} vs {denoised.shape}")
    if not np.all(denoised.data > 0):
        raise ValueError("ratio_image requires a strictly positive denominator")
    return Raster(noisy.data / denoised.data, "intensity")
