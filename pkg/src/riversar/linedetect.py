"""Dark-line detector based on a two-region gamma likelihood ratio.

Each pixel is tested against a bank of oriented templates: a central
strip flanked by two side strips separated by a gap. Under gamma speckle
the maximum-likelihood estimate of a region mean is the sample mean, and
the log likelihood ratio of "central strip darker than sides" against
"single homogeneous region" reduces to

    n log m - nc log mc - ns log ms        (mc < ms, else 0)

with nc, ns pixel counts, mc, ms sample means, n = nc + ns and m the
pooled mean. The number of looks enters only as a positive multiplier of
this statistic, so it is dropped: detection is look-agnostic and
invariant to global intensity scaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .raster import Raster

# Half-open membership guards keep strip rasterization stable: lattice
# perpendicular distances are tested against intervals whose bounds sit
# strictly between representable offsets.
_EDGE = 0.49


@dataclass(frozen=True)
class LineTemplate:
    """Oriented line template: central strip plus two flanking strips.

    orientation is the line direction in radians within [0, pi).
    direction optionally pins the exact (row, col) unit vector used for
    rasterization; template banks use it to keep 90-degree rotations of
    the lattice exact. Even strip widths cannot be centered on the pixel
    grid, so their central strip leans to the positive perpendicular
    side; banks compensate by including both parities.
    """

    orientation: float
    strip_width: int = 2
    window_length: int = 9
    side_width: int = 2
    gap: int = 1
    direction: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0 <= self.orientation < math.pi:
            raise ValueError(f"orientation must be in [0, pi), got {self.orientation}")
        if self.strip_width < 1 or self.side_width < 1 or self.gap < 1:
            raise ValueError("strip_width, side_width and gap must be >= 1")
        if self.window_length < 1 or self.window_length % 2 == 0:
            raise ValueError(f"window_length must be odd, got {self.window_length}")

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer (row, col) offsets of the central strip and pooled sides."""
        if self.direction is not None:
            ur, uc = self.direction
        else:
            ur, uc = math.cos(self.orientation), math.sin(self.orientation)
        nr, nc_ = -uc, ur
        half_len = (self.window_length - 1) / 2
        c_lo = -((self.strip_width - 1) // 2)
        c_hi = self.strip_width // 2
        reach = int(math.ceil(half_len + c_hi + self.gap + self.side_width)) + 1
        dr, dc = np.mgrid[-reach:reach + 1, -reach:reach + 1]
        along = dr * ur + dc * uc
        perp = dr * nr + dc * nc_
        in_len = np.abs(along) <= half_len + _EDGE
        central = in_len & (perp >= c_lo - _EDGE) & (perp <= c_hi + _EDGE)
        upper = in_len & (perp >= c_hi + self.gap + 1 - _EDGE) \
            & (perp <= c_hi + self.gap + self.side_width + _EDGE)
        lower = in_len & (perp <= c_lo - self.gap - 1 + _EDGE) \
            & (perp >= c_lo - self.gap - self.side_width - _EDGE)
        center_offs = np.column_stack([dr[central], dc[central]])
        side_offs = np.column_stack([dr[upper | lower], dc[upper | lower]])
        return center_offs, side_offs


def template_bank(n_orientations: int = 8, widths=(1, 2, 3), window_length: int = 9,
                  side_width: int = 2, gap: int = 1) -> list[LineTemplate]:
    """Standard bank: evenly spaced orientations for every strip width.

    Directions are derived pairwise by exact 90-degree rotation so the
    bank is closed under lattice rotations. Even widths additionally get
    the opposite-parity direction for each orientation, because their
    off-center strips are not symmetric under direction reversal.
    """
    if n_orientations < 1 or n_orientations % 2:
        raise ValueError("n_orientations must be a positive even number")
    half = n_orientations // 2
    base = [(math.cos(math.pi * k / n_orientations),
             math.sin(math.pi * k / n_orientations)) for k in range(half)]
    dirs = list(base)
    dirs += [(-uc, ur) for ur, uc in base]          # exact +90 degrees
    flipped = [(-ur, -uc) for ur, uc in dirs]       # exact +180 degrees
    bank = []
    for w in widths:
        for k, d in enumerate(dirs):
            theta = math.pi * k / n_orientations
            bank.append(LineTemplate(theta, strip_width=w, window_length=window_length,
                                     side_width=side_width, gap=gap, direction=d))
            if w % 2 == 0:
                bank.append(LineTemplate(theta, strip_width=w, window_length=window_length,
                                         side_width=side_width, gap=gap,
                                         direction=flipped[k]))
    return bank


def glrt_statistic(mc: float, nc: int, ms: float, ns: int) -> float:
    """Dark-line log likelihood ratio for one pixel (0 unless mc < ms)."""
    if mc <= 0 or ms <= 0:
        raise ValueError(f"region means must be positive, got mc={mc}, ms={ms}")
    if nc < 1 or ns < 1:
        raise ValueError(f"region counts must be >= 1, got nc={nc}, ns={ns}")
    if not mc < ms:
        return 0.0
    n = nc + ns
    m = (nc * mc + ns * ms) / n
    return n * math.log(m) - nc * math.log(mc) - ns * math.log(ms)


@dataclass
class ResponseMap:
    """Detector response D plus the per-pixel winning template."""

    resp: Raster
    best_index: np.ndarray
    templates: list

    def __post_init__(self):
        if self.resp.kind != "response":
            raise ValueError("ResponseMap raster must have kind 'response'")
        if np.any(self.resp.data < 0):
            raise ValueError("response must be >= 0 everywhere")
        if self.best_index.shape != self.resp.shape:
            raise ValueError("best_index shape must match response shape")

    @property
    def best_orientation(self) -> np.ndarray:
        """Winning template orientation in radians; NaN where D = 0."""
        orients = np.array([t.orientation for t in self.templates])
        out = np.where(self.best_index >= 0, orients[self.best_index], np.nan)
        return out

    @property
    def best_width(self) -> np.ndarray:
        """Winning template strip width; 0 where D = 0."""
        widths = np.array([t.strip_width for t in self.templates])
        return np.where(self.best_index >= 0, widths[self.best_index], 0)


def _sum_kernel(offs: np.ndarray) -> np.ndarray:
    er = int(np.max(np.abs(offs[:, 0])))
    ec = int(np.max(np.abs(offs[:, 1])))
    k = np.zeros((2 * er + 1, 2 * ec + 1))
    k[offs[:, 0] + er, offs[:, 1] + ec] = 1.0
    return k


def detect_lines(img: Raster, templates) -> ResponseMap:
    """Per-pixel max response over a template bank, with argmax metadata.

    Border pixels whose template window exits the raster get response 0.
    """
    if img.kind != "intensity":
        raise ValueError("detect_lines expects an intensity raster")
    templates = list(templates)
    if not templates:
        raise ValueError("template bank is empty")
    h, w = img.shape
    best = np.zeros((h, w))
    best_idx = np.full((h, w), -1, dtype=np.intp)
    for t_i, tpl in enumerate(templates):
        offs_c, offs_s = tpl.offsets()
        margin = int(max(np.max(np.abs(offs_c)), np.max(np.abs(offs_s))))
        if 2 * margin + 1 > h or 2 * margin + 1 > w:
            raise ValueError(f"template window ({2 * margin + 1} px) larger than "
                             f"image ({h}x{w})")
        nc, ns = len(offs_c), len(offs_s)
        mc = correlate(img.data, _sum_kernel(offs_c), mode="constant", cval=0.0) / nc
        ms = correlate(img.data, _sum_kernel(offs_s), mode="constant", cval=0.0) / ns
        n = nc + ns
        safe_mc = np.maximum(mc, 1e-300)
        safe_ms = np.maximum(ms, 1e-300)
        m = (nc * safe_mc + ns * safe_ms) / n
        resp = n * np.log(m) - nc * np.log(safe_mc) - ns * np.log(safe_ms)
        resp[~(mc < ms)] = 0.0
        resp[:margin, :] = 0.0
        resp[h - margin:, :] = 0.0
        resp[:, :margin] = 0.0
        resp[:, w - margin:] = 0.0
        np.maximum(resp, 0.0, out=resp)
        win = resp > best
        best[win] = resp[win]
        best_idx[win] = t_i
    return ResponseMap(Raster(best, "response"), best_idx, templates)
