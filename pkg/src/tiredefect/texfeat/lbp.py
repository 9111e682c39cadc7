"""Uniform local binary patterns on a circular, bilinearly sampled neighborhood.

Labels follow the non-rotation-invariant uniform scheme, which yields
``P * (P - 1) + 3`` distinct labels for ``P`` sampling points:

* 0 for the all-zero pattern,
* ``1 + (k - 1) * P + s`` for a single circular run of ``k`` ones starting at bit ``s``,
* ``P * (P - 1) + 1`` for the all-ones pattern,
* ``P * (P - 1) + 2`` shared by every non-uniform pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import STAT_NAMES, stats_summary

DEFAULT_RADII = (2, 8, 16)


@dataclass(frozen=True)
class LBPConfig:
    radius: int

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"LBP radius must be >= 1, got {self.radius}")

    @property
    def points(self) -> int:
        return self.radius * 8

    @property
    def n_bins(self) -> int:
        p = self.points
        return p * (p - 1) + 3


def n_bins(radius: int) -> int:
    return LBPConfig(radius).n_bins


def sample_offsets(radius: int, points: int) -> np.ndarray:
    """(dy, dx) offsets of the sampling circle; point 0 lies to the right, angles run counter-clockwise."""
    theta = 2 * np.pi * np.arange(points) / points
    # rounding removes sin/cos residue so on-grid points sample exact pixels
    dy = np.round(-radius * np.sin(theta), 10)
    dx = np.round(radius * np.cos(theta), 10)
    return np.stack([dy, dx], axis=1)


def _sample(img: np.ndarray, r: int, dy: float, dx: float, out_h: int, out_w: int) -> np.ndarray:
    y0 = int(np.floor(dy))
    x0 = int(np.floor(dx))
    fy = dy - y0
    fx = dx - x0
    ry, rx = r + y0, r + x0
    a = img[ry:ry + out_h, rx:rx + out_w]
    if fy == 0 and fx == 0:
        return a
    if fy == 0:
        b = img[ry:ry + out_h, rx + 1:rx + 1 + out_w]
        return (1 - fx) * a + fx * b
    c = img[ry + 1:ry + 1 + out_h, rx:rx + out_w]
    if fx == 0:
        return (1 - fy) * a + fy * c
    b = img[ry:ry + out_h, rx + 1:rx + 1 + out_w]
    d = img[ry + 1:ry + 1 + out_h, rx + 1:rx + 1 + out_w]
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)


def lbp_code_map(img: np.ndarray, cfg: LBPConfig | int) -> np.ndarray:
    """Uniform LBP label for every pixel at least ``radius`` away from the border.

    The returned raster has shape ``(H - 2r, W - 2r)``; entry ``[i, j]`` is the
    code of image pixel ``(i + r, j + r)``. A neighbor sets its bit when it is
    ``>=`` the center value (up to rounding of the interpolation).
    """
    if isinstance(cfg, int):
        cfg = LBPConfig(cfg)
    img = np.asarray(img, dtype=np.float64)
    r, p = cfg.radius, cfg.points
    h, w = img.shape
    if h <= 2 * r or w <= 2 * r:
        raise ValueError(f"image {w}x{h} too small for LBP radius {r}")
    out_h, out_w = h - 2 * r, w - 2 * r
    # interpolated neighbors that equal the center in exact arithmetic may land
    # a few ulps below it; this slack keeps such ties on the ">=" side
    center = img[r:h - r, r:w - r] - 1e-12 * np.abs(img).max()

    ones = np.zeros((out_h, out_w), dtype=np.int32)
    transitions = np.zeros((out_h, out_w), dtype=np.int32)
    start = np.zeros((out_h, out_w), dtype=np.int32)
    first = prev = None
    for i, (dy, dx) in enumerate(sample_offsets(r, p)):
        bit = _sample(img, r, dy, dx, out_h, out_w) >= center
        ones += bit
        if prev is None:
            first = bit
        else:
            transitions += bit != prev
            start[bit & ~prev] = i
        prev = bit
    transitions += first != prev
    start[first & ~prev] = 0

    codes = np.full((out_h, out_w), p * (p - 1) + 2, dtype=np.int64)
    uniform = transitions <= 2
    codes[uniform & (ones == 0)] = 0
    codes[uniform & (ones == p)] = p * (p - 1) + 1
    run = uniform & (ones > 0) & (ones < p)
    codes[run] = 1 + (ones[run] - 1) * p + start[run]
    return codes


def lbp_histogram(codes: np.ndarray, cfg: LBPConfig | int) -> np.ndarray:
    if isinstance(cfg, int):
        cfg = LBPConfig(cfg)
    counts = np.bincount(np.ravel(codes), minlength=cfg.n_bins).astype(np.float64)
    return counts / counts.sum()


def lbp_block(codes: np.ndarray, cfg: LBPConfig) -> np.ndarray:
    """Histogram followed by the statistical summary of one code raster."""
    flat = np.ravel(codes)
    return np.concatenate([lbp_histogram(flat, cfg), stats_summary(flat.astype(np.float64))])


def lbp_names(cfg: LBPConfig) -> list[str]:
    width = len(str(cfg.n_bins - 1))
    hist = [f"L.r{cfg.radius}.hist{b:0{width}d}" for b in range(cfg.n_bins)]
    return hist + [f"L.r{cfg.radius}.{s}" for s in STAT_NAMES]
