"""Orthonormal 2-D Haar pyramid (analysis and synthesis).

All functions operate on the last two axes, so a ``(n, H, W)`` stack of
windows is transformed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import STAT_NAMES, stats_summary

SUBBANDS = ("LH", "HL", "HH")
_S = 1.0 / np.sqrt(2.0)


@dataclass
class HaarLevel:
    LH: np.ndarray  # low-pass along x, high-pass along y
    HL: np.ndarray  # high-pass along x, low-pass along y
    HH: np.ndarray
    shape: tuple[int, int]  # input size at this level, before padding


@dataclass
class HaarPyramid:
    levels: list[HaarLevel]  # finest first
    approx: np.ndarray

    def coefficients(self) -> list[np.ndarray]:
        out = [self.approx]
        for lv in self.levels:
            out += [lv.LH, lv.HL, lv.HH]
        return out


def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    if h % 2 == 0 and w % 2 == 0:
        return x
    pad = [(0, 0)] * (x.ndim - 2) + [(0, h % 2), (0, w % 2)]
    return np.pad(x, pad, mode="edge")


def haar_step(x: np.ndarray):
    """One analysis level: returns (approx, LH, HL, HH)."""
    x = _pad_even(np.asarray(x, dtype=np.float64))
    lo_x = (x[..., 0::2] + x[..., 1::2]) * _S
    hi_x = (x[..., 0::2] - x[..., 1::2]) * _S
    ll = (lo_x[..., 0::2, :] + lo_x[..., 1::2, :]) * _S
    lh = (lo_x[..., 0::2, :] - lo_x[..., 1::2, :]) * _S
    hl = (hi_x[..., 0::2, :] + hi_x[..., 1::2, :]) * _S
    hh = (hi_x[..., 0::2, :] - hi_x[..., 1::2, :]) * _S
    return ll, lh, hl, hh


def haar_step_inverse(ll, lh, hl, hh, shape=None) -> np.ndarray:
    lo_x = np.empty(ll.shape[:-2] + (2 * ll.shape[-2], ll.shape[-1]))
    hi_x = np.empty_like(lo_x)
    lo_x[..., 0::2, :] = (ll + lh) * _S
    lo_x[..., 1::2, :] = (ll - lh) * _S
    hi_x[..., 0::2, :] = (hl + hh) * _S
    hi_x[..., 1::2, :] = (hl - hh) * _S
    x = np.empty(lo_x.shape[:-1] + (2 * lo_x.shape[-1],))
    x[..., 0::2] = (lo_x + hi_x) * _S
    x[..., 1::2] = (lo_x - hi_x) * _S
    if shape is not None:
        x = x[..., : shape[0], : shape[1]]
    return x


def max_levels(h: int, w: int) -> int:
    n = 0
    while h >= 2 ** (n + 1) and w >= 2 ** (n + 1):
        n += 1
    return n


def haar_dwt2(img: np.ndarray, levels: int) -> HaarPyramid:
    """Multi-level Haar analysis, recursing on the approximation.

    Odd sizes are replicate-padded to even before each level.
    """
    x = np.asarray(img, dtype=np.float64)
    h, w = x.shape[-2:]
    if levels < 1 or h < 2 ** levels or w < 2 ** levels:
        raise ValueError(f"cannot take {levels} Haar levels of a {w}x{h} image")
    out = []
    for _ in range(levels):
        shape = x.shape[-2:]
        x, lh, hl, hh = haar_step(x)
        out.append(HaarLevel(lh, hl, hh, shape))
    return HaarPyramid(out, x)


def haar_idwt2(pyr: HaarPyramid) -> np.ndarray:
    x = pyr.approx
    for lv in reversed(pyr.levels):
        x = haar_step_inverse(x, lv.LH, lv.HL, lv.HH, lv.shape)
    return x


@dataclass(frozen=True)
class WaveletConfig:
    levels: int = 3

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"wavelet depth must be >= 1, got {self.levels}")


def wavelet_features_batch(windows: np.ndarray, levels: int) -> np.ndarray:
    """Statistics of every detail subband, level-major then LH, HL, HH."""
    pyr = haar_dwt2(windows, levels)
    n = windows.shape[0]
    blocks = []
    for lv in pyr.levels:
        for band in (lv.LH, lv.HL, lv.HH):
            blocks.append(stats_summary(band.reshape(n, -1)))
    return np.concatenate(blocks, axis=1)


def wavelet_names(levels: int) -> list[str]:
    return [f"W.l{lv}.{b}.{s}" for lv in range(1, levels + 1) for b in SUBBANDS for s in STAT_NAMES]
