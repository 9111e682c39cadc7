"""Fourier magnitude statistics and radially averaged spectral descriptors."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft

from .stats import STAT_NAMES, stats_summary

SPECTRAL_NAMES = ("centroid", "bandwidth", "flatness", "rolloff")
DEFAULT_ROLLOFF = 0.85
# floor applied before the log in the geometric mean (the DC annulus is ~0 after mean removal)
FLATNESS_FLOOR = 1e-10


@lru_cache(maxsize=16)
def radius_index(h: int, w: int) -> np.ndarray:
    """Integer radius of each bin of an unshifted ``h x w`` DFT from the zero frequency."""
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    return np.rint(np.hypot(fy[:, None], fx[None, :])).astype(np.int64)


def magnitude_spectrum(windows: np.ndarray, centered: bool = True) -> np.ndarray:
    """|DFT| of each mean-subtracted window (zero frequency at the center if ``centered``)."""
    x = np.asarray(windows, dtype=np.float64)
    x = x - x.mean(axis=(-2, -1), keepdims=True)
    # a constant window must give an exactly zero spectrum, not rounding residue
    flat = np.ptp(x.reshape(x.shape[:-2] + (-1,)), axis=-1) == 0
    x[flat] = 0.0
    mag = np.abs(scipy.fft.fft2(x))
    return np.fft.fftshift(mag, axes=(-2, -1)) if centered else mag


def radial_profile(mag: np.ndarray, centered: bool = False):
    """Mean magnitude per integer-radius annulus. Returns (radii, profile).

    ``mag`` is a single spectrum or a ``(n, H, W)`` stack.
    """
    mag = np.asarray(mag, dtype=np.float64)
    h, w = mag.shape[-2:]
    if centered:
        mag = np.fft.ifftshift(mag, axes=(-2, -1))
    r = radius_index(h, w).ravel()
    counts = np.bincount(r)
    present = np.flatnonzero(counts)
    stack = mag.reshape(-1, h * w)
    n, nb = stack.shape[0], len(counts)
    idx = (r[None, :] + (np.arange(n) * nb)[:, None]).ravel()
    sums = np.bincount(idx, weights=stack.ravel(), minlength=n * nb).reshape(n, nb)
    # row reductions must see C order or numpy changes the summation order
    prof = np.ascontiguousarray(sums[:, present] / counts[present])
    radii = present.astype(np.float64)
    return radii, (prof if mag.ndim == 3 else prof[0])


def spectral_descriptors(radii: np.ndarray, profile: np.ndarray, rolloff: float = DEFAULT_ROLLOFF) -> np.ndarray:
    """Centroid, bandwidth, flatness and roll-off of 1-D profiles along the last axis.

    An all-zero profile yields four zeros.
    """
    radii = np.asarray(radii, dtype=np.float64)
    p = np.ascontiguousarray(np.atleast_2d(np.asarray(profile, dtype=np.float64)))
    total = p.sum(axis=-1)
    zero = total <= 0
    safe_total = np.where(zero, 1.0, total)
    centroid = (p * radii).sum(axis=-1) / safe_total
    bandwidth = np.sqrt((p * (radii[None, :] - centroid[:, None]) ** 2).sum(axis=-1) / safe_total)
    floored = np.maximum(p, FLATNESS_FLOOR)
    flatness = np.exp(np.log(floored).mean(axis=-1)) / floored.mean(axis=-1)
    cum = np.cumsum(p, axis=-1)
    idx = (cum < rolloff * total[:, None]).sum(axis=-1)
    roll = radii[np.minimum(idx, len(radii) - 1)]
    out = np.stack([centroid, bandwidth, flatness, roll], axis=-1)
    out[zero] = 0.0
    return out if np.ndim(profile) > 1 else out[0]


def fourier_features_batch(windows: np.ndarray, rolloff: float = DEFAULT_ROLLOFF) -> np.ndarray:
    mag = magnitude_spectrum(windows, centered=False)
    n = mag.shape[0]
    radii, prof = radial_profile(mag)
    return np.concatenate(
        [stats_summary(mag.reshape(n, -1)), spectral_descriptors(radii, prof, rolloff).reshape(n, 4)], axis=1
    )


def fourier_names() -> list[str]:
    return [f"F.mag.{s}" for s in STAT_NAMES] + [f"F.{s}" for s in SPECTRAL_NAMES]
