"""Augmented input channels: slice-based background removal and a detail-only
wavelet reconstruction, stacked with the image into 3-channel PNGs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import as_gray, load_image, normalize_luminance, save_rgb
from .texfeat import haar_dwt2, haar_idwt2
from .texfeat.wavelet import HaarLevel, HaarPyramid

IMAGE_SUFFIXES = (".png", ".pgm")
# residual maxima below this are rounding noise, not structure
_RESIDUAL_TOL = 1e-9 * 255


@dataclass(frozen=True)
class AugmentConfig:
    slice_heights: tuple[int, ...] = (8, 16, 32)
    k: int = 5
    exclusion: int = 1
    exponent: float = 2.0
    wavelet_levels: int = 3
    detail_decay: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "slice_heights", tuple(int(h) for h in self.slice_heights))
        if not self.slice_heights or min(self.slice_heights) < 1:
            raise ValueError("slice_heights must be a non-empty list of positive heights")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.exclusion < 0:
            raise ValueError("exclusion must be >= 0")
        if not self.exponent > 0:
            raise ValueError(f"exponent must be > 0, got {self.exponent}")
        if self.wavelet_levels < 1:
            raise ValueError("wavelet_levels must be >= 1")

    def to_dict(self) -> dict:
        return {
            "slice_heights": list(self.slice_heights), "k": self.k, "exclusion": self.exclusion,
            "exponent": self.exponent, "wavelet_levels": self.wavelet_levels, "detail_decay": self.detail_decay,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AugmentConfig:
        return cls(**d)


def band_starts(height: int, band: int) -> list[int]:
    """Top rows of consecutive bands; a leftover strip gets one extra bottom-aligned band."""
    starts = list(range(0, height - band + 1, band))
    if starts[-1] + band < height:
        starts.append(height - band)
    return starts


def _nearest_bands(bands: np.ndarray, k: int, exclusion: int) -> list[np.ndarray]:
    """Indices of the ``k`` lowest-MSE bands for each band, skipping ``|i - j| <= exclusion``."""
    n = len(bands)
    sq = (bands ** 2).sum(axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (bands @ bands.T), 0.0) / bands.shape[1]
    idx = np.arange(n)
    dist[np.abs(idx[:, None] - idx[None, :]) <= exclusion] = np.inf
    out = []
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        valid = order[np.isfinite(dist[i, order])]
        if valid.size == 0:
            raise ValueError("no band lies outside the exclusion zone; image too short")
        out.append(valid[:k])
    return out


def background_residual(img: np.ndarray, band: int, k: int = 5, exclusion: int = 1) -> np.ndarray:
    """Each band minus the mean of its ``k`` most similar bands, clipped at 0."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    starts = band_starts(h, band)
    bands = np.stack([img[s:s + band].ravel() for s in starts])
    out = np.zeros_like(img)
    for i, nb in enumerate(_nearest_bands(bands, k, exclusion)):
        res = bands[i] - bands[nb].mean(axis=0)
        s = starts[i]
        out[s:s + band] = np.maximum(res, 0.0).reshape(band, w)
    return out


def remove_background(img: np.ndarray, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Suppress the repeating horizontal texture, keeping what differs from its look-alike bands.

    For every slice height the rectified residual is scaled to [0, 1],
    raised to ``cfg.exponent`` and mapped to [0, 255]; the output is the
    per-pixel mean over slice heights.
    """
    cfg = cfg or AugmentConfig()
    img = as_gray(img)
    h = img.shape[0]
    need = max(cfg.slice_heights) * (cfg.k + 1)
    if h < need:
        raise ValueError(f"image height {h} is below the required {need} px for slice heights "
                         f"{list(cfg.slice_heights)} with k={cfg.k}")
    acc = np.zeros_like(img)
    for band in cfg.slice_heights:
        res = background_residual(img, band, cfg.k, cfg.exclusion)
        top = res.max()
        if top > _RESIDUAL_TOL:
            acc += (res / top) ** cfg.exponent * 255.0
    return acc / len(cfg.slice_heights)


def _minmax_255(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo <= _RESIDUAL_TOL:
        return np.zeros_like(x)
    return (x - lo) * (255.0 / (hi - lo))


def wavelet_reconstruction(img: np.ndarray, levels: int = 3, decay: float = 0.5) -> np.ndarray:
    """Inverse Haar transform with the approximation removed and finer details damped.

    The coarsest detail level is kept at full weight, each finer level is
    scaled by a further ``decay``. Output is ``|recon|`` stretched to [0, 255].
    """
    img = as_gray(img)
    pyr = haar_dwt2(img, levels)
    n = len(pyr.levels)
    damped = [
        HaarLevel(lv.LH * decay ** (n - 1 - i), lv.HL * decay ** (n - 1 - i), lv.HH * decay ** (n - 1 - i), lv.shape)
        for i, lv in enumerate(pyr.levels)
    ]
    recon = haar_idwt2(HaarPyramid(damped, np.zeros_like(pyr.approx)))
    return _minmax_255(np.abs(recon))


def augmented_channels(img: np.ndarray, cfg: AugmentConfig | None = None) -> np.ndarray:
    """``(H, W, 3)`` stack: normalized image, background removal, wavelet reconstruction."""
    cfg = cfg or AugmentConfig()
    norm = normalize_luminance(as_gray(img))
    return np.stack(
        [norm, remove_background(norm, cfg), wavelet_reconstruction(norm, cfg.wavelet_levels, cfg.detail_decay)],
        axis=-1,
    )


def compose_channels(img: np.ndarray, cfg: AugmentConfig | None, out) -> Path:
    """Write the three augmented channels as an 8-bit RGB PNG at ``out``."""
    out = Path(out)
    save_rgb(augmented_channels(img, cfg), out)
    return out


def augment_directory(in_dir, out_dir, cfg: AugmentConfig | None = None) -> list[Path]:
    """Compose every PNG/PGM in ``in_dir`` into ``out_dir`` (same stem, ``.png``)."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    written = []
    for p in sorted(in_dir.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            written.append(compose_channels(load_image(p), cfg, out_dir / (p.stem + ".png")))
    return written
