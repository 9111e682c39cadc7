"""Gray-level co-occurrence matrices and the five Haralick statistics used here."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HARALICK_NAMES = ("contrast", "dissimilarity", "homogeneity", "energy", "correlation")


@dataclass(frozen=True)
class GLCMConfig:
    distances: tuple[int, ...] = (1, 3, 5)
    angles: tuple[float, ...] = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)
    levels: int = 32
    symmetric: bool = True
    normalized: bool = True

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"GLCM needs at least 2 gray levels, got {self.levels}")
        if not self.distances or min(self.distances) < 1:
            raise ValueError(f"GLCM distances must be >= 1, got {self.distances}")
        if not self.angles:
            raise ValueError("GLCM needs at least one angle")

    def pairs(self) -> list[tuple[int, float]]:
        return [(d, a) for d in self.distances for a in self.angles]

    def to_dict(self) -> dict:
        return {
            "distances": list(self.distances),
            "angles": list(self.angles),
            "levels": self.levels,
            "symmetric": self.symmetric,
            "normalized": self.normalized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GLCMConfig:
        d = {**cls().to_dict(), **d}
        return cls(
            distances=tuple(int(v) for v in d["distances"]),
            angles=tuple(float(v) for v in d["angles"]),
            levels=int(d["levels"]),
            symmetric=bool(d["symmetric"]),
            normalized=bool(d["normalized"]),
        )


def quantize(img: np.ndarray, levels: int) -> np.ndarray:
    """Map [0, 255] luminance onto ``levels`` equal-width integer bins."""
    q = np.floor(np.asarray(img, dtype=np.float64) * (levels / 256.0)).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def displacement(distance: int, angle: float) -> tuple[int, int]:
    """(dy, dx) pixel offset of the pair partner; angle 0 points right, pi/2 points up."""
    return int(round(-distance * math.sin(angle))), int(round(distance * math.cos(angle)))


def _pair_slices(h: int, w: int, dy: int, dx: int):
    if abs(dy) >= h or abs(dx) >= w:
        raise ValueError(f"displacement ({dy}, {dx}) does not fit a {w}x{h} image")
    ref = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
    nbr = (slice(max(0, dy), h + min(0, dy)), slice(max(0, dx), w + min(0, dx)))
    return ref, nbr


def glcm_counts_batch(q: np.ndarray, dy: int, dx: int, levels: int) -> np.ndarray:
    """Raw co-occurrence counts for a ``(n, H, W)`` stack of quantized windows."""
    n, h, w = q.shape
    ref, nbr = _pair_slices(h, w, dy, dx)
    a = q[(slice(None),) + ref]
    b = q[(slice(None),) + nbr]
    offset = (np.arange(n, dtype=np.int64) * levels * levels)[:, None, None]
    codes = a * levels + b + offset
    counts = np.bincount(codes.ravel(), minlength=n * levels * levels)
    return counts.reshape(n, levels, levels).astype(np.float64)


def _finish(counts: np.ndarray, cfg: GLCMConfig) -> np.ndarray:
    if cfg.symmetric:
        counts = counts + np.swapaxes(counts, -1, -2)
    if cfg.normalized:
        n = counts.shape[0]
        total = counts.reshape(n, -1).sum(axis=1)
        counts = counts / total[:, None, None]
    return counts


def glcm(img: np.ndarray, distance: int, angle: float, cfg: GLCMConfig | None = None) -> np.ndarray:
    """Co-occurrence matrix of one image at a single (distance, angle)."""
    cfg = cfg or GLCMConfig()
    if distance < 1:
        raise ValueError(f"distance must be >= 1, got {distance}")
    q = quantize(img, cfg.levels)[None]
    dy, dx = displacement(distance, angle)
    return _finish(glcm_counts_batch(q, dy, dx, cfg.levels), cfg)[0]


def haralick_batch(p: np.ndarray) -> np.ndarray:
    """Contrast, dissimilarity, homogeneity, energy, correlation for ``(n, L, L)`` normalized matrices.

    Zero marginal variance (a single occupied level) gives correlation 1.
    """
    n, levels, _ = p.shape
    i = np.arange(levels, dtype=np.float64)
    diff = i[:, None] - i[None, :]
    flat = p.reshape(n, -1)
    # elementwise products + row sums keep results independent of batch size
    contrast = (flat * (diff ** 2).ravel()).sum(axis=1)
    dissimilarity = (flat * np.abs(diff).ravel()).sum(axis=1)
    homogeneity = (flat * (1.0 / (1.0 + diff ** 2)).ravel()).sum(axis=1)
    energy = np.sqrt(np.square(flat).sum(axis=1))

    pi = p.sum(axis=2)
    pj = p.sum(axis=1)
    mu_i = (pi * i).sum(axis=1)
    mu_j = (pj * i).sum(axis=1)
    var_i = (pi * (i[None, :] - mu_i[:, None]) ** 2).sum(axis=1)
    var_j = (pj * (i[None, :] - mu_j[:, None]) ** 2).sum(axis=1)
    di = i[None, :] - mu_i[:, None]
    dj = i[None, :] - mu_j[:, None]
    cov = (p * di[:, :, None] * dj[:, None, :]).reshape(n, -1).sum(axis=1)
    denom = np.sqrt(np.clip(var_i, 0, None) * np.clip(var_j, 0, None))
    degenerate = denom < 1e-12
    correlation = np.where(degenerate, 1.0, cov / np.where(degenerate, 1.0, denom))
    return np.stack([contrast, dissimilarity, homogeneity, energy, correlation], axis=1)


def haralick(p: np.ndarray) -> np.ndarray:
    return haralick_batch(np.asarray(p, dtype=np.float64)[None])[0]


def glcm_features_batch(windows: np.ndarray, cfg: GLCMConfig) -> np.ndarray:
    """Haralick statistics for each (distance, angle) pair, over a window stack."""
    q = quantize(windows, cfg.levels)
    norm_cfg = GLCMConfig(cfg.distances, cfg.angles, cfg.levels, symmetric=True, normalized=True)
    blocks = []
    for d, a in cfg.pairs():
        dy, dx = displacement(d, a)
        p = _finish(glcm_counts_batch(q, dy, dx, cfg.levels), norm_cfg)
        blocks.append(haralick_batch(p))
    return np.concatenate(blocks, axis=1)


def pair_code_image(q: np.ndarray, dy: int, dx: int, levels: int) -> np.ndarray:
    """``q[y, x] * levels + q[y + dy, x + dx]`` wherever the partner is inside the image.

    Positions without a partner hold 0 and must not be read.
    """
    h, w = q.shape
    ref, nbr = _pair_slices(h, w, dy, dx)
    dtype = np.uint16 if levels <= 256 else np.int64
    out = np.zeros((h, w), dtype=dtype)
    out[ref] = q[ref] * levels + q[nbr]
    return out


def window_counts(codes: np.ndarray, x: int, y: int, size: int, dy: int, dx: int, levels: int) -> np.ndarray:
    """Co-occurrence counts of the ``size`` window at (x, y) from a pair-code image."""
    ys = slice(y + max(0, -dy), y + size - max(0, dy))
    xs = slice(x + max(0, -dx), x + size - max(0, dx))
    return np.bincount(codes[ys, xs].ravel(), minlength=levels * levels).reshape(levels, levels)


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Symmetrize and normalize a ``(n, L, L)`` stack of raw counts."""
    return _finish(counts.astype(np.float64), GLCMConfig(levels=counts.shape[-1]))


def glcm_names(cfg: GLCMConfig) -> list[str]:
    return [
        f"G.d{d}.a{round(math.degrees(a))}.{s}" for d, a in cfg.pairs() for s in HARALICK_NAMES
    ]
