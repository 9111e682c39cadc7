"""Concatenated feature vectors over the four switchable families L, G, F, W.

Families are always emitted in the fixed order L, G, F, W. The single-window
path (:func:`extract_features`) is a batch of one through the same code as
:class:`WindowFeaturizer`, so both give bit-identical vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import DEFAULT_ROLLOFF, fourier_features_batch, fourier_names
from .glcm import (
    GLCMConfig,
    displacement,
    glcm_features_batch,
    glcm_names,
    haralick_batch,
    normalize_counts,
    pair_code_image,
    quantize,
    window_counts,
)
from .lbp import DEFAULT_RADII, LBPConfig, lbp_block, lbp_code_map, lbp_names
from .wavelet import wavelet_features_batch, wavelet_names

FAMILIES = ("L", "G", "F", "W")
_CHUNK = 64


def parse_flags(flags) -> tuple[str, ...]:
    """Normalize ``"GFW"``, ``{"W", "G"}`` etc. to the canonical ordered tuple."""
    chosen = set(flags)
    unknown = chosen - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown feature families {sorted(unknown)}; expected a subset of {FAMILIES}")
    if not chosen:
        raise ValueError("at least one feature family must be enabled")
    return tuple(f for f in FAMILIES if f in chosen)


def flags_str(flags) -> str:
    return "".join(parse_flags(flags))


@dataclass(frozen=True)
class FeatureConfig:
    lbp_radii: tuple[int, ...] = DEFAULT_RADII
    glcm: GLCMConfig = field(default_factory=GLCMConfig)
    wavelet_levels: int = 3
    rolloff: float = DEFAULT_ROLLOFF

    def __post_init__(self):
        for r in self.lbp_radii:
            LBPConfig(r)
        if self.wavelet_levels < 1:
            raise ValueError("wavelet_levels must be >= 1")
        if not 0 < self.rolloff <= 1:
            raise ValueError("rolloff must lie in (0, 1]")

    @property
    def lbp_configs(self) -> list[LBPConfig]:
        return [LBPConfig(r) for r in sorted(self.lbp_radii)]

    def to_dict(self) -> dict:
        return {
            "lbp_radii": sorted(self.lbp_radii),
            "glcm": self.glcm.to_dict(),
            "wavelet_levels": self.wavelet_levels,
            "rolloff": self.rolloff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureConfig:
        d = {**cls().to_dict(), **d}  # missing keys keep their defaults
        return cls(
            lbp_radii=tuple(int(r) for r in d["lbp_radii"]),
            glcm=GLCMConfig.from_dict(d["glcm"]),
            wavelet_levels=int(d["wavelet_levels"]),
            rolloff=float(d["rolloff"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise ValueError("feature values and names differ in length")

    def __len__(self) -> int:
        return len(self.names)


def feature_names(flags, cfg: FeatureConfig | None = None) -> list[str]:
    cfg = cfg or FeatureConfig()
    names: list[str] = []
    for fam in parse_flags(flags):
        if fam == "L":
            for c in cfg.lbp_configs:
                names += lbp_names(c)
        elif fam == "G":
            names += glcm_names(cfg.glcm)
        elif fam == "F":
            names += fourier_names()
        else:
            names += wavelet_names(cfg.wavelet_levels)
    return names


def family_slices(flags, cfg: FeatureConfig | None = None) -> dict[str, slice]:
    """Column range of each enabled family inside the concatenated vector."""
    cfg = cfg or FeatureConfig()
    out, pos = {}, 0
    for fam in parse_flags(flags):
        n = len(feature_names(fam, cfg))
        out[fam] = slice(pos, pos + n)
        pos += n
    return out


class WindowFeaturizer:
    """Feature extraction for many square windows of one image.

    LBP code rasters and GLCM pair-code images are computed once for the
    whole image and cropped per window. Both only read pixels inside the
    window they are cropped to, so the result equals a per-window computation
    exactly.
    """

    def __init__(self, img: np.ndarray, flags, cfg: FeatureConfig | None = None):
        self.img = np.asarray(img, dtype=np.float64)
        self.flags = parse_flags(flags)
        self.cfg = cfg or FeatureConfig()
        self._codes: dict[int, np.ndarray] = {}
        self._pairs: dict[tuple[int, int], np.ndarray] = {}
        self.dim = len(feature_names(self.flags, self.cfg))

    def _lbp_codes(self, radius: int) -> np.ndarray:
        if radius not in self._codes:
            self._codes[radius] = lbp_code_map(self.img, radius)
        return self._codes[radius]

    def _glcm(self, origins, size: int) -> np.ndarray:
        g = self.cfg.glcm
        if not self._pairs:
            q = quantize(self.img, g.levels)
            for d, a in g.pairs():
                dy, dx = displacement(d, a)
                if abs(dy) >= size or abs(dx) >= size:
                    raise ValueError(f"GLCM displacement ({dy}, {dx}) does not fit a {size}px window")
                if (dy, dx) not in self._pairs:
                    self._pairs[dy, dx] = pair_code_image(q, dy, dx, g.levels)
        blocks = []
        for d, a in g.pairs():
            dy, dx = displacement(d, a)
            codes = self._pairs[dy, dx]
            counts = np.stack([window_counts(codes, x, y, size, dy, dx, g.levels) for x, y in origins])
            blocks.append(haralick_batch(normalize_counts(counts)))
        return np.concatenate(blocks, axis=1)

    def _lbp(self, origins, size: int) -> np.ndarray:
        rows = []
        for x, y in origins:
            parts = []
            for c in self.cfg.lbp_configs:
                r = c.radius
                if size <= 2 * r:
                    raise ValueError(f"window {size} too small for LBP radius {r}")
                codes = self._lbp_codes(r)[y:y + size - 2 * r, x:x + size - 2 * r]
                parts.append(lbp_block(codes, c))
            rows.append(np.concatenate(parts))
        return np.array(rows)

    def extract(self, origins, size: int) -> np.ndarray:
        """``(n, dim)`` matrix for windows with top-left corners ``origins`` = [(x, y), ...]."""
        origins = [(int(x), int(y)) for x, y in origins]
        h, w = self.img.shape
        for x, y in origins:
            if x < 0 or y < 0 or x + size > w or y + size > h:
                raise ValueError(f"window ({x}, {y}, {size}) exceeds {w}x{h} image")
        out = np.empty((len(origins), self.dim))
        for start in range(0, len(origins), _CHUNK):
            chunk = origins[start:start + _CHUNK]
            stack = None
            if set(self.flags) & {"F", "W"}:
                stack = np.stack([self.img[y:y + size, x:x + size] for x, y in chunk])
            blocks = []
            for fam in self.flags:
                if fam == "L":
                    blocks.append(self._lbp(chunk, size))
                elif fam == "G":
                    blocks.append(self._glcm(chunk, size))
                elif fam == "F":
                    blocks.append(fourier_features_batch(stack, self.cfg.rolloff))
                else:
                    blocks.append(wavelet_features_batch(stack, self.cfg.wavelet_levels))
            out[start:start + len(chunk)] = np.concatenate(blocks, axis=1)
        return out


def extract_features(img: np.ndarray, flags, cfg: FeatureConfig | None = None) -> FeatureVector:
    """Feature vector of a single (square or rectangular) window."""
    img = np.asarray(img, dtype=np.float64)
    flags = parse_flags(flags)
    cfg = cfg or FeatureConfig()
    h, w = img.shape
    if h != w:
        return _extract_rect(img, flags, cfg)
    values = WindowFeaturizer(img, flags, cfg).extract([(0, 0)], h)[0]
    return FeatureVector(values, tuple(feature_names(flags, cfg)))


def _extract_rect(img, flags, cfg) -> FeatureVector:
    stack = img[None]
    blocks = []
    for fam in flags:
        if fam == "L":
            blocks.append(np.concatenate([lbp_block(lbp_code_map(img, c), c) for c in cfg.lbp_configs]))
        elif fam == "G":
            blocks.append(glcm_features_batch(stack, cfg.glcm)[0])
        elif fam == "F":
            blocks.append(fourier_features_batch(stack, cfg.rolloff)[0])
        else:
            blocks.append(wavelet_features_batch(stack, cfg.wavelet_levels)[0])
    return FeatureVector(np.concatenate(blocks), tuple(feature_names(flags, cfg)))


def lbp_features(img: np.ndarray, cfg: FeatureConfig | None = None) -> FeatureVector:
    return extract_features(img, "L", cfg)


def glcm_features(img: np.ndarray, cfg: FeatureConfig | None = None) -> FeatureVector:
    return extract_features(img, "G", cfg)


def fourier_features(img: np.ndarray, cfg: FeatureConfig | None = None) -> FeatureVector:
    return extract_features(img, "F", cfg)


def wavelet_features(img: np.ndarray, cfg: FeatureConfig | None = None) -> FeatureVector:
    return extract_features(img, "W", cfg)
