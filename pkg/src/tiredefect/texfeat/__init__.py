"""Engineered texture descriptors: LBP, GLCM, Fourier and Haar wavelet features."""

from .extract import (
    FAMILIES,
    FeatureConfig,
    FeatureVector,
    WindowFeaturizer,
    extract_features,
    family_slices,
    feature_names,
    flags_str,
    fourier_features,
    glcm_features,
    lbp_features,
    parse_flags,
    wavelet_features,
)
from .fourier import magnitude_spectrum, radial_profile, spectral_descriptors
from .glcm import GLCMConfig, glcm, haralick, quantize
from .lbp import LBPConfig, lbp_code_map, lbp_histogram
from .stats import STAT_NAMES, stats_summary
from .wavelet import HaarPyramid, WaveletConfig, haar_dwt2, haar_idwt2

__all__ = [
    "FAMILIES", "FeatureConfig", "FeatureVector", "GLCMConfig", "HaarPyramid", "LBPConfig",
    "STAT_NAMES", "WaveletConfig", "WindowFeaturizer", "extract_features", "family_slices",
    "feature_names", "flags_str", "fourier_features", "glcm", "glcm_features", "haar_dwt2",
    "haar_idwt2", "haralick", "lbp_code_map", "lbp_features", "lbp_histogram",
    "magnitude_spectrum", "parse_flags", "quantize", "radial_profile", "spectral_descriptors",
    "stats_summary", "wavelet_features",
]
