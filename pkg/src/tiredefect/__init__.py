"""Texture-feature random-forest defect detection for large anisotropic grayscale radiographs."""

__version__ = "0.1.0"
