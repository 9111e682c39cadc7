"""Image representation, raster I/O and the preprocessing chain.

A gray image is a plain 2-D ``float64`` ndarray (rows x columns) whose values
lie in [0, 255]. Functions here never modify their inputs.

Preprocessing is ``normalize_luminance -> fit_to_grid -> gaussian_blur``.
Annotation geometry is carried alongside through :class:`GridTransform`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

DEFECT_CLASSES = ("blister", "wire")
BACKGROUND = "background"
DEFAULT_SIGMA = 0.8


class ImageFormatError(ValueError):
    """Raised for rasters with an unsupported layout or bit depth."""


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box extent must be positive, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def inside(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def intersection_area(self, other: BoundingBox) -> int:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        return max(iw, 0) * max(ih, 0)


@dataclass(frozen=True)
class Annotation:
    box: BoundingBox
    label: str

    def __post_init__(self):
        if self.label not in DEFECT_CLASSES:
            raise ValueError(f"unknown defect label {self.label!r}; expected one of {DEFECT_CLASSES}")


@dataclass
class AnnotatedImage:
    image: np.ndarray
    annotations: list[Annotation] = field(default_factory=list)
    source_id: str = ""

    def __post_init__(self):
        h, w = self.image.shape
        for ann in self.annotations:
            if not ann.box.inside(w, h):
                raise ValueError(f"{self.source_id}: annotation {ann.box} outside {w}x{h} image")

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


def as_gray(arr) -> np.ndarray:
    """Validate and convert ``arr`` to a float64 gray image."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"gray image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 255:
        raise ValueError("gray image values must lie in [0, 255]")
    return img


# --------------------------------------------------------------------------- #
# raster I/O
# --------------------------------------------------------------------------- #

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise ImageFormatError(f"{path}: only binary PGM (P5) is supported")
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval < 256:
        arr = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
        return arr.reshape(height, width).astype(np.float64) * (255.0 / maxval)
    if maxval < 65536:
        arr = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos)
        return arr.reshape(height, width).astype(np.float64) * (255.0 / maxval)
    raise ImageFormatError(f"{path}: unsupported PGM maxval {maxval}")


def _from_pil(im: Image.Image, path: Path) -> np.ndarray:
    arr = np.asarray(im)
    if im.mode in ("I;16", "I;16B", "I;16L", "I"):
        if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
            raise ImageFormatError(f"{path}: values exceed 16-bit range")
        return arr.astype(np.float64) * (255.0 / 65535.0)
    if arr.dtype == np.uint16:
        scale = 255.0 / 65535.0
    elif arr.dtype == np.uint8:
        scale = 1.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {arr.dtype} (mode {im.mode})")
    arr = arr.astype(np.float64) * scale
    if arr.ndim == 3:
        if im.mode in ("RGBA", "LA"):
            arr = arr[..., :-1]
        arr = arr.mean(axis=2)
    return arr


def load_image(path) -> np.ndarray:
    """Read an 8/16-bit PNG or binary PGM as a gray image in [0, 255].

    Multi-channel rasters are reduced by the arithmetic mean of the color
    channels (alpha is dropped); 16-bit data is rescaled linearly.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "P":
                im = im.convert("RGB")
            return _from_pil(im, path)
    except (OSError, SyntaxError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an 8-bit gray PNG (values rounded to the nearest integer)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="L").save(path, format="PNG")


def save_rgb(channels: np.ndarray, path) -> None:
    """Write a (H, W, 3) array as an 8-bit RGB PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(channels), mode="RGB").save(path, format="PNG")


# --------------------------------------------------------------------------- #
# annotation JSON
# --------------------------------------------------------------------------- #

def annotations_to_json(ann_img: AnnotatedImage) -> dict:
    return {
        "source_id": ann_img.source_id,
        "width": ann_img.width,
        "height": ann_img.height,
        "annotations": [
            {"x": a.box.x, "y": a.box.y, "w": a.box.w, "h": a.box.h, "label": a.label}
            for a in ann_img.annotations
        ],
    }


def parse_annotations(doc: dict) -> tuple[str, int, int, list[Annotation]]:
    anns = [
        Annotation(BoundingBox(int(a["x"]), int(a["y"]), int(a["w"]), int(a["h"])), a["label"])
        for a in doc.get("annotations", [])
    ]
    return doc["source_id"], int(doc["width"]), int(doc["height"]), anns


def load_annotated(image_path, annotation_path) -> AnnotatedImage:
    img = load_image(image_path)
    doc = json.loads(Path(annotation_path).read_text())
    source_id, width, height, anns = parse_annotations(doc)
    if (height, width) != img.shape:
        raise ValueError(
            f"{annotation_path}: declares {width}x{height} but image is {img.shape[1]}x{img.shape[0]}"
        )
    return AnnotatedImage(img, anns, source_id)


def write_annotations(ann_img: AnnotatedImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(annotations_to_json(ann_img), indent=1) + "\n")


# --------------------------------------------------------------------------- #
# preprocessing
# --------------------------------------------------------------------------- #

def normalize_luminance(img: np.ndarray) -> np.ndarray:
    """Affine min-max stretch to [0, 255]; constant images map to all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    out = (img - lo) * (255.0 / (hi - lo))
    # pin the endpoints so repeated application is exactly idempotent
    out[img == lo] = 0.0
    out[img == hi] = 255.0
    return np.clip(out, 0.0, 255.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ``ceil(3 sigma)``, replicated borders."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = correlate1d(img, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def grid_width(width: int, window: int, step: int) -> int:
    """Largest width ``<= width`` such that ``(width - window) % step == 0``."""
    if not window >= step >= 1:
        raise ValueError(f"need window >= step >= 1, got window={window}, step={step}")
    if width < window:
        raise ValueError(f"image width {width} is narrower than the window {window}")
    return window + ((width - window) // step) * step


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resampling with pixel-center alignment."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    r0, r1, fr = axis_weights(in_h, out_h)
    c0, c1, fc = axis_weights(in_w, out_w)
    rows = img[r0] * (1 - fr)[:, None] + img[r1] * fr[:, None]
    return rows[:, c0] * (1 - fc) + rows[:, c1] * fc


@dataclass(frozen=True)
class GridTransform:
    """Affine scale between an original image and its grid-fitted version."""

    orig_width: int
    orig_height: int
    width: int
    height: int

    @property
    def sx(self) -> float:
        return self.width / self.orig_width

    @property
    def sy(self) -> float:
        return self.height / self.orig_height

    @classmethod
    def for_image(cls, width: int, height: int, window: int, step: int) -> GridTransform:
        new_w = grid_width(width, window, step)
        new_h = max(1, round(height * new_w / width))
        return cls(width, height, new_w, new_h)

    def _map(self, box: BoundingBox, sx: float, sy: float, w_lim: int, h_lim: int) -> BoundingBox:
        x0 = min(max(int(math.floor(box.x * sx + 1e-9)), 0), w_lim - 1)
        y0 = min(max(int(math.floor(box.y * sy + 1e-9)), 0), h_lim - 1)
        x1 = min(max(int(math.ceil(box.x2 * sx - 1e-9)), x0 + 1), w_lim)
        y1 = min(max(int(math.ceil(box.y2 * sy - 1e-9)), y0 + 1), h_lim)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def forward_box(self, box: BoundingBox) -> BoundingBox:
        return self._map(box, self.sx, self.sy, self.width, self.height)

    def inverse_box(self, box: BoundingBox) -> BoundingBox:
        return self._map(box, 1 / self.sx, 1 / self.sy, self.orig_width, self.orig_height)


def fit_to_grid(img: np.ndarray, window: int, step: int) -> np.ndarray:
    """Resize so a (window, step) sliding pass spans the full width exactly.

    Width becomes the largest aligned width not exceeding the original, and
    height follows the aspect ratio (rounded). Resampling is bilinear.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    tf = GridTransform.for_image(w, h, window, step)
    return resize_bilinear(img, tf.height, tf.width)


def preprocess(img: np.ndarray, window: int, step: int, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    return gaussian_blur(fit_to_grid(normalize_luminance(img), window, step), sigma)


def preprocess_annotated(
    ann_img: AnnotatedImage, window: int, step: int, sigma: float = DEFAULT_SIGMA
) -> tuple[AnnotatedImage, GridTransform]:
    """Preprocess the raster and carry annotation boxes through the same rescale."""
    tf = GridTransform.for_image(ann_img.width, ann_img.height, window, step)
    out = preprocess(ann_img.image, window, step, sigma)
    anns = [Annotation(tf.forward_box(a.box), a.label) for a in ann_img.annotations]
    return AnnotatedImage(out, anns, ann_img.source_id), tf
