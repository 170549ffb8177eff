"""Raster warping, the bounded-crop pipeline, and the resize+centre-crop.

An image is a (height, width, channels) uint8 numpy array with 1 or 3
channels. All resampling is bilinear with half-pixel centres; float
results are quantized as floor(v + 0.5) clipped to [0, 255].
"""

import enum
import math

import numpy as np
from PIL import Image as _PILImage
from PIL import UnidentifiedImageError

from . import _kernels
from .errors import CropTooSmall, EmptyIntersection, IoError, UnsupportedPngVariant
from .geometry import ConvexPolygon, RectAA, apply_point, canvas_corners, clip_to_rect, invert, max_inscribed_rect

__all__ = [
    "WarpMode",
    "warp_image",
    "bounded_view",
    "rcc",
    "load_png",
    "save_png",
]


class WarpMode(enum.Enum):
    """How a homography is applied to an evaluation image."""

    DEFAULT = "default"
    BOUNDED = "bounded"


def _check_image(img):
    if not isinstance(img, np.ndarray):
        raise TypeError(f"image must be an ndarray, got {type(img).__name__}")
    if img.dtype != np.uint8:
        raise ValueError(f"image dtype must be uint8, got {img.dtype}")
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"image shape must be (H, W, 1|3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got {img.shape}")


def _quantize(x):
    return np.clip(np.floor(x + 0.5), 0.0, 255.0).astype(np.uint8)


def warp_image(img, h):
    """Warp an image under a homography, filling uncovered pixels black.

    Inverse mapping: each output pixel centre (x+0.5, y+0.5) is pulled
    back through invert(h) and bilinear-sampled; taps falling outside the
    source contribute zero, so new background is black.

    Args:
        img: (H, W, C) uint8 image.
        h: Homography in the image's pixel frame.

    Returns:
        (H, W, C) uint8 image of the same shape.
    """
    _check_image(img)
    hinv = invert(h).m
    out = _kernels.warp_bilinear(img.astype(np.float64), np.ascontiguousarray(hinv))
    return _quantize(out)


def _resize(img, out_h, out_w):
    out = _kernels.resize_bilinear(img.astype(np.float64), out_h, out_w)
    return _quantize(out)


def rcc(img, side):
    """Resize the smaller side to `side`, then centre-crop side x side.

    The larger dimension scales proportionally and rounds to the nearest
    integer with ties away from zero; the crop origin along each axis is
    floor((dim - side) / 2).
    """
    _check_image(img)
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    h, w = img.shape[:2]
    if h <= w:
        out_h = side
        out_w = int(math.floor(w * side / h + 0.5))
    else:
        out_w = side
        out_h = int(math.floor(h * side / w + 0.5))
    resized = _resize(img, out_h, out_w)
    y0 = (out_h - side) // 2
    x0 = (out_w - side) // 2
    return np.ascontiguousarray(resized[y0 : y0 + side, x0 : x0 + side])


def bounded_view(img, h, out_side):
    """Warp, crop away all fill, and resize to a square.

    Pipeline: warp_image, then forward-map the canvas corners through h,
    clip the warped quad to the canvas, take its maximum inscribed
    axis-aligned rectangle, round it inward to whole pixels, crop, and
    bilinear-resize the crop to out_side x out_side. Inward rounding
    keeps every cropped pixel's source inside the original image, so the
    output contains none of the warp's black fill.

    Args:
        img: (H, W, C) uint8 image.
        h: Homography in the image's pixel frame.
        out_side: output square side, >= 8.

    Returns:
        (out_side, out_side, C) uint8 image.

    Raises:
        EmptyIntersection: warped footprint misses the canvas entirely.
        CropTooSmall: the inscribed rectangle rounds below 8x8 px.
    """
    _check_image(img)
    if out_side < 8:
        raise ValueError(f"out_side must be >= 8, got {out_side}")
    hgt, wid = img.shape[:2]
    warped = warp_image(img, h)
    quad = ConvexPolygon([apply_point(h, p) for p in canvas_corners(wid, hgt)])
    visible = clip_to_rect(quad, RectAA(0.0, 0.0, float(wid), float(hgt)))
    rect = max_inscribed_rect(visible)
    ix0 = int(math.ceil(rect.x0))
    iy0 = int(math.ceil(rect.y0))
    ix1 = int(math.floor(rect.x1))
    iy1 = int(math.floor(rect.y1))
    if ix1 - ix0 < 8 or iy1 - iy0 < 8:
        raise CropTooSmall(f"inscribed rectangle {ix1 - ix0}x{iy1 - iy0} px is under 8x8")
    crop = np.ascontiguousarray(warped[iy0:iy1, ix0:ix1])
    return _resize(crop, out_side, out_side)


def load_png(path):
    """Load an 8-bit grayscale or RGB PNG as a (H, W, C) uint8 array.

    Palette images without transparency are expanded to RGB. 16-bit
    depths, alpha channels, and palette transparency are rejected.

    Raises:
        IoError: unreadable file or not a PNG.
        UnsupportedPngVariant: PNG variant outside 8-bit gray/RGB.
    """
    try:
        with _PILImage.open(path) as im:
            if im.format != "PNG":
                raise IoError(f"{path}: not a PNG file (format {im.format})")
            mode = im.mode
            if mode == "P":
                if "transparency" in im.info:
                    raise UnsupportedPngVariant(f"{path}: palette with alpha")
                im = im.convert("RGB")
                mode = "RGB"
            if mode not in ("L", "RGB"):
                raise UnsupportedPngVariant(f"{path}: unsupported PNG mode {mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise IoError(f"{path}: {e}") from e
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return np.ascontiguousarray(arr)


def save_png(img, path):
    """Write a (H, W, C) uint8 array as an 8-bit PNG (lossless)."""
    _check_image(img)
    if img.shape[2] == 1:
        pil = _PILImage.fromarray(img[:, :, 0], mode="L")
    else:
        pil = _PILImage.fromarray(img, mode="RGB")
    try:
        pil.save(path, format="PNG")
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
