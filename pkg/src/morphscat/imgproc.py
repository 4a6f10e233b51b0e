"""Image decoding, face-crop normalization, color conversion, Laplacian filtering.

All pixel math after decode is float64; planes are stored unclipped. Every
function here is pure, so concurrent callers need no locking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import convolve

from .errors import CropOutOfBounds, DecodeError, DimensionMismatch, IoError, PlaneTooSmall

CROP_SIZE = 250

# Full-range BT.601 (JFIF) RGB -> YCbCr.
YCBCR_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])

# 4-neighbor Laplacian stencil; the 8-neighbor variant stays available for
# experiments but is not the default.
LAPLACIAN_4 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
LAPLACIAN_8 = np.array([[1.0, 1.0, 1.0], [1.0, -8.0, 1.0], [1.0, 1.0, 1.0]])


@dataclass(frozen=True)
class RgbImage:
    """Decoded RGB raster, shape (height, width, 3), uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise DimensionMismatch("RgbImage needs a (h, w, 3) uint8 array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionMismatch("empty image")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FaceCrop:
    """Aligned face region, exactly CROP_SIZE x CROP_SIZE RGB uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.shape != (CROP_SIZE, CROP_SIZE, 3) or px.dtype != np.uint8:
            raise DimensionMismatch(
                f"FaceCrop must be {CROP_SIZE}x{CROP_SIZE}x3 uint8, got {px.shape} {px.dtype}"
            )


@dataclass(frozen=True)
class ChannelSet:
    """Y/Cb/Cr planes of one crop, float64, nominal range [0, 255], unclipped."""

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray


@dataclass(frozen=True)
class FilteredChannelSet:
    """Laplacian responses of the three channel planes (signed float64)."""

    ly: np.ndarray
    lcb: np.ndarray
    lcr: np.ndarray


def load_image(path) -> RgbImage:
    """Decode a PNG or JPEG file into an RgbImage.

    Alpha is discarded, grayscale is promoted to three equal channels.
    Raises IoError when the file cannot be read, DecodeError when it cannot
    be decoded.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"unsupported image format {im.format!r}: {path}")
            converted = im.convert("RGB")
    except FileNotFoundError as exc:
        raise IoError(f"image file not found: {path}") from exc
    except PermissionError as exc:
        raise IoError(f"image file not readable: {path}") from exc
    except UnidentifiedImageError as exc:
        raise DecodeError(f"not a decodable image: {path}") from exc
    except OSError as exc:
        # PIL raises OSError for truncated streams mid-decode.
        raise DecodeError(f"corrupt image data: {path}") from exc
    return RgbImage(np.asarray(converted, dtype=np.uint8))


def crop_resize_face(img: RgbImage, crop=None) -> FaceCrop:
    """Cut a region and resample it to the pipeline input size.

    ``crop`` is (left, top, width, height) in pixels; when omitted, a centered
    square of side min(width, height) is used. Resampling is bilinear and
    deterministic. A crop that already matches the target size passes through
    bit-for-bit.
    """
    if crop is None:
        side = min(img.width, img.height)
        left = (img.width - side) // 2
        top = (img.height - side) // 2
        width = height = side
    else:
        left, top, width, height = (int(v) for v in crop)
        if width < 1 or height < 1:
            raise CropOutOfBounds(f"degenerate crop {crop}")
        if left < 0 or top < 0 or left + width > img.width or top + height > img.height:
            raise CropOutOfBounds(
                f"crop {crop} outside image {img.width}x{img.height}"
            )
    region = img.pixels[top : top + height, left : left + width]
    if region.shape[0] == CROP_SIZE and region.shape[1] == CROP_SIZE:
        return FaceCrop(region.copy())
    resized = Image.fromarray(region).resize(
        (CROP_SIZE, CROP_SIZE), resample=Image.Resampling.BILINEAR
    )
    return FaceCrop(np.asarray(resized, dtype=np.uint8))


def rgb_to_ycbcr(crop: FaceCrop) -> ChannelSet:
    """Convert a crop to full-range BT.601 YCbCr planes (float64, unclipped)."""
    rgb = crop.pixels.astype(np.float64)
    planes = np.tensordot(rgb, YCBCR_MATRIX.T, axes=1) + YCBCR_OFFSET
    return ChannelSet(y=planes[..., 0], cb=planes[..., 1], cr=planes[..., 2])


def ycbcr_to_rgb_values(cs: ChannelSet) -> np.ndarray:
    """Exact inverse of rgb_to_ycbcr on the unclipped float path.

    Returns a (h, w, 3) float64 array; used for round-trip verification, not
    for display.
    """
    ycc = np.stack([cs.y, cs.cb, cs.cr], axis=-1) - YCBCR_OFFSET
    inv = np.linalg.inv(YCBCR_MATRIX)
    return np.tensordot(ycc, inv.T, axes=1)


def laplacian_filter(plane: np.ndarray, kernel: np.ndarray = LAPLACIAN_4) -> np.ndarray:
    """Convolve a plane with the Laplacian stencil under replicate padding.

    Output has the same shape as the input. Raises PlaneTooSmall below 3x3.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise DimensionMismatch("laplacian_filter expects a 2D plane")
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise PlaneTooSmall(f"plane {plane.shape} smaller than 3x3")
    return convolve(plane, kernel, mode="nearest")


def filter_channels(cs: ChannelSet, kernel: np.ndarray = LAPLACIAN_4) -> FilteredChannelSet:
    """Apply the Laplacian independently to the Y, Cb, and Cr planes."""
    return FilteredChannelSet(
        ly=laplacian_filter(cs.y, kernel),
        lcb=laplacian_filter(cs.cb, kernel),
        lcr=laplacian_filter(cs.cr, kernel),
    )
