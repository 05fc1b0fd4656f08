"""Image and saliency containers plus the codecs that move them around.

Images are H*W*3 RGB rasters stored flat in row-major order as float64 in
[0, 1].  Saliency maps are H*W float32 rasters, also flat and row-major.
The binary saliency container ("SALM") is a little-endian format:

    bytes 0..3   magic "SALM"
    byte  4      version (0x01 = float32 saliency payload)
    bytes 5..8   height, u32
    bytes 9..12  width, u32
    bytes 13..   payload, height*width little-endian values, no trailer
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DecodeError, ParameterError, UnsupportedFormatError, ValidationError

SALM_MAGIC = b"SALM"
SALM_VERSION_SALIENCY = 0x01
SALM_VERSION_SEGMENTS = 0x02
_SALM_HEADER = struct.Struct("<4sBII")


@dataclass(frozen=True)
class ImageTensor:
    """Validated RGB image: flat float64 buffer of length height*width*3."""

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("image dimensions must be positive")
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 1 or data.size != self.height * self.width * 3:
            raise ValidationError(
                f"image buffer must hold {self.height * self.width * 3} values, "
                f"got shape {np.shape(self.data)}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("image values must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValidationError("image values must lie in [0, 1]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_pixels(cls, pixels: np.ndarray) -> "ImageTensor":
        """Build from an (H, W, 3) array."""
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValidationError("expected an (H, W, 3) array")
        return cls(pixels.shape[0], pixels.shape[1], pixels.reshape(-1))

    @classmethod
    def _unchecked(cls, height: int, width: int, data: np.ndarray) -> "ImageTensor":
        """Internal fast path that skips range validation.

        Used where values may legitimately leave [0, 1] (gradient probes are
        sent to the predictor unclipped) or where the range is guaranteed by
        construction and revalidating every probe would dominate runtime.
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "height", int(height))
        object.__setattr__(obj, "width", int(width))
        data = np.ascontiguousarray(data, dtype=np.float64)
        data.flags.writeable = False
        object.__setattr__(obj, "data", data)
        return obj

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (H, W, 3) view of the buffer."""
        return self.data.reshape(self.height, self.width, 3)

    def with_data(self, data: np.ndarray) -> "ImageTensor":
        """Same dimensions, new buffer (validated)."""
        return ImageTensor(self.height, self.width, data)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel attribution scores: flat float32 buffer of length height*width."""

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("saliency dimensions must be positive")
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 1 or data.size != self.height * self.width:
            raise ValidationError(
                f"saliency buffer must hold {self.height * self.width} values, "
                f"got shape {np.shape(self.data)}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("saliency values must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "SaliencyMap":
        grid = np.asarray(grid, dtype=np.float32)
        if grid.ndim != 2:
            raise ValidationError("expected an (H, W) array")
        return cls(grid.shape[0], grid.shape[1], grid.reshape(-1))

    @property
    def grid(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)


def decode_image(payload: bytes) -> ImageTensor:
    """Decode an 8-bit RGB or RGBA PNG; alpha is dropped.

    Raises DecodeError on malformed bytes and UnsupportedFormatError on
    well-formed images in any other mode (palette, grayscale, 16-bit).
    """
    try:
        with Image.open(io.BytesIO(payload)) as img:
            if img.format != "PNG":
                raise UnsupportedFormatError(
                    f"expected a PNG image, got {img.format or 'unknown format'}"
                )
            if img.mode not in ("RGB", "RGBA"):
                raise UnsupportedFormatError(
                    f"expected an 8-bit RGB or RGBA PNG, got mode {img.mode}"
                )
            if img.mode == "RGBA":
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise DecodeError(f"not a decodable image: {exc}") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"corrupt image payload: {exc}") from exc
    return ImageTensor.from_pixels(arr)


def encode_image(image: ImageTensor) -> bytes:
    """Encode as an 8-bit RGB PNG; values are scaled by 255 and rounded."""
    quantized = np.rint(image.pixels * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _salm_pack(version: int, height: int, width: int, payload: bytes) -> bytes:
    return _SALM_HEADER.pack(SALM_MAGIC, version, height, width) + payload


def _salm_unpack(payload: bytes, expected_version: int, item_size: int):
    """Shared header parse; returns (height, width, body bytes)."""
    if len(payload) < _SALM_HEADER.size:
        raise DecodeError("saliency container shorter than its header")
    magic, version, height, width = _SALM_HEADER.unpack_from(payload)
    if magic != SALM_MAGIC:
        raise DecodeError(f"bad magic {magic!r}, expected {SALM_MAGIC!r}")
    if version != expected_version:
        raise UnsupportedFormatError(
            f"container version {version:#04x}, expected {expected_version:#04x}"
        )
    if height < 1 or width < 1:
        raise DecodeError("container dimensions must be positive")
    body = payload[_SALM_HEADER.size:]
    expected = height * width * item_size
    if len(body) != expected:
        raise DecodeError(
            f"payload holds {len(body)} bytes, expected exactly {expected}"
        )
    return height, width, body


def encode_saliency(saliency: SaliencyMap) -> bytes:
    payload = saliency.data.astype("<f4").tobytes()
    return _salm_pack(SALM_VERSION_SALIENCY, saliency.height, saliency.width, payload)


def decode_saliency(payload: bytes) -> SaliencyMap:
    height, width, body = _salm_unpack(payload, SALM_VERSION_SALIENCY, 4)
    values = np.frombuffer(body, dtype="<f4").astype(np.float32)
    return SaliencyMap(height, width, values)


def per_channel_mean(image: ImageTensor) -> np.ndarray:
    """Mean of each RGB channel over the whole image, shape (3,)."""
    return image.pixels.mean(axis=(0, 1))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ParameterError("blur sigma must be positive")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image: ImageTensor, sigma: float) -> ImageTensor:
    """Separable Gaussian blur with edge clamping, per channel."""
    kernel = gaussian_kernel(sigma)
    px = image.pixels.astype(np.float64)
    out = ndimage.correlate1d(px, kernel, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
    # convolving values in [0, 1] with a unit-sum kernel stays in range up to rounding
    np.clip(out, 0.0, 1.0, out=out)
    return ImageTensor.from_pixels(out)


def bilinear_resize(grid: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Resize a 2-D array with bilinear interpolation over pixel centers.

    Output center (r, c) maps to input coordinate ((r + 0.5) * H / out_h - 0.5,
    ...), clamped to the valid range, which matches the usual align-corners=False
    convention.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ParameterError("bilinear_resize expects a 2-D array")
    if out_height < 1 or out_width < 1:
        raise ParameterError("output dimensions must be positive")
    in_h, in_w = grid.shape
    ys = (np.arange(out_height, dtype=np.float64) + 0.5) * in_h / out_height - 0.5
    xs = (np.arange(out_width, dtype=np.float64) + 0.5) * in_w / out_width - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1.0 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1.0 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1.0 - wy) + bot * wy
