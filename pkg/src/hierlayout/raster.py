"""RGBA raster plumbing: decode, resize, composite, and image statistics.

Conventions used throughout:

* Images are 8-bit RGBA with straight (non-premultiplied) alpha at rest.
* Compositing and resampling convert to premultiplied float64 internally and
  quantize once on the way out, rounding half up. The substrate is opaque
  white, so composited output is always fully opaque.
* Resampling is bilinear with half-pixel centers (destination pixel i samples
  source coordinate (i + 0.5) * src / dst - 0.5) and edge clamping. Resizing
  to the same dimensions is an exact identity.
* Grayscale conversion uses ITU-R BT.601 luma weights.

The saliency stand-in here is deliberately simple: a box-blurred Sobel
gradient magnitude, max-normalized. It is not a trained model, just a cheap
edge-energy map that gives layout scoring something to avoid covering, and a
user-supplied map can always be passed in its place.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .draft import DraftProtocol
from .errors import DecodeError, MissingAsset

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# uint8 alpha a layer must exceed at a pixel to "cover" it in the coverage
# mask. 25 is about 10 percent, enough to ignore anti-aliasing fringes.
DEFAULT_COVER_ALPHA = 25


class RgbaImage:
    """Immutable 8-bit RGBA image."""

    __slots__ = ("array",)

    def __init__(self, array) -> None:
        arr = np.array(array, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValueError("expected an array of shape (height, width, 4)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        arr.setflags(write=False)
        self.array = arr

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, rgba) -> "RgbaImage":
        """A constant-color image, e.g. RgbaImage.filled(4, 4, (255, 0, 0, 255))."""
        arr = np.empty((height, width, 4), dtype=np.uint8)
        arr[:] = np.asarray(rgba, dtype=np.uint8)
        return cls(arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RgbaImage):
            return NotImplemented
        return np.array_equal(self.array, other.array)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"RgbaImage({self.width}x{self.height})"


def decode_png(data: bytes) -> RgbaImage:
    """Decode an 8-bit PNG (RGB, RGBA, gray, or palette) to RGBA.

    A missing alpha channel is filled with 255. Corrupt streams and bit
    depths Pillow surfaces as high-depth modes raise DecodeError.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except UnidentifiedImageError as exc:
        raise DecodeError("not a decodable image stream") from exc
    except OSError as exc:
        raise DecodeError(f"corrupt image stream: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
        raise DecodeError(f"unsupported bit depth (mode {img.mode})")
    if img.mode != "RGBA":
        img = img.convert("RGBA")
    return RgbaImage(np.asarray(img, dtype=np.uint8))


def encode_png(img: RgbaImage) -> bytes:
    out = io.BytesIO()
    Image.fromarray(np.array(img.array), "RGBA").save(out, format="PNG")
    return out.getvalue()


def _quantize8(values: np.ndarray) -> np.ndarray:
    """Round half up to uint8."""
    return np.floor(np.clip(values, 0.0, 255.0) + 0.5).astype(np.uint8)


def _lerp_axis(arr: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    src_n = arr.shape[axis]
    if out_n == src_n:
        return arr
    pos = (np.arange(out_n, dtype=np.float64) + 0.5) * (src_n / out_n) - 0.5
    lo = np.floor(pos).astype(np.int64)
    t = pos - lo
    first = np.take(arr, np.clip(lo, 0, src_n - 1), axis=axis)
    second = np.take(arr, np.clip(lo + 1, 0, src_n - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = out_n
    t = t.reshape(shape)
    return first * (1.0 - t) + second * t


def resize(img: RgbaImage, w: int, h: int) -> RgbaImage:
    """Bilinear resize on premultiplied channels, then un-premultiply.

    Fully transparent output pixels come back as transparent black, since
    their color is undefined after un-premultiplying.
    """
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be at least 1x1")
    if w == img.width and h == img.height:
        return RgbaImage(img.array)
    src = img.array.astype(np.float64)
    alpha = src[:, :, 3:4] / 255.0
    pm = np.concatenate([src[:, :, :3] * alpha, src[:, :, 3:4]], axis=2)
    pm = _lerp_axis(pm, h, axis=0)
    pm = _lerp_axis(pm, w, axis=1)
    out_a = pm[:, :, 3]
    scale = np.zeros_like(out_a)
    np.divide(255.0, out_a, out=scale, where=out_a > 0)
    out = np.empty((h, w, 4), dtype=np.float64)
    out[:, :, :3] = pm[:, :, :3] * scale[:, :, None]
    out[:, :, 3] = out_a
    return RgbaImage(_quantize8(out))


def source_over(top: RgbaImage, bottom: RgbaImage) -> RgbaImage:
    """Source-over of two same-size straight-alpha images, quantized once.

    This is the layer-pair algebra used by grouping tests; full-canvas
    composition should go through composite(), which accumulates the whole
    stack in float before quantizing.
    """
    if (top.width, top.height) != (bottom.width, bottom.height):
        raise ValueError("source_over needs images of identical dimensions")
    ta = top.array[:, :, 3].astype(np.float64) / 255.0
    ba = bottom.array[:, :, 3].astype(np.float64) / 255.0
    t_pm = top.array[:, :, :3].astype(np.float64) * ta[:, :, None]
    b_pm = bottom.array[:, :, :3].astype(np.float64) * ba[:, :, None]
    out_a = ta + ba * (1.0 - ta)
    out_pm = t_pm + b_pm * (1.0 - ta)[:, :, None]
    scale = np.zeros_like(out_a)
    np.divide(1.0, out_a, out=scale, where=out_a > 0)
    out = np.empty(top.array.shape, dtype=np.float64)
    out[:, :, :3] = out_pm * scale[:, :, None]
    out[:, :, 3] = out_a * 255.0
    return RgbaImage(_quantize8(out))


@dataclass(eq=False)
class CoverageMask:
    """Per-pixel bookkeeping from a composite pass.

    top_index holds, per pixel, the index into the draft's placements of the
    highest-hierarchy layer whose resized alpha exceeded the cover threshold,
    or -1 where nothing covers. alpha_acc is the source-over alpha of the
    placed layers alone (the opaque substrate excluded), in [0, 1].
    """

    width: int
    height: int
    top_index: np.ndarray
    alpha_acc: np.ndarray

    def to_png16(self) -> bytes:
        """Export alpha_acc as a 16-bit grayscale PNG for debugging."""
        data = np.floor(np.clip(self.alpha_acc, 0.0, 1.0) * 65535.0 + 0.5).astype("<u2")
        img = Image.frombytes("I;16", (self.width, self.height), data.tobytes())
        out = io.BytesIO()
        img.save(out, format="PNG")
        return out.getvalue()


def composite(
    d: DraftProtocol,
    assets,
    *,
    cover_alpha: int = DEFAULT_COVER_ALPHA,
) -> tuple[RgbaImage, CoverageMask]:
    """Paint placements in ascending hierarchy onto an opaque white canvas.

    Each asset is resized to its placement box, clipped to the canvas, and
    blended with source-over on premultiplied alpha. Accumulation stays in
    float64 for the whole stack; the result is quantized once (round half
    up) and is fully opaque.
    """
    W, H = d.canvas.width, d.canvas.height
    rgb = np.full((H, W, 3), 255.0, dtype=np.float64)
    acc = np.zeros((H, W), dtype=np.float64)
    top = np.full((H, W), -1, dtype=np.int32)
    order = sorted(range(len(d.placements)), key=lambda i: d.placements[i].hierarchy)
    for idx in order:
        p = d.placements[idx]
        if p.element_id not in assets:
            raise MissingAsset(p.element_id)
        layer = resize(assets[p.element_id], p.w, p.h)
        x0, y0 = max(p.x, 0), max(p.y, 0)
        x1, y1 = min(p.x + p.w, W), min(p.y + p.h, H)
        if x0 >= x1 or y0 >= y1:
            continue
        sub = layer.array[y0 - p.y : y1 - p.y, x0 - p.x : x1 - p.x]
        sa8 = sub[:, :, 3]
        sa = sa8.astype(np.float64) / 255.0
        s_pm = sub[:, :, :3].astype(np.float64) * sa[:, :, None]
        rgb[y0:y1, x0:x1] = s_pm + rgb[y0:y1, x0:x1] * (1.0 - sa)[:, :, None]
        acc[y0:y1, x0:x1] = sa + acc[y0:y1, x0:x1] * (1.0 - sa)
        region = top[y0:y1, x0:x1]
        region[sa8 > cover_alpha] = idx
    arr = np.empty((H, W, 4), dtype=np.uint8)
    arr[:, :, :3] = _quantize8(rgb)
    arr[:, :, 3] = 255
    return RgbaImage(arr), CoverageMask(W, H, top, acc)


@dataclass(frozen=True)
class ElementStats:
    """Cheap per-asset features driving role inference."""

    alpha_coverage: float
    bbox_tightness: float
    mean_luma: float
    aspect: float


def element_stats(img: RgbaImage) -> ElementStats:
    """Coverage, tight-bbox fraction, mean luma over visible pixels, aspect.

    mean_luma averages only pixels with a > 0 and is 0.0 for a fully
    transparent image, as is bbox_tightness.
    """
    a = img.array[:, :, 3]
    solid = a > 0
    coverage = float(solid.mean())
    if coverage == 0.0:
        tightness = 0.0
        mean_luma = 0.0
    else:
        rows = np.flatnonzero(solid.any(axis=1))
        cols = np.flatnonzero(solid.any(axis=0))
        bbox_area = (rows[-1] - rows[0] + 1) * (cols[-1] - cols[0] + 1)
        tightness = float(bbox_area / (img.width * img.height))
        mean_luma = float(luma_map(img)[solid].mean())
    return ElementStats(
        alpha_coverage=coverage,
        bbox_tightness=tightness,
        mean_luma=mean_luma,
        aspect=img.width / img.height,
    )


def luma_map(img: RgbaImage) -> np.ndarray:
    """BT.601 luma of the RGB channels as float64 in [0, 255]."""
    return img.array[:, :, :3].astype(np.float64) @ np.asarray(LUMA_WEIGHTS)


def _box_blur(values: np.ndarray, radius: int) -> np.ndarray:
    k = 2 * radius + 1
    padded = np.pad(values, radius, mode="edge")
    out = np.zeros_like(values)
    for dy in range(k):
        for dx in range(k):
            out += padded[dy : dy + values.shape[0], dx : dx + values.shape[1]]
    return out / (k * k)


def saliency_proxy(img: RgbaImage) -> np.ndarray:
    """Edge-energy map in [0, 1]: Sobel magnitude of luma, box-blurred.

    3x3 Sobel with edge-replicated borders, then a radius-2 box blur, then
    division by the peak. A constant image yields an all-zero map.
    """
    y = luma_map(img)
    p = np.pad(y, 1, mode="edge")
    gx = (
        (p[0:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[0:-2, 0:-2] + 2.0 * p[1:-1, 0:-2] + p[2:, 0:-2])
    )
    gy = (
        (p[2:, 0:-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[0:-2, 0:-2] + 2.0 * p[0:-2, 1:-1] + p[0:-2, 2:])
    )
    mag = np.hypot(gx, gy)
    blurred = _box_blur(mag, radius=2)
    peak = float(blurred.max())
    if peak <= 0.0:
        return np.zeros_like(blurred)
    return blurred / peak
