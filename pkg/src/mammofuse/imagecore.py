"""Image values, file I/O, and the geometric/photometric transforms.

Images are immutable value objects backed by float64 arrays; grayscale
intensities live in [0, 1]. Transforms never mutate their input, and
every stochastic transform takes an explicit ``numpy.random.Generator``
so callers own reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

# Standard ImageNet channel statistics; overridable wherever they are used
# (see pipeline.AugmentPolicy).
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_PGM_MAXVALS = (255, 65535)


class FormatError(ValueError):
    """Raised for image files the loaders cannot interpret."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel image: row-major float64 intensities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2 or data.size == 0:
            raise ValueError("GrayImage requires a non-empty 2-D array")
        if float(data.min()) < 0.0 or float(data.max()) > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three same-shaped planes (R, G, B) with values in [0, 1], stacked (3, h, w)."""

    channels: np.ndarray

    def __post_init__(self):
        ch = np.ascontiguousarray(np.asarray(self.channels, dtype=np.float64))
        if ch.ndim != 3 or ch.shape[0] != 3 or ch.shape[1] == 0 or ch.shape[2] == 0:
            raise ValueError("RgbImage requires a (3, h, w) array")
        if float(ch.min()) < 0.0 or float(ch.max()) > 1.0:
            raise ValueError("RgbImage channel values must lie in [0, 1]")
        object.__setattr__(self, "channels", ch)

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


@dataclass(frozen=True, eq=False)
class NormalizedImage:
    """Three planes of standardized (unbounded) reals, produced by normalize()."""

    channels: np.ndarray

    def __post_init__(self):
        ch = np.ascontiguousarray(np.asarray(self.channels, dtype=np.float64))
        if ch.ndim != 3 or ch.shape[0] != 3:
            raise ValueError("NormalizedImage requires a (3, h, w) array")
        object.__setattr__(self, "channels", ch)

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


# ---------------------------------------------------------------------------
# File I/O (PGM P5 and grayscale PNG, 8 or 16 bit)
# ---------------------------------------------------------------------------


def _parse_pgm(data: bytes, path: Path) -> np.ndarray:
    pos = 0
    tokens: list[bytes] = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"truncated PGM header: {path}")
        tokens.append(data[start:pos])
    pos += 1  # exactly one whitespace byte separates maxval from pixel data
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (P5) file: {path}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"malformed PGM header: {path}") from exc
    if width < 1 or height < 1:
        raise FormatError(f"malformed PGM dimensions: {path}")
    if maxval not in _PGM_MAXVALS:
        raise FormatError(f"unsupported PGM maxval {maxval} (want 255 or 65535): {path}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"truncated PGM pixel data: {path}")
    pixels = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / float(maxval)


def _parse_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if mode in ("I", "I;16"):
            arr = np.asarray(im, dtype=np.int64)
            if arr.min() < 0 or arr.max() > 65535:
                raise FormatError(f"unsupported PNG bit depth: {path}")
            return arr.astype(np.float64) / 65535.0
        raise FormatError(f"unsupported PNG mode {mode!r} (need single-channel): {path}")


def load_gray(path: str | Path) -> GrayImage:
    """Load an 8- or 16-bit single-channel PNG or PGM and rescale to [0, 1]."""
    path = Path(path)
    data = path.read_bytes()  # raises FileNotFoundError for missing files
    if data[:2] == b"P5":
        return GrayImage(_parse_pgm(data, path))
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return GrayImage(_parse_png(path))
    raise FormatError(f"unsupported image format (want PGM P5 or PNG): {path}")


def save_gray(img: GrayImage, path: str | Path, bits: int = 8) -> None:
    """Write as PGM (.pgm) or PNG (.png), quantized to 8 or 16 bits."""
    path = Path(path)
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    maxval = 255 if bits == 8 else 65535
    quant = np.rint(img.data * maxval)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
        path.write_bytes(header + quant.astype(dtype).tobytes())
    elif suffix == ".png":
        if bits == 8:
            Image.fromarray(quant.astype(np.uint8), mode="L").save(path)
        else:
            Image.fromarray(quant.astype(np.uint16)).save(path)  # infers I;16
    else:
        raise ValueError(f"unsupported output extension {suffix!r} (want .pgm or .png)")


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Bilinear resize with the pixel-center (align_corners=False) convention."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"resize target must be at least 1x1, got {out_w}x{out_h}")
    resized = kernels.resize_bilinear(img.data, out_h, out_w)
    return GrayImage(np.clip(resized, 0.0, 1.0))


def crop_side(s: float, width: int, height: int) -> int:
    """Square crop side for area fraction s: round(sqrt(s) * min(w, h)), clamped."""
    side = int(round(math.sqrt(s) * min(width, height)))
    return max(1, min(side, min(width, height)))


def random_resized_crop(
    img: GrayImage,
    out: int = 512,
    scale_lo: float = 0.9,
    scale_hi: float = 1.0,
    *,
    rng: np.random.Generator,
) -> GrayImage:
    """Crop a random square covering an area fraction in [scale_lo, scale_hi], resize to out.

    A crop side larger than the image clamps to the full image rather than
    failing, so augmentation can never abort an epoch. Consumes exactly one
    uniform draw and two integer draws from ``rng``.
    """
    if scale_lo > scale_hi:
        raise ValueError("scale_lo must not exceed scale_hi")
    s = rng.uniform(scale_lo, scale_hi)
    side = crop_side(s, img.width, img.height)
    ox = int(rng.integers(0, img.width - side + 1))
    oy = int(rng.integers(0, img.height - side + 1))
    crop = GrayImage(img.data[oy : oy + side, ox : ox + side])
    if side == out:
        return crop
    return resize_bilinear(crop, out, out)


def hflip(img: GrayImage, p: float = 0.5, *, rng: np.random.Generator) -> GrayImage:
    """Reverse column order with probability p. Consumes one draw from ``rng``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    if rng.random() < p:
        return GrayImage(img.data[:, ::-1])
    return img


def normalize(img: RgbImage, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> NormalizedImage:
    """Per-channel standardization: (value - mean[c]) / std[c]."""
    mean = np.asarray(mean, dtype=np.float64).reshape(3, 1, 1)
    std = np.asarray(std, dtype=np.float64).reshape(3, 1, 1)
    if np.any(std <= 0.0):
        raise ValueError("std components must be positive")
    return NormalizedImage((img.channels - mean) / std)
