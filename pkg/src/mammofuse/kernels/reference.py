"""Pure-NumPy implementations of the per-pixel image kernels.

This is the portable fallback for the optional compiled extension
``mammofuse.kernels._native``. Both backends implement identical
contracts and the test suite checks them against each other and against
brute-force oracles.
"""

from __future__ import annotations

import numpy as np

# 8-neighborhood in clockwise order starting at the top-left corner:
# TL, T, TR, R, BR, B, BL, L. Bit i of an LBP code carries weight 2**i.
LBP_OFFSETS = (
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
)


def conv3x3_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True 3x3 convolution (kernel flipped) with edge-replicate padding.

    Output has the input's shape and is signed; no normalisation or
    clamping happens here.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got {kernel.shape}")
    h, w = img.shape
    pad = np.pad(img, 1, mode="edge")
    flipped = kernel[::-1, ::-1]
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(3):
        for j in range(3):
            out += flipped[i, j] * pad[i : i + h, j : j + w]
    return out


def lbp_codes(img: np.ndarray) -> np.ndarray:
    """8-bit local binary pattern codes with edge-replicate padding.

    bit_i = 1 iff neighbor_i >= center, neighbors in LBP_OFFSETS order.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    pad = np.pad(img, 1, mode="edge")
    codes = np.zeros((h, w), dtype=np.uint16)
    for bit, (dy, dx) in enumerate(LBP_OFFSETS):
        neigh = pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        codes += np.uint16(1 << bit) * (neigh >= img)
    return codes.astype(np.uint8)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample under the pixel-center convention.

    Source coordinate of output pixel x is (x + 0.5) * in/out - 0.5;
    samples outside the grid clamp to the border row or column.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError("resize target must be at least 1x1")
    h, w = img.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = ys - y0
    tx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = (1.0 - tx) * img[y0c[:, None], x0c] + tx * img[y0c[:, None], x1c]
    bot = (1.0 - tx) * img[y1c[:, None], x0c] + tx * img[y1c[:, None], x1c]
    return (1.0 - ty)[:, None] * top + ty[:, None] * bot
