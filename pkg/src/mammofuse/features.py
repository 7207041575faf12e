"""Handcrafted feature maps: derivative edges, thresholding, and LBP.

All maps share their source image's shape and live in [0, 1], so they can
be packed directly into image channels. Kernels and normalizers are
carried in a KernelSpec so alternative filters are a config swap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .imagecore import GrayImage

MAP_KINDS = ("d1", "d2", "t", "lbp")


def _sobel_gx() -> np.ndarray:
    return np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def _laplacian4() -> np.ndarray:
    return np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A feature plane: same shape as its source image, values in [0, 1]."""

    data: np.ndarray
    kind: str

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2 or data.size == 0:
            raise ValueError("FeatureMap requires a non-empty 2-D array")
        if float(data.min()) < 0.0 or float(data.max()) > 1.0:
            raise ValueError("FeatureMap values must lie in [0, 1]")
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Filter bank for the derivative maps plus the threshold level.

    gx/gy are the first-derivative pair (gy must be gx transposed), lap the
    second-derivative kernel; both must sum to zero. d1_norm and d2_norm are
    the maximum absolute responses on unit-range inputs, so dividing by them
    keeps map values in [0, 1] without per-image rescaling.
    """

    gx: np.ndarray = field(default_factory=_sobel_gx)
    gy: np.ndarray | None = None
    lap: np.ndarray = field(default_factory=_laplacian4)
    d1_norm: float = 4.0
    d2_norm: float = 4.0
    tau: float = 0.5

    def __post_init__(self):
        gx = np.asarray(self.gx, dtype=np.float64)
        gy = gx.T.copy() if self.gy is None else np.asarray(self.gy, dtype=np.float64)
        lap = np.asarray(self.lap, dtype=np.float64)
        for name, k in (("gx", gx), ("gy", gy), ("lap", lap)):
            if k.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
        if abs(gx.sum()) > 1e-12 or abs(lap.sum()) > 1e-12:
            raise ValueError("gx and lap entries must sum to zero")
        if not np.array_equal(gy, gx.T):
            raise ValueError("gy must equal the transpose of gx")
        if self.d1_norm <= 0.0 or self.d2_norm <= 0.0:
            raise ValueError("d1_norm and d2_norm must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)
        object.__setattr__(self, "lap", lap)


DEFAULT_KERNELS = KernelSpec()


def conv3x3(img: GrayImage, k: np.ndarray) -> np.ndarray:
    """True convolution (kernel flipped) with replicate padding; signed output."""
    return kernels.conv3x3_replicate(img.data, k)


def d1_map(img: GrayImage, k: KernelSpec = DEFAULT_KERNELS) -> FeatureMap:
    """First-derivative edge map: mean of |gx| and |gy| responses, clamped to [0, 1]."""
    gx = np.abs(kernels.conv3x3_replicate(img.data, k.gx))
    gy = np.abs(kernels.conv3x3_replicate(img.data, k.gy))
    data = np.clip((gx + gy) / (2.0 * k.d1_norm), 0.0, 1.0)
    return FeatureMap(data, "d1")


def d2_map(img: GrayImage, k: KernelSpec = DEFAULT_KERNELS) -> FeatureMap:
    """Second-derivative map: |Laplacian response| clamped to [0, 1]."""
    lap = np.abs(kernels.conv3x3_replicate(img.data, k.lap))
    return FeatureMap(np.clip(lap / k.d2_norm, 0.0, 1.0), "d2")


def threshold_map(img: GrayImage, tau: float = 0.5) -> FeatureMap:
    """Binary map: 1.0 where pixel >= tau, else 0.0 (ties go to 1)."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return FeatureMap((img.data >= tau).astype(np.float64), "t")


def lbp_map(img: GrayImage) -> FeatureMap:
    """Local binary pattern codes scaled to [0, 1] (code / 255).

    Bit i compares neighbor i against the center with >=, neighbors ordered
    clockwise from the top-left corner; borders use replicate padding. Flat
    regions therefore map to code 255.
    """
    codes = kernels.lbp_codes(img.data)
    return FeatureMap(codes.astype(np.float64) / 255.0, "lbp")
