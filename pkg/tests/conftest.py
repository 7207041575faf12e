import numpy as np
import pytest

from mammofuse import kernels
from mammofuse.kernels import reference

_BACKENDS = {"reference": reference}
if kernels.BACKEND == "native":
    from mammofuse.kernels import _native

    _BACKENDS["native"] = _native


@pytest.fixture(params=sorted(_BACKENDS))
def kernel_backend(request):
    """Each available kernel backend (module with the three kernel functions)."""
    return _BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_force_conv3x3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Independent nested-loop oracle: true convolution, replicate padding."""
    h, w = img.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    yy = min(max(y - a, 0), h - 1)
                    xx = min(max(x - b, 0), w - 1)
                    acc += kernel[a + 1][b + 1] * img[yy][xx]
            out[y, x] = acc
    return out


def brute_force_lbp_code(window: np.ndarray) -> int:
    """Oracle for the code of the center pixel of a 3x3 window."""
    center = window[1, 1]
    neighbors = [
        window[0, 0],
        window[0, 1],
        window[0, 2],
        window[1, 2],
        window[2, 2],
        window[2, 1],
        window[2, 0],
        window[1, 0],
    ]
    return sum((1 << i) for i, v in enumerate(neighbors) if v >= center)


def bilinear_at(img: np.ndarray, fy: float, fx: float) -> float:
    """Oracle for one pixel-center bilinear sample with border clamping."""
    import math

    h, w = img.shape
    y0 = math.floor(fy)
    x0 = math.floor(fx)
    ty = fy - y0
    tx = fx - x0
    y0c, y1c = min(max(y0, 0), h - 1), min(max(y0 + 1, 0), h - 1)
    x0c, x1c = min(max(x0, 0), w - 1), min(max(x0 + 1, 0), w - 1)
    top = (1 - tx) * img[y0c, x0c] + tx * img[y0c, x1c]
    bot = (1 - tx) * img[y1c, x0c] + tx * img[y1c, x1c]
    return (1 - ty) * top + ty * bot


def pairwise_auc(scores, labels) -> float:
    """Mann-Whitney oracle: ordered pos/neg pairs, ties counted 1/2."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))
