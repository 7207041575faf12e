# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the per-pixel image kernels.

Same contracts as ``mammofuse.kernels.reference``; see that module for
the conventions (true convolution, replicate padding, pixel-center
bilinear sampling, LBP bit order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def conv3x3_replicate(img, kernel):
    arr = np.ascontiguousarray(img, dtype=np.float64)
    ker = np.asarray(kernel, dtype=np.float64)
    if ker.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got {ker.shape}")
    cdef double[:, ::1] im = arr
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double k[3][3]
    cdef Py_ssize_t a, b, y, x, yy, xx
    cdef double acc
    # Pre-flip so the inner loop is a plain correlation.
    for a in range(3):
        for b in range(3):
            k[a][b] = ker[2 - a, 2 - b]
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for a in range(3):
                yy = y + a - 1
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                for b in range(3):
                    xx = x + b - 1
                    if xx < 0:
                        xx = 0
                    elif xx >= w:
                        xx = w - 1
                    acc = acc + k[a][b] * im[yy, xx]
            out[y, x] = acc
    return out_arr


def lbp_codes(img):
    arr = np.ascontiguousarray(img, dtype=np.float64)
    cdef double[:, ::1] im = arr
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t[8] dy = [-1, -1, -1, 0, 1, 1, 1, 0]
    cdef Py_ssize_t[8] dx = [-1, 0, 1, 1, 1, 0, -1, -1]
    cdef Py_ssize_t y, x, i, yy, xx
    cdef int code
    cdef double center
    for y in range(h):
        for x in range(w):
            center = im[y, x]
            code = 0
            for i in range(8):
                yy = y + dy[i]
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                xx = x + dx[i]
                if xx < 0:
                    xx = 0
                elif xx >= w:
                    xx = w - 1
                if im[yy, xx] >= center:
                    code = code | (1 << i)
            out[y, x] = <unsigned char> code
    return out_arr


def resize_bilinear(img, Py_ssize_t out_h, Py_ssize_t out_w):
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError("resize target must be at least 1x1")
    cdef double[:, ::1] im = arr
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double sy = h / <double> out_h
    cdef double sx = w / <double> out_w
    cdef Py_ssize_t y, x, y0, x0, y0c, y1c, x0c, x1c
    cdef double fy, fx, ty, tx, top, bot
    for y in range(out_h):
        fy = (y + 0.5) * sy - 0.5
        y0 = <Py_ssize_t> floor(fy)
        ty = fy - y0
        y0c = y0
        if y0c < 0:
            y0c = 0
        elif y0c > h - 1:
            y0c = h - 1
        y1c = y0 + 1
        if y1c < 0:
            y1c = 0
        elif y1c > h - 1:
            y1c = h - 1
        for x in range(out_w):
            fx = (x + 0.5) * sx - 0.5
            x0 = <Py_ssize_t> floor(fx)
            tx = fx - x0
            x0c = x0
            if x0c < 0:
                x0c = 0
            elif x0c > w - 1:
                x0c = w - 1
            x1c = x0 + 1
            if x1c < 0:
                x1c = 0
            elif x1c > w - 1:
                x1c = w - 1
            top = (1.0 - tx) * im[y0c, x0c] + tx * im[y0c, x1c]
            bot = (1.0 - tx) * im[y1c, x0c] + tx * im[y1c, x1c]
            out[y, x] = (1.0 - ty) * top + ty * bot
    return out_arr
