# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: same-size convolution and ring-patch codes.

Semantics match aspectrec._kernels._fallback exactly; accumulation order is
identical and the module is built with FMA contraction disabled, so results
are bit-for-bit equal to the NumPy fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline Py_ssize_t mirror(Py_ssize_t idx, Py_ssize_t n) noexcept nogil:
    # edge-inclusive reflection, period 2n: a b c | c b a | a b c ...
    cdef Py_ssize_t m = idx % (2 * n)
    if m < 0:
        m += 2 * n
    if m >= n:
        m = 2 * n - 1 - m
    return m


def conv2d_same(double[:, ::1] image, double complex[:, ::1] kernel):
    cdef Py_ssize_t rows = image.shape[0], cols = image.shape[1]
    cdef Py_ssize_t kr = kernel.shape[0], kc = kernel.shape[1]
    cdef Py_ssize_t cr = kr // 2, cc = kc // 2
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((2, rows, cols))
    cdef double[:, :, ::1] acc = out
    cdef double[:, ::1] kre = np.ascontiguousarray(np.real(kernel))
    cdef double[:, ::1] kim = np.ascontiguousarray(np.imag(kernel))
    # mirrored padded copy: the inner loops then run with unit strides and
    # no index arithmetic beyond increments
    cdef double[:, ::1] padded = np.empty((rows + 2 * cr, cols + 2 * cc))
    cdef Py_ssize_t i, j, u, v, mi
    cdef double pix, sr, si
    with nogil:
        for i in range(rows + 2 * cr):
            mi = mirror(i - cr, rows)
            for j in range(cols + 2 * cc):
                padded[i, j] = image[mi, mirror(j - cc, cols)]
        for i in range(rows):
            for j in range(cols):
                sr = 0.0
                si = 0.0
                # out[i, j] needs ext[i - u + cr] = padded[i - u + 2cr]
                for u in range(kr):
                    for v in range(kc):
                        pix = padded[i + 2 * cr - u, j + 2 * cc - v]
                        sr += kre[u, v] * pix
                        si += kim[u, v] * pix
                acc[0, i, j] = sr
                acc[1, i, j] = si
    return out[0] + 1j * out[1]


def tplbp_codes(double[:, ::1] image, long[::1] dy, long[::1] dx,
                int w, int alpha, double tau,
                Py_ssize_t r0, Py_ssize_t r1, Py_ssize_t c0, Py_ssize_t c1):
    cdef Py_ssize_t rows = image.shape[0], cols = image.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out = np.zeros((rows, cols),
                                                         dtype=np.int32)
    cdef cnp.int32_t[:, ::1] codes = out
    cdef Py_ssize_t n_patches = dy.shape[0]
    cdef Py_ssize_t hw = w // 2
    cdef double[::1] dist = np.empty(n_patches)
    cdef Py_ssize_t pr, pc, i, dr, dc
    cdef double acc, diff
    cdef cnp.int32_t code
    if r0 >= r1 or c0 >= c1:
        return out
    with nogil:
        for pr in range(r0, r1):
            for pc in range(c0, c1):
                for i in range(n_patches):
                    acc = 0.0
                    for dr in range(-hw, hw + 1):
                        for dc in range(-hw, hw + 1):
                            diff = (image[pr + dy[i] + dr, pc + dx[i] + dc]
                                    - image[pr + dr, pc + dc])
                            acc += diff * diff
                    dist[i] = sqrt(acc)
                code = 0
                for i in range(n_patches):
                    if dist[i] - dist[(i + alpha) % n_patches] >= tau:
                        code |= <cnp.int32_t>1 << i
                codes[pr, pc] = code
    return out
