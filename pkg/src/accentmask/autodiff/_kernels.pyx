# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3x3 convolution and 2x2 max-pool kernels.

Convolution is im2col followed by a BLAS ``dgemm`` per sample; the column
buffer is reused across the batch so peak memory stays at one sample's
``(C*9, H*W)`` matrix.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _im2col(const double[:, :, ::1] x, double[:, ::1] cols) noexcept nogil:
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t c, ki, kj, i, j, row, si, sj
    for c in range(C):
        for ki in range(3):
            for kj in range(3):
                row = (c * 3 + ki) * 3 + kj
                for i in range(H):
                    si = i + ki - 1
                    if si < 0 or si >= H:
                        for j in range(W):
                            cols[row, i * W + j] = 0.0
                        continue
                    for j in range(W):
                        sj = j + kj - 1
                        if sj < 0 or sj >= W:
                            cols[row, i * W + j] = 0.0
                        else:
                            cols[row, i * W + j] = x[c, si, sj]


cdef void _col2im(const double[:, ::1] cols, double[:, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t C = gx.shape[0], H = gx.shape[1], W = gx.shape[2]
    cdef Py_ssize_t c, ki, kj, i, j, row, si, sj
    for c in range(C):
        for i in range(H):
            for j in range(W):
                gx[c, i, j] = 0.0
        for ki in range(3):
            for kj in range(3):
                row = (c * 3 + ki) * 3 + kj
                for i in range(H):
                    si = i + ki - 1
                    if si < 0 or si >= H:
                        continue
                    for j in range(W):
                        sj = j + kj - 1
                        if sj >= 0 and sj < W:
                            gx[c, si, sj] += cols[row, i * W + j]


cdef void _gemm(bint trans_a, bint trans_b, int m, int n, int k, double alpha,
                double *a, double *b, double beta, double *c) noexcept nogil:
    # row-major C[m, n] = alpha * op(A) @ op(B) + beta * C, via column-major dgemm on
    # the transposed problem: C^T = op(B)^T @ op(A)^T
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef int lda = k if trans_b else n     # leading dim of B (row-major)
    cdef int ldb = m if trans_a else k     # leading dim of A (row-major)
    cdef int ldc = n
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &lda, a, &ldb, &beta, c, &ldc)


def conv3x3_forward(x, w, b):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64).reshape(w.shape[0], -1)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t O = wv.shape[0], s, o, p
    out = np.empty((N, O, H, W))
    cdef double[:, :, :, ::1] ov = out
    cdef double[:, ::1] cols = np.empty((C * 9, H * W))
    with nogil:
        for s in range(N):
            _im2col(xv[s], cols)
            for o in range(O):
                for p in range(H * W):
                    ov[s, o, p // W, p % W] = bv[o]
            _gemm(False, False, O, H * W, C * 9, 1.0, &wv[0, 0], &cols[0, 0], 1.0, &ov[s, 0, 0, 0])
    return out


def conv3x3_backward(x, w, gy):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64).reshape(w.shape[0], -1)
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t O = wv.shape[0], s
    gx = np.empty((N, C, H, W))
    gw = np.zeros((O, C * 9))
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, ::1] gwv = gw
    cdef double[:, ::1] cols = np.empty((C * 9, H * W))
    cdef double[:, ::1] gcols = np.empty((C * 9, H * W))
    with nogil:
        for s in range(N):
            _im2col(xv[s], cols)
            # gw += gy_s[O, HW] @ cols^T[HW, C9]
            _gemm(False, True, O, C * 9, H * W, 1.0, &gv[s, 0, 0, 0], &cols[0, 0], 1.0, &gwv[0, 0])
            # gcols = w^T[C9, O] @ gy_s[O, HW]
            _gemm(True, False, C * 9, H * W, O, 1.0, &wv[0, 0], &gv[s, 0, 0, 0], 0.0, &gcols[0, 0])
            _col2im(gcols, gxv[s])
    gb = np.asarray(gv).sum(axis=(0, 2, 3))
    return gx, gw.reshape(w.shape), gb


def maxpool2_forward(x):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1]
    cdef Py_ssize_t Ho = xv.shape[2] // 2, Wo = xv.shape[3] // 2
    out = np.empty((N, C, Ho, Wo))
    arg = np.empty((N, C, Ho, Wo), dtype=np.int8)
    cdef double[:, :, :, ::1] ov = out
    cdef cnp.int8_t[:, :, :, ::1] av = arg
    cdef Py_ssize_t n, c, i, j
    cdef double best, v
    cdef cnp.int8_t k
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        # strict '>' keeps the first maximum in row-major order
                        best = xv[n, c, 2 * i, 2 * j]
                        k = 0
                        v = xv[n, c, 2 * i, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = xv[n, c, 2 * i + 1, 2 * j]
                        if v > best:
                            best = v
                            k = 2
                        v = xv[n, c, 2 * i + 1, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 3
                        ov[n, c, i, j] = best
                        av[n, c, i, j] = k
    return out, arg


def maxpool2_backward(gy, arg, in_shape):
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef const cnp.int8_t[:, :, :, ::1] av = np.ascontiguousarray(arg, dtype=np.int8)
    gx = np.zeros(tuple(in_shape))
    cdef double[:, :, :, ::1] gxv = gx
    cdef Py_ssize_t N = gv.shape[0], C = gv.shape[1], Ho = gv.shape[2], Wo = gv.shape[3]
    cdef Py_ssize_t n, c, i, j
    cdef int k
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        k = av[n, c, i, j]
                        gxv[n, c, 2 * i + k // 2, 2 * j + k % 2] = gv[n, c, i, j]
    return gx
