# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: acoustic time stepping and convolution patch ops.

Wavefield arrays carry a fixed 2-cell halo of zeros on every side, so the
Laplacian never needs boundary branches: the halo is never written and stands
in for the zero-Dirichlet exterior.

Arithmetic order here must stay element-for-element identical to the numpy
fallback in ``dfwi.kernels`` (the build disables FP contraction for the same
reason); the backend-equivalence tests assert bit-equality.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

HALO = 2


def step_forward(double[:, ::1] out, double[:, ::1] p, double[:, ::1] p_old,
                 double[:, ::1] c, double[:, ::1] gamma,
                 double inv_dx2, double inv_dz2, int order):
    """out = (2-gamma)*p - (1-gamma)*p_old + c*lap(p) on the halo interior."""
    cdef Py_ssize_t nz = out.shape[0]
    cdef Py_ssize_t nx = out.shape[1]
    cdef Py_ssize_t i, j
    cdef double c1x, c2x, c1z, c2z, c0, lx, lz, lap
    with nogil:
        if order == 4:
            c1x = (4.0 / 3.0) * inv_dx2
            c2x = (-1.0 / 12.0) * inv_dx2
            c1z = (4.0 / 3.0) * inv_dz2
            c2z = (-1.0 / 12.0) * inv_dz2
            c0 = -2.5 * inv_dx2 + -2.5 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (p[i, j - 1] + p[i, j + 1]) + c2x * (p[i, j - 2] + p[i, j + 2])
                    lz = c1z * (p[i - 1, j] + p[i + 1, j]) + c2z * (p[i - 2, j] + p[i + 2, j])
                    lap = (lx + lz) + c0 * p[i, j]
                    out[i, j] = ((2.0 - gamma[i, j]) * p[i, j]
                                 - (1.0 - gamma[i, j]) * p_old[i, j]) + c[i, j] * lap
        else:
            c1x = inv_dx2
            c1z = inv_dz2
            c0 = -2.0 * inv_dx2 + -2.0 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (p[i, j - 1] + p[i, j + 1])
                    lz = c1z * (p[i - 1, j] + p[i + 1, j])
                    lap = (lx + lz) + c0 * p[i, j]
                    out[i, j] = ((2.0 - gamma[i, j]) * p[i, j]
                                 - (1.0 - gamma[i, j]) * p_old[i, j]) + c[i, j] * lap


def step_adjoint(double[:, ::1] out, double[:, ::1] lam, double[:, ::1] lam_old,
                 double[:, ::1] q, double[:, ::1] gamma,
                 double inv_dx2, double inv_dz2, int order):
    """out = (2-gamma)*lam - (1-gamma)*lam_old + lap(q), with q = c*lam precomputed.

    Transpose of the forward step: the model factor rides inside the Laplacian.
    """
    cdef Py_ssize_t nz = out.shape[0]
    cdef Py_ssize_t nx = out.shape[1]
    cdef Py_ssize_t i, j
    cdef double c1x, c2x, c1z, c2z, c0, lx, lz, lap
    with nogil:
        if order == 4:
            c1x = (4.0 / 3.0) * inv_dx2
            c2x = (-1.0 / 12.0) * inv_dx2
            c1z = (4.0 / 3.0) * inv_dz2
            c2z = (-1.0 / 12.0) * inv_dz2
            c0 = -2.5 * inv_dx2 + -2.5 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (q[i, j - 1] + q[i, j + 1]) + c2x * (q[i, j - 2] + q[i, j + 2])
                    lz = c1z * (q[i - 1, j] + q[i + 1, j]) + c2z * (q[i - 2, j] + q[i + 2, j])
                    lap = (lx + lz) + c0 * q[i, j]
                    out[i, j] = ((2.0 - gamma[i, j]) * lam[i, j]
                                 - (1.0 - gamma[i, j]) * lam_old[i, j]) + lap
        else:
            c1x = inv_dx2
            c1z = inv_dz2
            c0 = -2.0 * inv_dx2 + -2.0 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (q[i, j - 1] + q[i, j + 1])
                    lz = c1z * (q[i - 1, j] + q[i + 1, j])
                    lap = (lx + lz) + c0 * q[i, j]
                    out[i, j] = ((2.0 - gamma[i, j]) * lam[i, j]
                                 - (1.0 - gamma[i, j]) * lam_old[i, j]) + lap


def accumulate_image(double[:, ::1] img, float[:, ::1] frame, double[:, ::1] lam,
                     double inv_dx2, double inv_dz2, int order):
    """img += lap(frame) * lam; frame is a stored float32 forward snapshot."""
    cdef Py_ssize_t nz = img.shape[0]
    cdef Py_ssize_t nx = img.shape[1]
    cdef Py_ssize_t i, j
    cdef double c1x, c2x, c1z, c2z, c0, lx, lz, lap
    with nogil:
        if order == 4:
            c1x = (4.0 / 3.0) * inv_dx2
            c2x = (-1.0 / 12.0) * inv_dx2
            c1z = (4.0 / 3.0) * inv_dz2
            c2z = (-1.0 / 12.0) * inv_dz2
            c0 = -2.5 * inv_dx2 + -2.5 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (<double> frame[i, j - 1] + <double> frame[i, j + 1]) \
                        + c2x * (<double> frame[i, j - 2] + <double> frame[i, j + 2])
                    lz = c1z * (<double> frame[i - 1, j] + <double> frame[i + 1, j]) \
                        + c2z * (<double> frame[i - 2, j] + <double> frame[i + 2, j])
                    lap = (lx + lz) + c0 * <double> frame[i, j]
                    img[i, j] = img[i, j] + lap * lam[i, j]
        else:
            c1x = inv_dx2
            c1z = inv_dz2
            c0 = -2.0 * inv_dx2 + -2.0 * inv_dz2
            for i in range(2, nz - 2):
                for j in range(2, nx - 2):
                    lx = c1x * (<double> frame[i, j - 1] + <double> frame[i, j + 1])
                    lz = c1z * (<double> frame[i - 1, j] + <double> frame[i + 1, j])
                    lap = (lx + lz) + c0 * <double> frame[i, j]
                    img[i, j] = img[i, j] + lap * lam[i, j]


def im2col_f32(float[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw,
               Py_ssize_t stride, Py_ssize_t ho, Py_ssize_t wo,
               float[:, ::1] out):
    """Gather padded input patches into a (C*kh*kw, B*ho*wo) matrix."""
    cdef Py_ssize_t B = xp.shape[0]
    cdef Py_ssize_t C = xp.shape[1]
    cdef Py_ssize_t b, c, i, j, h, w, row, colbase
    with nogil:
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for b in range(B):
                        colbase = b * ho * wo
                        for h in range(ho):
                            for w in range(wo):
                                out[row, colbase + h * wo + w] = xp[b, c, h * stride + i, w * stride + j]


def col2im_f32(float[:, ::1] dcols, Py_ssize_t kh, Py_ssize_t kw,
               Py_ssize_t stride, Py_ssize_t ho, Py_ssize_t wo,
               float[:, :, :, ::1] dxp):
    """Scatter-add patch gradients back onto the padded input buffer."""
    cdef Py_ssize_t B = dxp.shape[0]
    cdef Py_ssize_t C = dxp.shape[1]
    cdef Py_ssize_t b, c, i, j, h, w, row, colbase
    with nogil:
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for b in range(B):
                        colbase = b * ho * wo
                        for h in range(ho):
                            for w in range(wo):
                                dxp[b, c, h * stride + i, w * stride + j] += dcols[row, colbase + h * wo + w]
