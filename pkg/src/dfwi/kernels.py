"""Time-stepping kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``dfwi._stencil``, Cython) and the numpy
implementations below compute element-for-element identical arithmetic, so
switching backends never changes results.  The backend is chosen once at
import: the extension if it built, numpy otherwise.  ``DFWI_BACKEND=numpy``
(or ``cython``) forces the choice; ``use_backend()`` switches it at runtime,
which the equivalence tests and the benchmark rely on.

Array convention: every 2D array here carries a 2-cell halo of zeros on all
sides (never written), standing in for the zero-Dirichlet exterior of the
Laplacian.  Shapes are (nz + 4, nx + 4), C-contiguous.
"""

import os

import numpy as np

HALO = 2

try:
    from dfwi import _stencil as _ext
except ImportError:
    _ext = None


def _lap_coeffs(inv_dx2, inv_dz2, order):
    if order == 4:
        c1x = (4.0 / 3.0) * inv_dx2
        c2x = (-1.0 / 12.0) * inv_dx2
        c1z = (4.0 / 3.0) * inv_dz2
        c2z = (-1.0 / 12.0) * inv_dz2
        c0 = -2.5 * inv_dx2 + -2.5 * inv_dz2
    else:
        c1x = inv_dx2
        c2x = 0.0
        c1z = inv_dz2
        c2z = 0.0
        c0 = -2.0 * inv_dx2 + -2.0 * inv_dz2
    return c1x, c2x, c1z, c2z, c0


def _np_lap(p, inv_dx2, inv_dz2, order):
    """Laplacian of the halo interior; matches the compiled evaluation order."""
    c1x, c2x, c1z, c2z, c0 = _lap_coeffs(inv_dx2, inv_dz2, order)
    if order == 4:
        lx = c1x * (p[2:-2, 1:-3] + p[2:-2, 3:-1]) + c2x * (p[2:-2, :-4] + p[2:-2, 4:])
        lz = c1z * (p[1:-3, 2:-2] + p[3:-1, 2:-2]) + c2z * (p[:-4, 2:-2] + p[4:, 2:-2])
    else:
        lx = c1x * (p[2:-2, 1:-3] + p[2:-2, 3:-1])
        lz = c1z * (p[1:-3, 2:-2] + p[3:-1, 2:-2])
    return (lx + lz) + c0 * p[2:-2, 2:-2]


def _np_step_forward(out, p, p_old, c, gamma, inv_dx2, inv_dz2, order):
    core = np.s_[2:-2, 2:-2]
    lap = _np_lap(p, inv_dx2, inv_dz2, order)
    out[core] = ((2.0 - gamma[core]) * p[core]
                 - (1.0 - gamma[core]) * p_old[core]) + c[core] * lap


def _np_step_adjoint(out, lam, lam_old, q, gamma, inv_dx2, inv_dz2, order):
    core = np.s_[2:-2, 2:-2]
    lap = _np_lap(q, inv_dx2, inv_dz2, order)
    out[core] = ((2.0 - gamma[core]) * lam[core]
                 - (1.0 - gamma[core]) * lam_old[core]) + lap


def _np_accumulate_image(img, frame, lam, inv_dx2, inv_dz2, order):
    core = np.s_[2:-2, 2:-2]
    f = frame.astype(np.float64)
    lap = _np_lap(f, inv_dx2, inv_dz2, order)
    img[core] = img[core] + lap * lam[core]


def _np_gather_cols(xp, kh, kw, stride, ho, wo, out):
    C = xp.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    out[...] = win.transpose(1, 4, 5, 0, 2, 3).reshape(C * kh * kw, -1)


def _np_scatter_cols(dcols, kh, kw, stride, ho, wo, dxp):
    B, C = dxp.shape[:2]
    d6 = dcols.reshape(C, kh, kw, B, ho, wo)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                d6[:, i, j].transpose(1, 0, 2, 3)


_NUMPY_IMPL = {
    "step_forward": _np_step_forward,
    "step_adjoint": _np_step_adjoint,
    "accumulate_image": _np_accumulate_image,
    "gather_cols": _np_gather_cols,
    "scatter_cols": _np_scatter_cols,
}

_CYTHON_IMPL = None
if _ext is not None:
    _CYTHON_IMPL = {
        "step_forward": _ext.step_forward,
        "step_adjoint": _ext.step_adjoint,
        "accumulate_image": _ext.accumulate_image,
        "gather_cols": _ext.im2col_f32,
        "scatter_cols": _ext.col2im_f32,
    }

_active_name = None
_active = None


def available_backends():
    return ("cython", "numpy") if _CYTHON_IMPL is not None else ("numpy",)


def use_backend(name):
    """Select the kernel backend ('cython', 'numpy' or 'auto')."""
    global _active_name, _active
    if name == "auto":
        name = "cython" if _CYTHON_IMPL is not None else "numpy"
    if name == "cython":
        if _CYTHON_IMPL is None:
            raise ValueError("compiled kernel extension is not available")
        _active = _CYTHON_IMPL
    elif name == "numpy":
        _active = _NUMPY_IMPL
    else:
        raise ValueError(f"unknown backend {name!r}")
    _active_name = name
    return name


def backend_name():
    return _active_name


use_backend(os.environ.get("DFWI_BACKEND", "auto"))


def step_forward(out, p, p_old, c, gamma, inv_dx2, inv_dz2, order):
    """out = (2-gamma)*p - (1-gamma)*p_old + c*lap(p)."""
    _active["step_forward"](out, p, p_old, c, gamma, inv_dx2, inv_dz2, order)


def step_adjoint(out, lam, lam_old, q, gamma, inv_dx2, inv_dz2, order):
    """out = (2-gamma)*lam - (1-gamma)*lam_old + lap(q) with q = c*lam."""
    _active["step_adjoint"](out, lam, lam_old, q, gamma, inv_dx2, inv_dz2, order)


def accumulate_image(img, frame, lam, inv_dx2, inv_dz2, order):
    """img += lap(frame)*lam for one stored float32 forward frame."""
    _active["accumulate_image"](img, frame, lam, inv_dx2, inv_dz2, order)
