# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels. Arithmetic mirrors _purepy.py operation for operation
so both backends produce bit identical output."""

import numpy as np

COMPILED = True


def symmetrize(double complex[:, :, :, ::1] c, int zparity=1):
    """Reality + z-parity projection, zero mode pinned. In place."""
    cdef Py_ssize_t ncomp = c.shape[0], nx = c.shape[1], ny = c.shape[2], nz = c.shape[3]
    cdef double zp = <double> zparity
    scratch = np.empty((nx, ny, nz), dtype=np.complex128)
    cdef double complex[:, :, ::1] t1 = scratch
    cdef Py_ssize_t i, a, b, k, na, nb, mk
    for i in range(ncomp):
        for a in range(nx):
            for b in range(ny):
                for k in range(nz):
                    mk = (nz - k) % nz
                    t1[a, b, k] = 0.5 * (c[i, a, b, k] + zp * c[i, a, b, mk])
        for a in range(nx):
            na = (nx - a) % nx
            for b in range(ny):
                nb = (ny - b) % ny
                for k in range(nz):
                    mk = (nz - k) % nz
                    c[i, a, b, k] = 0.5 * (t1[a, b, k] + t1[na, nb, mk].conjugate())
        c[i, 0, 0, 0] = 0.0
    return np.asarray(c)


def rotate_pair(double complex[:, :, :, ::1] c, double cos_t, double sin_t,
                bint skip_barotropic=False):
    """In-place rotation (c1, c2) -> (ct c1 - st c2, st c1 + ct c2)."""
    if c.shape[0] != 2:
        raise ValueError("rotate_pair needs a two-component array")
    cdef Py_ssize_t nx = c.shape[1], ny = c.shape[2], nz = c.shape[3]
    cdef Py_ssize_t a, b, k, k0 = 1 if skip_barotropic else 0
    cdef double complex v1, v2
    for a in range(nx):
        for b in range(ny):
            for k in range(k0, nz):
                v1 = c[0, a, b, k]
                v2 = c[1, a, b, k]
                c[0, a, b, k] = (cos_t * v1) - (sin_t * v2)
                c[1, a, b, k] = (sin_t * v1) + (cos_t * v2)
    return np.asarray(c)


def _scale_real(double complex[:, :, :, ::1] c, double[:, :, ::1] w):
    cdef Py_ssize_t i, a, b, k
    for i in range(c.shape[0]):
        for a in range(c.shape[1]):
            for b in range(c.shape[2]):
                for k in range(c.shape[3]):
                    c[i, a, b, k] = c[i, a, b, k] * w[a, b, k]


def _scale_complex(double complex[:, :, :, ::1] c, double complex[:, :, ::1] w):
    cdef Py_ssize_t i, a, b, k
    for i in range(c.shape[0]):
        for a in range(c.shape[1]):
            for b in range(c.shape[2]):
                for k in range(c.shape[3]):
                    c[i, a, b, k] = c[i, a, b, k] * w[a, b, k]


def scale_modes(c, w):
    """Per-mode multiply c *= w, broadcast over the component axis."""
    if isinstance(w, np.ndarray) and w.ndim == 3 and w.flags.c_contiguous:
        if w.dtype == np.float64:
            _scale_real(c, w)
            return c
        if w.dtype == np.complex128:
            _scale_complex(c, w)
            return c
    np.multiply(c, w, out=c)
    return c


def decay_rotate(double complex[:, :, :, ::1] c, double[:, :, ::1] decay,
                 double cos_t, double sin_t):
    """Fused per-mode decay then baroclinic-only rotation. In place."""
    if c.shape[0] != 2:
        raise ValueError("decay_rotate needs a two-component array")
    cdef Py_ssize_t nx = c.shape[1], ny = c.shape[2], nz = c.shape[3]
    cdef Py_ssize_t a, b, k
    cdef double complex v1, v2
    for a in range(nx):
        for b in range(ny):
            for k in range(nz):
                v1 = c[0, a, b, k] * decay[a, b, k]
                v2 = c[1, a, b, k] * decay[a, b, k]
                if k != 0:
                    c[0, a, b, k] = (cos_t * v1) - (sin_t * v2)
                    c[1, a, b, k] = (sin_t * v1) + (cos_t * v2)
                else:
                    c[0, a, b, k] = v1
                    c[1, a, b, k] = v2
    return np.asarray(c)
