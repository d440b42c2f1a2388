"""Pure numpy fallback kernels.

Same call signatures and, by construction, the same floating point
operation order as the compiled versions in ``_core.pyx``: results agree
bit for bit, so either backend can be used interchangeably.

All kernels mutate their first argument in place and expect C-contiguous
complex128 arrays of shape (ncomp, nx, ny, nz).
"""

import numpy as np

COMPILED = False


def _mirror_z(c):
    # index map j3 -> -j3 (mod nz) in fft layout: reverse then roll by one
    return np.roll(c[..., ::-1], 1, axis=-1)


def _negate(c):
    # index map j -> -j (mod n) on all three space axes
    out = np.roll(c[:, ::-1, ::-1, ::-1], (1, 1, 1), axis=(1, 2, 3))
    return out


def symmetrize(c, zparity=1):
    """Project onto the reality + z-parity constraint set, pin the zero mode.

    zparity +1 enforces fields even in z, -1 odd in z. The projection is the
    average over the group generated by the z-mirror and the reality map
    conj(c(-j)), orthogonal in the underlying real coefficient space.
    """
    zp = float(zparity)
    t1 = 0.5 * (c + zp * _mirror_z(c))
    out = 0.5 * (t1 + np.conj(_negate(t1)))
    out[:, 0, 0, 0] = 0.0
    c[...] = out
    return c


def rotate_pair(c, cos_t, sin_t, skip_barotropic=False):
    """Rotate the two components by angle theta: (c1,c2) -> e^{theta J}(c1,c2).

    Acting mode by mode this is exactly the phase map a_g -> e^{i g theta} a_g
    on the two circular components. skip_barotropic leaves the j3 = 0 plane
    untouched (rotations that act on the baroclinic part only).
    """
    if skip_barotropic:
        v1 = c[0, :, :, 1:]
        v2 = c[1, :, :, 1:]
    else:
        v1 = c[0]
        v2 = c[1]
    n1 = (cos_t * v1) - (sin_t * v2)
    n2 = (sin_t * v1) + (cos_t * v2)
    v1[...] = n1
    v2[...] = n2
    return c


def scale_modes(c, w):
    """Per-mode multiply: c[i] *= w for every component i."""
    c *= w
    return c


def decay_rotate(c, decay, cos_t, sin_t):
    """Fused linear semigroup step: per-mode decay, then rotate the
    baroclinic plane pair by a mode-independent angle."""
    c *= decay
    rotate_pair(c, cos_t, sin_t, skip_barotropic=True)
    return c
