"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise the pure
numpy fallback. Set FASTSPIN_PE_PURE=1 to force the fallback (used by the
benchmark and the backend equivalence tests). Both backends produce bit
identical results.
"""

import os

if os.environ.get("FASTSPIN_PE_PURE", "") == "1":
    from . import _purepy as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _purepy as _impl

COMPILED = _impl.COMPILED
symmetrize = _impl.symmetrize
rotate_pair = _impl.rotate_pair
scale_modes = _impl.scale_modes
decay_rotate = _impl.decay_rotate

__all__ = ["COMPILED", "symmetrize", "rotate_pair", "scale_modes", "decay_rotate"]
