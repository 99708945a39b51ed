"""Hot datapath kernels with a compiled backend and a pure-Python fallback.

The compiled module is used when it imports; setting ``QCSOC_KERNELS=python``
forces the fallback. Both backends are bit-exact twins.
"""

import os

from . import _pykernels

LUT = _pykernels.LUT
CORDIC = _pykernels.CORDIC


def load(name):
    """Return the kernel module for ``name`` ('c' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "c":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    want = os.environ.get("QCSOC_KERNELS", "").strip().lower()
    if want == "python":
        return "python", _pykernels
    try:
        from . import _ckernels
    except ImportError:
        if want == "c":
            raise
        return "python", _pykernels
    return "c", _ckernels


BACKEND, _impl = _select()

cos_sin = _impl.cos_sin
cos_sin_many = _impl.cos_sin_many
mix = _impl.mix
demod = _impl.demod
reflect = _impl.reflect
