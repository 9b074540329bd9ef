"""Kernel backend chosen at import: the compiled extension when it is built,
otherwise the numpy fallback.  ``GAUSSUNRAVEL_PURE_PYTHON=1`` forces the fallback."""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
if not os.environ.get("GAUSSUNRAVEL_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

propagate_dephasing = _impl.propagate_dephasing
bargmann_coefficients = _impl.bargmann_coefficients

__all__ = ["BACKEND", "propagate_dephasing", "bargmann_coefficients"]
