"""Hot-kernel dispatch: the compiled core when importable, else the numpy fallback.

Set ``TNCONV_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "numpy"
if os.environ.get("TNCONV_PURE_PYTHON", "") not in ("1", "true"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
else:  # pragma: no cover
    _impl = _kernels_py

quad_max_affine = _impl.quad_max_affine
min_dist_to_set = _impl.min_dist_to_set

__all__ = ["BACKEND", "quad_max_affine", "min_dist_to_set"]
