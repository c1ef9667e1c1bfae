"""Hot kernels with a compiled implementation and a NumPy fallback.

The Cython extension is preferred. Set ``CQLQG_PURE_PYTHON=1`` to force the
fallback, e.g. for benchmarking or on platforms without a compiler.
"""
import os

from . import _fallback

BACKEND = "python"
trsyl = _fallback.trsyl

if os.environ.get("CQLQG_PURE_PYTHON", "") in ("", "0"):
    try:
        from ._csylv import trsyl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

__all__ = ["BACKEND", "trsyl"]
