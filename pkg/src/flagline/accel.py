"""Numba acceleration switch.

Hot kernels in :mod:`flagline.kernels` exist in two flavors: an
``@njit`` loop version and a vectorized pure-numpy version. The JIT path
is used when numba imports cleanly and ``FLAGLINE_NUMBA`` is not set to
``0``/``false``/``no``; otherwise everything falls back to numpy. The
two paths are kept arithmetically identical (same operation order, same
dtypes) and ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

_flag = os.environ.get("FLAGLINE_NUMBA", "1").strip().lower()
_WANT_NUMBA = _flag not in ("0", "false", "no", "off")

if _WANT_NUMBA:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """No-op decorator so kernel modules import without numba."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


__all__ = ["njit", "NUMBA_ENABLED"]
