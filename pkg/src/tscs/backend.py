"""Kernel backend selection.

The greedy pursuit loop is the hot kernel of the recovery experiments.  At
import time the compiled extension is preferred when present; the pure-NumPy
twin is the fallback.  ``TSCS_BACKEND`` forces a choice (``auto``,
``compiled`` or ``python``).  Both kernels implement the same contract; see
``_omp_np.greedy_path``.
"""

from __future__ import annotations

import os

from . import _omp_np

try:
    from . import _omp_cy
except ImportError:  # extension not built; fall back silently
    _omp_cy = None

_FORCED = os.environ.get("TSCS_BACKEND", "auto").lower()
if _FORCED not in ("auto", "compiled", "python"):
    raise RuntimeError(f"TSCS_BACKEND must be auto, compiled or python, got {_FORCED!r}")
if _FORCED == "compiled" and _omp_cy is None:
    raise RuntimeError("TSCS_BACKEND=compiled but the compiled kernel is not built")

if _FORCED == "python" or _omp_cy is None:
    _active = _omp_np
    _active_name = "python"
else:
    _active = _omp_cy
    _active_name = "compiled"


def backend_name() -> str:
    """Name of the kernel backend in use: ``compiled`` or ``python``."""
    return _active_name


def compiled_available() -> bool:
    return _omp_cy is not None


def greedy_path(a, y, k, tol):
    """Dispatch to the active kernel; see ``_omp_np.greedy_path``."""
    return _active.greedy_path(a, y, k, tol)
