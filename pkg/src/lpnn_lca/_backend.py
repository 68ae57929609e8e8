"""Pick the compiled kernel when importable, else the numpy fallback.

Set ``LPNN_LCA_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the backend-agreement tests).
"""
import os

from lpnn_lca import _fallback

if os.environ.get("LPNN_LCA_PURE_PYTHON"):
    kernels = _fallback
    NAME = "python"
else:
    try:
        from lpnn_lca import _kernels as kernels
        NAME = "compiled"
    except ImportError:
        kernels = _fallback
        NAME = "python"

CONVERGED = _fallback.CONVERGED
MAX_ITERS = _fallback.MAX_ITERS
DIVERGED = _fallback.DIVERGED
