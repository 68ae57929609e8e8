"""The two element-wise nonlinearities shared by every solver variant.

``soft_threshold`` maps the internal state ``u`` to the output ``x``;
``project_box`` is its complement ``u - x``, the Euclidean projection of
``u`` onto the box ``[-kappa, kappa]^n``.  Both are computed from the same
clamp, so ``soft_threshold(u) + project_box(u)`` reproduces ``u`` to within
one rounding of the subtraction ``u - clamp(u)``.

At ``|u_i| == kappa`` the two branches of the threshold agree (both give 0),
so ``sign(0)`` never enters the computation.
"""
import numpy as np

from lpnn_lca._backend import kernels

DEFAULT_KAPPA = 1.0


def _check(u, kappa):
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    return np.ascontiguousarray(u, dtype=np.float64)


def soft_threshold(u, kappa=DEFAULT_KAPPA):
    """Element-wise soft threshold.

    Returns 0 where ``|u_i| <= kappa`` and ``u_i - kappa*sign(u_i)``
    elsewhere.  Accepts any array shape.
    """
    arr = _check(u, kappa)
    out = np.empty_like(arr)
    kernels.soft_threshold(arr.reshape(-1), float(kappa), out.reshape(-1))
    return out


def project_box(u, kappa=DEFAULT_KAPPA):
    """Clamp every element of ``u`` into ``[-kappa, kappa]``."""
    arr = _check(u, kappa)
    out = np.empty_like(arr)
    kernels.project_box(arr.reshape(-1), float(kappa), out.reshape(-1))
    return out
