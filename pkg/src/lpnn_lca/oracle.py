"""Reference solvers that share no code path with the neural dynamics.

``l0_exhaustive`` enumerates supports on tiny problems and so certifies the
sparsest exact fit; ``ista_lasso`` is plain iterative shrinkage on the LASSO
objective and is used for medium sizes with a small ``kappa``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from lpnn_lca.lca_ops import soft_threshold
from lpnn_lca.model import Problem

L0_MAX_N = 16
L0_MAX_K = 6
FIT_TOL = 1e-10
RIDGE = 1e-12
POWER_ITERS = 50


@dataclass
class OracleResult:
    x_star: np.ndarray
    support: tuple[int, ...]
    objective: float
    exact: bool
    iters: int = 0
    objective_trace: np.ndarray | None = None


def _support_lstsq(A, b):
    k = A.shape[1]
    G = A.T @ A + RIDGE * np.eye(k)
    z = np.linalg.solve(G, A.T @ b)
    return z, float(np.linalg.norm(A @ z - b))


def l0_exhaustive(problem: Problem, k_max: int) -> OracleResult:
    """Sparsest exact fit by enumerating supports of size 0, 1, ..., ``k_max``.

    Within the first size that admits a fit with residual <= 1e-10 the
    minimal-residual support wins (lexicographically first on ties).  If no
    size fits, returns the best residual seen with ``exact=False``.
    """
    phi = problem.phi.entries
    n = problem.n
    if n > L0_MAX_N or k_max > L0_MAX_K:
        raise ValueError(f"l0 search limited to n <= {L0_MAX_N}, k_max <= {L0_MAX_K}; "
                         f"got n={n}, k_max={k_max}")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if problem.sigma:
        raise ValueError("l0 search requires a noiseless problem")
    b = problem.b

    best_any = (float(np.linalg.norm(b)), (), np.zeros(0))
    if best_any[0] <= FIT_TOL:
        return OracleResult(np.zeros(n), (), 0.0, True)
    for k in range(1, k_max + 1):
        best = None
        for supp in itertools.combinations(range(n), k):
            z, res = _support_lstsq(phi[:, supp], b)
            if best is None or res < best[0]:
                best = (res, supp, z)
        if best[0] < best_any[0]:
            best_any = best
        if best[0] <= FIT_TOL:
            break
    res, supp, z = best_any
    x = np.zeros(n)
    x[list(supp)] = z
    return OracleResult(x, tuple(supp), float(len(supp)), res <= FIT_TOL)


def spectral_norm_sq(phi: np.ndarray, iters: int = POWER_ITERS) -> float:
    """Power-method estimate of ``||Phi||_2^2`` from the normalised all-ones start."""
    v = np.ones(phi.shape[1]) / np.sqrt(phi.shape[1])
    est = 0.0
    for _ in range(iters):
        w = phi.T @ (phi @ v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def lasso_objective(phi, b, x, kappa) -> float:
    r = b - phi @ x
    return 0.5 * float(r @ r) + kappa * float(np.abs(x).sum())


def ista_lasso(problem: Problem, kappa: float, tau: float | None = None,
               max_iters: int = 100_000, tol: float = 1e-12,
               record_objective: bool = False) -> OracleResult:
    """Iterative shrinkage for ``0.5*||b - Phi x||^2 + kappa*||x||_1``.

    ``tau`` must lie in ``(0, 1/L)`` with ``L`` the power-method estimate of
    ``||Phi||_2^2``; by default ``tau = 0.99 / L``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    phi = problem.phi.entries
    b = problem.b
    L = spectral_norm_sq(phi)
    if tau is None:
        tau = 0.99 / L
    if not 0 < tau < 1.0 / L:
        raise ValueError(f"tau must lie in (0, {1.0 / L:.6g}), got {tau}")

    x = np.zeros(problem.n)
    trace = [lasso_objective(phi, b, x, kappa)] if record_objective else None
    it = 0
    for it in range(1, max_iters + 1):
        x_new = soft_threshold(x + tau * (phi.T @ (b - phi @ x)), tau * kappa)
        delta = float(np.abs(x_new - x).max(initial=0.0))
        x = x_new
        if trace is not None:
            trace.append(lasso_objective(phi, b, x, kappa))
        if delta <= tol:
            break
    support = tuple(int(i) for i in np.flatnonzero(x))
    return OracleResult(
        x, support, float(np.abs(x).sum()), False, it,
        np.array(trace) if trace is not None else None)


def exact_recovery_margin(phi, support) -> float:
    """Tropp's exact recovery coefficient ``max_j ||pinv(Phi_S) phi_j||_1`` over
    columns ``j`` outside ``support``.

    A value below 1, together with full column rank of ``Phi_S``, guarantees
    that basis pursuit recovers every signal supported on ``support`` as its
    unique minimiser.  Rank-deficient ``Phi_S`` returns ``inf``.
    """
    phi = np.asarray(getattr(phi, "entries", phi))
    support = list(support)
    rest = [j for j in range(phi.shape[1]) if j not in set(support)]
    sub = phi[:, support]
    if support and np.linalg.svd(sub, compute_uv=False).min() <= 1e-8:
        return float("inf")
    if not rest:
        return 0.0
    coef = np.linalg.pinv(sub) @ phi[:, rest]
    return float(np.abs(coef).sum(axis=0).max())
