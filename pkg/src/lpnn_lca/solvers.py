"""LPNN-LCA dynamics for basis pursuit and their forward-Euler integrator.

All four variants share the same two drives, evaluated at ``x = T(u)``::

    M = -(u - x + Phi^T lam)        stationarity drive
    N = Phi x - b                   primal residual

and differ only in how they combine them:

==================== ====================== ===============
variant              du/dt                  dlam/dt
==================== ====================== ===============
ORIGINAL             M                      N
ORIGINAL_AUGMENTED   M - Phi^T N            N
IMPROVED             M                      N + Phi M
IMPROVED_AUGMENTED   M - Phi^T N            N + Phi M
==================== ====================== ===============

The time constant is fixed at 1.  ``u - x`` is evaluated as
``project_box(u, kappa)``, which is the same quantity computed without the
extra rounding.

Forward Euler with step ``mu`` is stable near the origin only while
``mu * (1 + ||Phi||_2^2) < 2`` for the augmented/improved variants; with
unit-norm columns ``||Phi||_2^2 >= n/m``, see :func:`euler_step_bound`.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from lpnn_lca import _backend
from lpnn_lca.lca_ops import DEFAULT_KAPPA, project_box, soft_threshold
from lpnn_lca.model import Problem


class Variant(enum.IntEnum):
    ORIGINAL = 0
    ORIGINAL_AUGMENTED = 1
    IMPROVED = 2
    IMPROVED_AUGMENTED = 3

    @property
    def augmented(self) -> bool:
        return self in (Variant.ORIGINAL_AUGMENTED, Variant.IMPROVED_AUGMENTED)

    @property
    def improved(self) -> bool:
        return self in (Variant.IMPROVED, Variant.IMPROVED_AUGMENTED)

    @classmethod
    def parse(cls, name: str | Variant) -> Variant:
        if isinstance(name, Variant):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            choices = ", ".join(v.cli_name for v in cls)
            raise ValueError(f"unknown variant {name!r}; choose from {choices}") from None

    @property
    def cli_name(self) -> str:
        return self.name.lower().replace("_", "-")


class DivergenceError(ArithmeticError):
    """A non-finite value appeared in the state."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite state at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    variant: Variant = Variant.IMPROVED_AUGMENTED
    mu: float = 0.1
    kappa: float = DEFAULT_KAPPA
    max_iters: int = 5000
    tol_residual: float = 1e-6
    tol_state: float = 1e-6
    state_trace: bool = False
    lyapunov_trace: bool = False
    residual_trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol_residual > 0 and self.tol_state > 0):
            raise ValueError("tolerances must be > 0")


@dataclass(frozen=True, eq=False)
class SolverState:
    u: np.ndarray
    lam: np.ndarray
    iter: int = 0
    kappa: float = DEFAULT_KAPPA

    @property
    def x(self) -> np.ndarray:
        return soft_threshold(self.u, self.kappa)

    @property
    def w(self) -> np.ndarray:
        """Stacked state ``(u, lam)``."""
        return np.concatenate([self.u, self.lam])

    @classmethod
    def zeros(cls, problem: Problem, kappa: float = DEFAULT_KAPPA) -> SolverState:
        return cls(np.zeros(problem.n), np.zeros(problem.m), 0, kappa)

    @classmethod
    def random(cls, problem: Problem, rng: np.random.Generator, scale: float = 1.0,
               kappa: float = DEFAULT_KAPPA) -> SolverState:
        return cls(scale * rng.standard_normal(problem.n),
                   scale * rng.standard_normal(problem.m), 0, kappa)


@dataclass
class Traces:
    """Per-iteration records; row ``k`` describes the state after ``k`` steps."""

    primal: np.ndarray | None = None
    stationarity: np.ndarray | None = None
    states: np.ndarray | None = None
    lyapunov: np.ndarray | None = None

    def __len__(self):
        for arr in (self.primal, self.states, self.lyapunov):
            if arr is not None:
                return len(arr)
        return 0


@dataclass
class TrialResult:
    x_hat: np.ndarray
    iters_used: int
    converged: bool
    final_residual: float
    final_station: float
    diverged: bool = False
    wall_time: float = 0.0
    final_state: SolverState | None = None
    traces: Traces = field(default_factory=Traces)

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        return "diverged" if self.diverged else "max_iters"


# Matrix-vector products go through these two helpers so the number of
# passes over Phi per derivative evaluation can be counted in tests.
def _matvec(phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return phi @ v


def _rmatvec(phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return phi.T @ v


def _check_dims(state: SolverState, problem: Problem):
    if state.u.shape != (problem.n,) or state.lam.shape != (problem.m,):
        raise ValueError(
            f"state dims (u={state.u.shape}, lam={state.lam.shape}) do not match "
            f"problem (n={problem.n}, m={problem.m})")


def drives(state: SolverState, problem: Problem):
    """Return ``(x, M, N)`` at ``state``."""
    _check_dims(state, problem)
    phi = problem.phi.entries
    p = project_box(state.u, state.kappa)
    x = state.u - p
    M = -(_rmatvec(phi, state.lam)) - p
    N = _matvec(phi, x) - problem.b
    return x, M, N


def derivative(state: SolverState, problem: Problem, config: SolverConfig):
    """Time derivatives ``(du, dlam)`` of the configured variant at ``state``.

    Uses two products with Phi for ORIGINAL, three for the single-modification
    variants and four for IMPROVED_AUGMENTED; never a matrix-matrix product.
    """
    phi = problem.phi.entries
    if state.kappa != config.kappa:
        state = replace(state, kappa=config.kappa)
    _, M, N = drives(state, problem)
    variant = config.variant
    du = M - _rmatvec(phi, N) if variant.augmented else M
    dlam = N + _matvec(phi, M) if variant.improved else N
    return du, dlam


def step(state: SolverState, problem: Problem, config: SolverConfig) -> SolverState:
    """One forward-Euler step; ``state`` is left untouched."""
    du, dlam = derivative(state, problem, config)
    with np.errstate(over="ignore", invalid="ignore"):
        u = state.u + config.mu * du
        lam = state.lam + config.mu * dlam
    if not (np.isfinite(u).all() and np.isfinite(lam).all()):
        raise DivergenceError(state.iter + 1)
    return SolverState(u, lam, state.iter + 1, config.kappa)


def kkt_residuals(state: SolverState, problem: Problem, kappa: float = DEFAULT_KAPPA):
    """``(||Phi x - b||_2, ||u - x + Phi^T lam||_inf)`` at ``x = T(u)``.

    Because ``u - x`` always lies in ``kappa * subdiff ||x||_1``, a zero second
    value certifies the stationarity condition of basis pursuit (with the
    multiplier scaled by ``kappa``).
    """
    _, M, N = drives(replace(state, kappa=kappa), problem)
    return float(np.linalg.norm(N)), float(np.abs(M).max(initial=0.0))


def lyapunov_trace(states, reference) -> np.ndarray:
    """``V_k = 0.5 * ||w_k - w_ref||^2`` with ``w = (u, lam)``.

    ``states`` is a sequence of :class:`SolverState` or a 2-D array whose rows
    are stacked ``(u, lam)`` vectors; ``reference`` likewise.
    """
    if isinstance(states, np.ndarray):
        W = np.atleast_2d(states)
    else:
        states = list(states)
        if not states:
            raise ValueError("empty state sequence")
        W = np.stack([s.w for s in states])
    if W.shape[0] == 0:
        raise ValueError("empty state sequence")
    ref = reference.w if isinstance(reference, SolverState) else np.asarray(reference)
    if ref.shape != W.shape[1:]:
        raise ValueError("reference does not match state dimension")
    d = W - ref
    return 0.5 * np.einsum("ij,ij->i", d, d)


def euler_step_bound(phi) -> float:
    """Largest Euler step for which the linearisation at ``u = 0`` is stable.

    Around a state with every ``|u_i| < kappa`` the augmented and improved
    variants have eigenvalues ``0`` and ``-(1 + s^2)`` per singular value
    ``s`` of Phi, so Euler needs ``mu < 2 / (1 + ||Phi||_2^2)``.
    """
    entries = getattr(phi, "entries", phi)
    s = np.linalg.norm(entries, 2)
    return 2.0 / (1.0 + s * s)


def solve(problem: Problem, config: SolverConfig, init: SolverState | None = None) -> TrialResult:
    """Integrate from ``init`` (default ``u = 0, lam = 0``) until equilibrium.

    Stops when ``||Phi x - b||_2 <= tol_residual`` and the last step moved no
    coordinate of ``(u, lam)`` by more than ``tol_state``, or after
    ``max_iters`` steps.  A non-finite state ends the run with
    ``diverged=True``; whatever traces were recorded up to that point are kept.
    """
    if init is None:
        init = SolverState.zeros(problem, config.kappa)
    _check_dims(init, problem)
    u = np.array(init.u, dtype=np.float64, copy=True)
    lam = np.array(init.lam, dtype=np.float64, copy=True)
    rows = config.max_iters + 1
    res_tr = np.full((rows, 2), np.nan) if config.residual_trace else None
    keep_states = config.state_trace or config.lyapunov_trace
    st_tr = np.empty((rows, problem.n + problem.m)) if keep_states else None

    t0 = time.perf_counter()
    iters, status, primal, station = _backend.kernels.euler_solve(
        problem.phi.entries, problem.b, u, lam, int(config.variant), float(config.mu),
        float(config.kappa), int(config.max_iters), float(config.tol_residual),
        float(config.tol_state), res_tr, st_tr)
    wall = time.perf_counter() - t0

    diverged = status == _backend.DIVERGED
    # on divergence the last recorded row is the state before the blow-up
    recorded = iters if diverged else iters + 1
    traces = Traces()
    if res_tr is not None:
        traces.primal = res_tr[:recorded, 0].copy()
        traces.stationarity = res_tr[:recorded, 1].copy()
    if st_tr is not None:
        states = st_tr[:recorded]
        if config.lyapunov_trace and recorded:
            traces.lyapunov = lyapunov_trace(states, states[-1])
        if config.state_trace:
            traces.states = states.copy()

    final = SolverState(u, lam, init.iter + iters, config.kappa)
    if diverged:
        x_hat = np.full(problem.n, np.nan)
        primal = station = float("nan")
    else:
        x_hat = soft_threshold(u, config.kappa)
    return TrialResult(
        x_hat=x_hat,
        iters_used=iters,
        converged=status == _backend.CONVERGED,
        final_residual=primal,
        final_station=station,
        diverged=diverged,
        wall_time=wall,
        final_state=final,
        traces=traces,
    )


TRACE_HEADER = "# iter primal_residual stationarity lyapunov"


def format_trace(traces: Traces) -> str:
    """Trace dump: header line then ``iter primal stationarity V`` per row.

    ``V`` is written as ``nan`` when the Lyapunov trace was not recorded.
    """
    if traces.primal is None:
        raise ValueError("trace dump needs the residual trace")
    n = len(traces.primal)
    lyap = traces.lyapunov if traces.lyapunov is not None else np.full(n, np.nan)
    lines = [TRACE_HEADER]
    for k in range(n):
        lines.append("%d %.17g %.17g %.17g" % (k, traces.primal[k], traces.stationarity[k], lyap[k]))
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> np.ndarray:
    """Inverse of :func:`format_trace`; returns an ``(rows, 4)`` array."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    return np.array(rows, dtype=np.float64).reshape(-1, 4)
