"""Basis pursuit by LPNN-LCA neural dynamics.

The package solves ``min ||x||_1  s.t.  Phi x = b`` by integrating one of four
analog-network dynamics with forward Euler, and ships independent oracles,
error metrics and a sweep CLI (``lpnn-lca``).
"""
from lpnn_lca._backend import NAME as BACKEND
from lpnn_lca.lca_ops import project_box, soft_threshold
from lpnn_lca.model import (
    MeasurementMatrix, Problem, RngSpec, SparseSignal, gen_matrix, gen_problem,
    gen_signal, load_problem, save_problem,
)
from lpnn_lca.solvers import (
    DivergenceError, SolverConfig, SolverState, TrialResult, Variant, derivative,
    kkt_residuals, lyapunov_trace, solve, step,
)

__all__ = [
    "BACKEND", "DivergenceError", "MeasurementMatrix", "Problem", "RngSpec",
    "SolverConfig", "SolverState", "SparseSignal", "TrialResult", "Variant",
    "derivative", "gen_matrix", "gen_problem", "gen_signal", "kkt_residuals",
    "load_problem", "lyapunov_trace", "project_box", "save_problem",
    "soft_threshold", "solve", "step",
]
