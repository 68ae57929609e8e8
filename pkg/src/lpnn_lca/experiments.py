"""Seeded trial runner and parameter sweeps.

Each trial draws its matrix, signal and noise from separate Philox streams
derived from ``(cell index, trial index)``, so results do not depend on the
order or process in which trials run.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from lpnn_lca.metrics import SweepKey, TrialMetrics, aggregate, mse, relative_error
from lpnn_lca.oracle import exact_recovery_margin
from lpnn_lca.model import Problem, RngSpec, gen_matrix, gen_problem, gen_signal
from lpnn_lca.solvers import SolverConfig, TrialResult, Variant, format_trace, solve

AMPLITUDE = 5.0
# +/-1 matrices often hit an exact-recovery coefficient of exactly 1 (a tie
# in l1); demand a clear margin
ERC_LIMIT = 1.0 - 1e-6

_MATRIX, _SIGNAL, _NOISE = 0, 1, 2


def trial_streams(seed: int, cell: int, trial: int) -> tuple[RngSpec, RngSpec, RngSpec]:
    """Matrix, signal and noise streams for one trial."""
    base = (cell << 40) | (trial << 4)
    return tuple(RngSpec(seed, base | part) for part in (_MATRIX, _SIGNAL, _NOISE))


def make_problem(n: int, m: int, omega: int, sigma: float, seed: int,
                 cell: int = 0, trial: int = 0) -> Problem:
    rm, rs, rn = trial_streams(seed, cell, trial)
    phi = gen_matrix(m, n, rm)
    signal = gen_signal(n, omega, AMPLITUDE, rs)
    return gen_problem(signal, phi, sigma, rn)


@dataclass(frozen=True)
class Cell:
    n: int
    m: int
    omega: int
    sigma: float
    variant: Variant
    mu: float

    def key(self) -> SweepKey:
        return SweepKey(self.n, self.m, self.omega, float(self.sigma),
                        self.variant.cli_name, float(self.mu))


@dataclass
class RunSpec:
    """A grid of cells, each run ``trials`` times."""

    experiment: str = "sweep"
    n: list[int] = field(default_factory=lambda: [512])
    m: list[int] = field(default_factory=lambda: [100])
    omega: list[int] = field(default_factory=lambda: [15])
    sigma: list[float] = field(default_factory=lambda: [0.0])
    variant: list[str] = field(default_factory=lambda: ["improved-augmented"])
    mu: list[float] = field(default_factory=lambda: [0.1])
    trials: int = 10
    seed: int = 0
    out: str | None = None
    kappa: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-6
    trace: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("n", "m", "omega", "sigma", "variant", "mu"):
            if not getattr(self, name):
                raise ValueError(f"{name} list is empty")
        self.variant = [Variant.parse(v).cli_name for v in self.variant]
        for n, m, omega in itertools.product(self.n, self.m, self.omega):
            if not m < n:
                raise ValueError(f"cell n={n}, m={m} violates m < n")
            if not 0 < omega < m:
                raise ValueError(f"cell m={m}, omega={omega} violates 0 < omega < m")
        if any(s < 0 for s in self.sigma):
            raise ValueError("sigma must be >= 0")

    def cells(self) -> list[Cell]:
        cells = [Cell(n, m, o, float(s), Variant.parse(v), float(mu))
                 for n, m, o, s, v, mu in itertools.product(
                     self.n, self.m, self.omega, self.sigma, self.variant, self.mu)]
        return sorted(cells, key=lambda c: (c.n, c.m, c.omega, c.sigma, int(c.variant), c.mu))

    def config(self, cell: Cell, trace: bool = False) -> SolverConfig:
        return SolverConfig(variant=cell.variant, mu=cell.mu, kappa=self.kappa,
                            max_iters=self.max_iters, tol_residual=self.tol,
                            tol_state=self.tol, residual_trace=trace,
                            lyapunov_trace=trace)

    @classmethod
    def from_json(cls, path, **overrides) -> RunSpec:
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown RunSpec keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def problem_cell_index(cell: Cell) -> int:
    # instances depend only on (n, m, omega): every solver setting and noise
    # level in a sweep sees the same matrix, signal and unit noise draw, so
    # comparisons across variants and sigmas are paired
    h = 0
    for v in (cell.n, cell.m, cell.omega):
        h = (h * 1_000_003 + v) % (1 << 24)
    return h


def trial_metrics(problem: Problem, result: TrialResult) -> TrialMetrics:
    if result.diverged or problem.truth is None:
        err = rel = float("nan")
    else:
        x = problem.truth.dense()
        err, rel = mse(result.x_hat, x), relative_error(result.x_hat, x)
    return TrialMetrics(err, rel, result.iters_used, result.converged,
                        result.wall_time, result.diverged)


def run_trial(cell: Cell, trial: int, seed: int, config: SolverConfig):
    problem = make_problem(cell.n, cell.m, cell.omega, cell.sigma, seed,
                           problem_cell_index(cell), trial)
    result = solve(problem, config)
    return trial_metrics(problem, result), result


def _run_cell(args):
    spec, cell, trace_dir = args
    metrics = []
    for t in range(spec.trials):
        cfg = spec.config(cell, trace=trace_dir is not None)
        tm, result = run_trial(cell, t, spec.seed, cfg)
        metrics.append(tm)
        if trace_dir is not None:
            name = (f"trace_n{cell.n}_m{cell.m}_k{cell.omega}_s{cell.sigma:g}_"
                    f"{cell.variant.cli_name}_mu{cell.mu:g}_t{t}.txt")
            Path(trace_dir, name).write_text(format_trace(result.traces))
    return cell, metrics


def run_sweep(spec: RunSpec, jobs: int = 1, trace_dir=None):
    """Run every cell; returns ``[(cell, [TrialMetrics, ...]), ...]`` in cell order."""
    tasks = [(spec, cell, trace_dir) for cell in spec.cells()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_cell, tasks))
    else:
        done = [_run_cell(t) for t in tasks]
    return done


def summarize(results):
    return [aggregate(metrics, cell.key()) for cell, metrics in results]


def planted_tiny(n: int, omega: int, seed: int, index: int, m: int | None = None,
                 max_draws: int = 1000) -> Problem:
    """Noiseless planted instance whose support satisfies the exact recovery
    condition, so the basis pursuit minimiser is unique and equals the plant.

    Tiny +/-1 matrices often have columns that are averages of others, which
    makes the l1 minimiser non-unique; such draws are skipped.  ``m``
    defaults to ``n - 2``.
    """
    m = n - 2 if m is None else m
    cell = (1 << 23) | (n << 8) | omega
    for draw in range(max_draws):
        problem = make_problem(n, m, omega, 0.0, seed, cell=cell, trial=index * max_draws + draw)
        if exact_recovery_margin(problem.phi, problem.truth.support) < ERC_LIMIT:
            return problem
    raise RuntimeError(f"no draw in {max_draws} met the exact recovery condition")
