"""Command-line front end: ``lpnn-lca {generate,solve,sweep,verify}``.

Exit status
-----------
0  success / converged
2  usage error (argparse) or invalid parameters
3  solve ran out of iterations without converging
4  solve diverged (non-finite state)
5  verification mismatch
6  I/O error
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from lpnn_lca import _backend
from lpnn_lca.experiments import (
    RunSpec, make_problem, planted_tiny, run_sweep, summarize,
)
from lpnn_lca.metrics import mse, relative_error, summaries_to_csv
from lpnn_lca.model import load_problem, save_problem
from lpnn_lca.oracle import ista_lasso, l0_exhaustive
from lpnn_lca.solvers import SolverConfig, Variant, format_trace, solve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_DIVERGED = 4
EXIT_VERIFY_FAILED = 5
EXIT_IO = 6

VARIANT_CHOICES = [v.cli_name for v in Variant]


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _add_solver_flags(p, multi=False):
    nargs = "+" if multi else None
    p.add_argument("--variant", nargs=nargs, type=str.lower,
                   help=f"one of {', '.join(VARIANT_CHOICES)} (default improved-augmented)")
    p.add_argument("--mu", nargs=nargs, type=float, help="Euler step size (default 0.1)")
    p.add_argument("--kappa", type=float, help="soft-threshold level (default 1)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default 5000)")
    p.add_argument("--tol", type=float, help="residual and state-change tolerance (default 1e-6)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpnn-lca", description="Basis pursuit by LPNN-LCA dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write seeded problem files")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--omega", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trials", type=int, default=1, help="number of problems to write")
    g.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("solve", help="solve one problem file")
    s.add_argument("problem", help="problem file written by 'generate'")
    _add_solver_flags(s)
    s.add_argument("--tol-state", type=float, help="state-change tolerance (default: --tol)")
    s.add_argument("--trace", action="store_true", help="write a per-iteration trace file")
    s.add_argument("--out", help="trace file path (default <problem>.trace.txt)")

    w = sub.add_parser("sweep", help="run a parameter grid and write metrics CSV")
    w.add_argument("--config", help="JSON file with RunSpec fields; flags override it")
    w.add_argument("--n", type=int, nargs="+")
    w.add_argument("--m", type=int, nargs="+")
    w.add_argument("--omega", type=int, nargs="+")
    w.add_argument("--sigma", type=float, nargs="+")
    _add_solver_flags(w, multi=True)
    w.add_argument("--trials", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", help="CSV path (default: stdout)")
    w.add_argument("--trace", action="store_true", help="write per-trial trace files next to --out")
    w.add_argument("--timing", action="store_true",
                   help="fill mean_wall_s (makes the CSV run-dependent)")

    v = sub.add_parser("verify", help="compare the solver against the oracles")
    v.add_argument("--sizes", type=int, nargs="+", required=True, help="signal lengths n <= 16")
    v.add_argument("--instances", type=int, default=50)
    v.add_argument("--max-omega", type=int, default=2)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--ista-n", type=int, nargs="*", default=[64],
                   help="sizes for the ISTA cross-check (m = n/2, omega = 4)")
    v.add_argument("--ista-instances", type=int, default=5)
    _add_solver_flags(v)
    return parser


def _solver_config(args, **extra) -> SolverConfig:
    kw = {}
    if args.variant:
        kw["variant"] = Variant.parse(args.variant)
    for name in ("mu", "kappa", "max_iters"):
        if getattr(args, name, None) is not None:
            kw[name] = getattr(args, name)
    if args.tol is not None:
        kw["tol_residual"] = kw["tol_state"] = args.tol
    kw.update(extra)
    return SolverConfig(**kw)


def cmd_generate(args) -> int:
    if not 0 < args.m < args.n:
        raise CliError(f"need 0 < m < n (got m={args.m}, n={args.n})", EXIT_USAGE)
    if not 0 < args.omega < args.m:
        raise CliError(f"need 0 < omega < m (got omega={args.omega}, m={args.m})", EXIT_USAGE)
    if args.sigma < 0:
        raise CliError("sigma must be >= 0", EXIT_USAGE)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for t in range(args.trials):
            p = make_problem(args.n, args.m, args.omega, args.sigma, args.seed, trial=t)
            path = out / f"problem_n{args.n}_m{args.m}_k{args.omega}_seed{args.seed}_t{t}.txt"
            digest = save_problem(p, path)
            print(f"{digest}  {path}")
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO) from exc
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        problem = load_problem(args.problem)
    except OSError as exc:
        raise CliError(f"cannot read {args.problem}: {exc}", EXIT_IO) from exc
    extra = {"residual_trace": args.trace, "lyapunov_trace": args.trace}
    cfg = _solver_config(args, **extra)
    if args.tol_state is not None:
        cfg = replace(cfg, tol_state=args.tol_state)
    r = solve(problem, cfg)
    print(f"variant      {cfg.variant.cli_name}")
    print(f"mu           {cfg.mu:g}")
    print(f"status       {r.status}")
    print(f"iterations   {r.iters_used}")
    print(f"primal       {r.final_residual:.6e}")
    print(f"stationarity {r.final_station:.6e}")
    print(f"wall_time_s  {r.wall_time:.6f}")
    if problem.truth is not None and not r.diverged:
        x = problem.truth.dense()
        print(f"mse          {mse(r.x_hat, x):.6e}")
        print(f"rel_error    {relative_error(r.x_hat, x):.6e}")
    if args.trace:
        path = Path(args.out) if args.out else Path(f"{args.problem}.trace.txt")
        try:
            path.write_text(format_trace(r.traces))
        except OSError as exc:
            raise CliError(f"cannot write trace {path}: {exc}", EXIT_IO) from exc
        print(f"trace        {path}")
    if r.diverged:
        return EXIT_DIVERGED
    return EXIT_OK if r.converged else EXIT_NOT_CONVERGED


def runspec_from_args(args) -> RunSpec:
    overrides = {
        "n": args.n, "m": args.m, "omega": args.omega, "sigma": args.sigma,
        "variant": args.variant, "mu": args.mu, "trials": args.trials,
        "seed": args.seed, "out": args.out, "kappa": args.kappa,
        "max_iters": args.max_iters, "tol": args.tol,
        "trace": True if args.trace else None,
    }
    if args.config:
        try:
            return RunSpec.from_json(args.config, **overrides)
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc}", EXIT_IO) from exc
    return RunSpec(**{k: v for k, v in overrides.items() if v is not None})


def cmd_sweep(args) -> int:
    spec = runspec_from_args(args)
    trace_dir = None
    if spec.trace:
        trace_dir = Path(spec.out).parent if spec.out else Path(".")
        try:
            trace_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CliError(f"cannot create {trace_dir}: {exc}", EXIT_IO) from exc
    results = run_sweep(spec, jobs=max(1, args.jobs), trace_dir=trace_dir)
    text = summaries_to_csv(summarize(results), timing=args.timing)
    if spec.out:
        try:
            Path(spec.out).parent.mkdir(parents=True, exist_ok=True)
            Path(spec.out).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {spec.out}: {exc}", EXIT_IO) from exc
        print(f"wrote {spec.out} ({len(results)} cells)", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def verify_support(problem, cfg, k_max):
    """Solver vs exhaustive l0 search on one planted instance.

    Returns ``(ok, detail)``.
    """
    oracle = l0_exhaustive(problem, k_max)
    r = solve(problem, cfg)
    if r.diverged or not r.converged:
        return False, f"solver {r.status}"
    supp = tuple(int(i) for i in np.flatnonzero(r.x_hat))
    err = float(np.max(np.abs(r.x_hat - oracle.x_star)))
    ok = oracle.exact and supp == oracle.support and err <= 1e-4
    return ok, f"support {supp} vs {oracle.support}, max err {err:.2e}"


def cmd_verify(args) -> int:
    if any(not 3 <= n <= 16 for n in args.sizes):
        raise CliError("verify sizes must lie in [3, 16]", EXIT_USAGE)
    cfg = _solver_config(args)
    if args.tol is None:
        cfg = replace(cfg, tol_residual=1e-9, tol_state=1e-9,
                      max_iters=cfg.max_iters if args.max_iters else 100_000)
    failures = 0
    total = 0
    for n in args.sizes:
        for i in range(args.instances):
            omega = 1 + i % args.max_omega
            problem = planted_tiny(n, omega, args.seed, i)
            ok, detail = verify_support(problem, cfg, args.max_omega)
            total += 1
            failures += not ok
            print(f"{'PASS' if ok else 'FAIL'} l0   n={n} omega={omega} #{i}: {detail}")
    for n in args.ista_n:
        for i in range(args.ista_instances):
            problem = make_problem(n, n // 2, 4, 0.0, args.seed, cell=(1 << 22) | n, trial=i)
            lasso = ista_lasso(problem, kappa=1e-3)
            r = solve(problem, replace(cfg, variant=Variant.IMPROVED))
            gap = float(np.max(np.abs(lasso.x_star - r.x_hat))) if not r.diverged else float("inf")
            ok = r.converged and gap <= 1e-2
            total += 1
            failures += not ok
            print(f"{'PASS' if ok else 'FAIL'} ista n={n} #{i}: max gap {gap:.2e} ({r.status})")
    print(f"{total - failures}/{total} checks passed (backend: {_backend.NAME})")
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAILED


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
