"""Error measures and per-cell aggregation for the experiment sweeps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

CSV_COLUMNS = (
    "n", "m", "omega", "sigma", "variant", "mu", "trials", "diverged",
    "mean_mse", "median_mse", "std_mse", "mean_rel", "mean_iters", "mean_wall_s",
)


def _pair(x_hat, x_true):
    a = np.asarray(x_hat, dtype=np.float64)
    b = np.asarray(x_true, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(x_hat, x_true) -> float:
    """Mean over elements of the squared error (normalised by n)."""
    a, b = _pair(x_hat, x_true)
    if a.size == 0:
        raise ValueError("empty vectors")
    d = a - b
    return float(d @ d) / a.size


def relative_error(x_hat, x_true) -> float:
    a, b = _pair(x_hat, x_true)
    ref = np.linalg.norm(b)
    if ref == 0:
        raise ValueError("relative error undefined for a zero reference signal")
    return float(np.linalg.norm(a - b) / ref)


@dataclass(frozen=True)
class TrialMetrics:
    mse: float
    rel_error: float
    iters: int
    converged: bool
    wall_time: float = 0.0
    diverged: bool = False


@dataclass(frozen=True)
class SweepKey:
    n: int
    m: int
    omega: int
    sigma: float
    variant: str
    mu: float


@dataclass(frozen=True)
class SweepSummary:
    key: SweepKey
    trials: int
    diverged: int
    converged: int
    mean_mse: float
    median_mse: float
    std_mse: float
    mean_rel: float
    median_rel: float
    std_rel: float
    mean_iters: float
    median_iters: float
    std_iters: float
    mean_wall_s: float

    def row(self, timing: bool = True) -> list[str]:
        k = self.key
        wall = _num(self.mean_wall_s) if timing else "nan"
        return [str(k.n), str(k.m), str(k.omega), _num(k.sigma), k.variant, _num(k.mu),
                str(self.trials), str(self.diverged), _num(self.mean_mse),
                _num(self.median_mse), _num(self.std_mse), _num(self.mean_rel),
                _num(self.mean_iters), wall]


def _num(v) -> str:
    return repr(float(v))


def _stats(values):
    if not values:
        return math.nan, math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(np.median(arr)), float(arr.std())


def aggregate(trials, key: SweepKey) -> SweepSummary:
    """Summarise one sweep cell.

    Diverged trials are counted but left out of every statistic, so a few
    blow-ups cannot swamp the means.  Statistics over an empty remainder are
    NaN.  Standard deviations are population (ddof=0).
    """
    trials = list(trials)
    if not trials:
        raise ValueError("cannot aggregate an empty set of trials")
    kept = [t for t in trials if not t.diverged]
    # sort so the floating-point sums do not depend on completion order
    kept.sort(key=lambda t: (t.mse, t.rel_error, t.iters, t.wall_time))
    mean_mse, med_mse, std_mse = _stats([t.mse for t in kept])
    mean_rel, med_rel, std_rel = _stats([t.rel_error for t in kept])
    mean_it, med_it, std_it = _stats([t.iters for t in kept])
    wall = _stats([t.wall_time for t in kept])[0]
    return SweepSummary(
        key=key, trials=len(trials), diverged=len(trials) - len(kept),
        converged=sum(t.converged for t in trials),
        mean_mse=mean_mse, median_mse=med_mse, std_mse=std_mse,
        mean_rel=mean_rel, median_rel=med_rel, std_rel=std_rel,
        mean_iters=mean_it, median_iters=med_it, std_iters=std_it,
        mean_wall_s=wall,
    )


def summaries_to_csv(summaries, timing: bool = False) -> str:
    """CSV text with the fixed column order of :data:`CSV_COLUMNS`.

    Wall time varies run to run, so ``mean_wall_s`` is written as ``nan``
    unless ``timing`` is set; the remaining columns are reproducible.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        w.writerow(s.row(timing))
    return buf.getvalue()
