"""Problem types and the random ensembles used in the experiments.

Random streams
--------------
Every generator takes an :class:`RngSpec` ``(seed, stream)``.  The pair is
used verbatim as the 128-bit key of a Philox-4x64-10 counter-based generator
(``key = [seed, stream]``, counter starting at 0), so distinct streams are
independent and any (seed, stream) reproduces the same objects bit-for-bit.
Derived quantities are taken from the raw 64-bit outputs ``r`` as follows:

* fair sign: ``+1`` if the top bit of ``r`` is 0, else ``-1``;
* uniform on [0, 1): ``(r >> 11) * 2**-53``;
* Gaussian: Box-Muller on consecutive uniform pairs ``(U1, U2)``,
  ``sqrt(-2 ln(1 - U1)) * (cos(2 pi U2), sin(2 pi U2))``, both outputs used;
* support: partial Fisher-Yates over ``range(n)``; swap position ``i`` with
  ``i + floor(U * (n - i))`` for ``i = 0 .. omega-1``.

Problem text format
-------------------
::

    n m omega sigma
    <m lines: rows of phi, n values each>
    <1 line: b, m values>
    <1 line: dense truth, n values>      (only when omega >= 0)

``omega`` is ``-1`` when no ground truth is stored and ``sigma`` is the
literal ``none`` when the noise level is unknown.  Reals are written with
``%.17g`` so a load reproduces the stored doubles exactly.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COLUMN_NORM_TOL = 1e-12
EXACT_FIT_TOL = 1e-10


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))


def _uniforms(bg, count):
    raw = bg.random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _signs(bg, count):
    raw = bg.random_raw(count)
    return np.where(raw >> np.uint64(63), -1.0, 1.0)


def _gaussians(bg, count):
    pairs = (count + 1) // 2
    u = _uniforms(bg, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.reshape(-1)[:count]


@dataclass(frozen=True)
class SparseSignal:
    """Length-``n`` vector given by its support and nonzero amplitudes.

    The support is stored sorted, amplitudes permuted along with it.
    """

    n: int
    support: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.values):
            raise ValueError("support and values differ in length")
        pairs = sorted(zip((int(i) for i in self.support), (float(v) for v in self.values)))
        object.__setattr__(self, "support", tuple(i for i, _ in pairs))
        object.__setattr__(self, "values", tuple(v for _, v in pairs))
        if len(set(self.support)) != len(self.support):
            raise ValueError("support indices must be distinct")
        if any(not 0 <= i < self.n for i in self.support):
            raise ValueError(f"support index outside [0, {self.n})")
        if any(v == 0.0 for v in self.values):
            raise ValueError("stored amplitudes must be nonzero")

    @property
    def omega(self) -> int:
        return len(self.support)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[list(self.support)] = self.values
        return x

    @classmethod
    def from_dense(cls, x) -> SparseSignal:
        x = np.asarray(x, dtype=np.float64)
        idx = np.flatnonzero(x)
        return cls(x.size, tuple(idx), tuple(x[idx]))


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Dense ``m x n`` matrix, stored row-major (C order, float64).

    With ``validate=True`` (the default) the matrix must be wide (m < n) and
    have unit-norm columns.  Oracle tests that need square or unnormalised
    operators pass ``validate=False``.
    """

    entries: np.ndarray
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate):
        a = np.ascontiguousarray(self.entries, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("measurement matrix must be 2-D")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        if validate:
            m, n = a.shape
            if not m < n:
                raise ValueError(f"need m < n, got m={m}, n={n}")
            norms = np.linalg.norm(a, axis=0)
            if np.max(np.abs(norms - 1.0)) > COLUMN_NORM_TOL:
                raise ValueError("columns must have unit Euclidean norm")

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class Problem:
    phi: MeasurementMatrix
    b: np.ndarray
    truth: SparseSignal | None = None
    sigma: float | None = None

    def __post_init__(self):
        b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if b.size != self.phi.m:
            raise ValueError(f"b has length {b.size}, expected {self.phi.m}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.truth is not None:
            if self.truth.n != self.phi.n:
                raise ValueError("truth dimension does not match phi")
            if not self.sigma:
                gap = np.linalg.norm(self.phi.entries @ self.truth.dense() - b)
                if gap > EXACT_FIT_TOL:
                    raise ValueError(f"noiseless truth does not fit b (gap {gap:.3g})")

    @property
    def m(self) -> int:
        return self.phi.m

    @property
    def n(self) -> int:
        return self.phi.n


def gen_signal(n: int, omega: int, amplitude: float, rng: RngSpec) -> SparseSignal:
    """Spike signal: ``omega`` uniform positions, each value +/-``amplitude``."""
    if not 0 < omega <= n:
        raise ValueError(f"need 0 < omega <= n, got omega={omega}, n={n}")
    if not amplitude > 0:
        raise ValueError("amplitude must be > 0")
    bg = rng.bit_generator()
    perm = np.arange(n)
    u = _uniforms(bg, omega)
    for i in range(omega):
        j = i + int(u[i] * (n - i))
        perm[i], perm[j] = perm[j], perm[i]
    signs = _signs(bg, omega)
    return SparseSignal(n, tuple(perm[:omega]), tuple(amplitude * signs))


def gen_matrix(m: int, n: int, rng: RngSpec) -> MeasurementMatrix:
    """Random +/-1 matrix with every column scaled to unit norm (entries +/-1/sqrt(m))."""
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got m={m}, n={n}")
    signs = _signs(rng.bit_generator(), m * n).reshape(m, n)
    return MeasurementMatrix(signs / np.sqrt(m))


def gen_problem(signal: SparseSignal, phi: MeasurementMatrix, sigma: float,
                rng: RngSpec) -> Problem:
    """Observation ``b = phi @ x + eps`` with ``eps ~ N(0, sigma^2 I)``."""
    if phi.n != signal.n:
        raise ValueError(f"phi has {phi.n} columns but signal has length {signal.n}")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    b = phi.entries @ signal.dense()
    if sigma > 0:
        b = b + sigma * _gaussians(rng.bit_generator(), phi.m)
    return Problem(phi, b, truth=signal, sigma=float(sigma))


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in values)


def dumps_problem(problem: Problem) -> str:
    omega = problem.truth.omega if problem.truth is not None else -1
    sigma = "none" if problem.sigma is None else "%.17g" % problem.sigma
    lines = [f"{problem.n} {problem.m} {omega} {sigma}"]
    lines += [_fmt(row) for row in problem.phi.entries]
    lines.append(_fmt(problem.b))
    if problem.truth is not None:
        lines.append(_fmt(problem.truth.dense()))
    return "\n".join(lines) + "\n"


def loads_problem(text: str) -> Problem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty problem file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError("header must be: n m omega sigma")
    n, m, omega = int(head[0]), int(head[1]), int(head[2])
    sigma = None if head[3] == "none" else float(head[3])
    expected = m + 1 + (1 if omega >= 0 else 0)
    if len(lines) - 1 != expected:
        raise ValueError(f"expected {expected} data lines, found {len(lines) - 1}")
    phi = np.array([[float(t) for t in ln.split()] for ln in lines[1:m + 1]])
    if phi.shape != (m, n):
        raise ValueError(f"matrix block has shape {phi.shape}, header says {(m, n)}")
    b = np.array([float(t) for t in lines[m + 1].split()])
    truth = None
    if omega >= 0:
        truth = SparseSignal.from_dense([float(t) for t in lines[m + 2].split()])
        if truth.n != n or truth.omega != omega:
            raise ValueError("truth line disagrees with header")
    return Problem(MeasurementMatrix(phi), b, truth=truth, sigma=sigma)


def save_problem(problem: Problem, path) -> str:
    """Write ``problem`` to ``path``; returns the SHA-256 of the bytes written."""
    data = dumps_problem(problem).encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_problem(path) -> Problem:
    return loads_problem(Path(path).read_text())
