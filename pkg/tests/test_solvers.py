import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpnn_lca import _fallback, solvers
from lpnn_lca.experiments import make_problem
from lpnn_lca.lca_ops import project_box, soft_threshold
from lpnn_lca.model import MeasurementMatrix, Problem
from lpnn_lca.solvers import (
    DivergenceError, SolverConfig, SolverState, Variant, derivative, euler_step_bound,
    format_trace, kkt_residuals, lyapunov_trace, parse_trace, solve, step,
)

try:
    from lpnn_lca import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

ALL_VARIANTS = list(Variant)


def reference_derivative(u, lam, phi, b, kappa, variant):
    """Loop-by-loop evaluation of the four dynamics, written from the formulas."""
    m, n = phi.shape
    x = [0.0 if abs(ui) <= kappa else ui - kappa * np.sign(ui) for ui in u]
    M = [-(u[i] - x[i] + sum(phi[j, i] * lam[j] for j in range(m))) for i in range(n)]
    N = [sum(phi[j, i] * x[i] for i in range(n)) - b[j] for j in range(m)]
    du = list(M)
    dl = list(N)
    if variant in (Variant.ORIGINAL_AUGMENTED, Variant.IMPROVED_AUGMENTED):
        du = [M[i] - sum(phi[j, i] * N[j] for j in range(m)) for i in range(n)]
    if variant in (Variant.IMPROVED, Variant.IMPROVED_AUGMENTED):
        dl = [N[j] + sum(phi[j, i] * M[i] for i in range(n)) for j in range(m)]
    return np.array(du), np.array(dl)


def tiny_problem():
    return Problem(MeasurementMatrix(np.array([[1.0, -1.0]])), np.array([2.0]))


class TestWorkedExample:
    """Phi = [1, -1], b = [2], kappa = 1, IMPROVED, mu = 1."""

    cfg = SolverConfig(variant=Variant.IMPROVED, mu=1.0)

    def test_first_derivative(self):
        du, dl = derivative(SolverState(np.zeros(2), np.zeros(1)), tiny_problem(), self.cfg)
        np.testing.assert_allclose(du, [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(dl, [-2.0], atol=1e-15)

    def test_two_steps(self):
        p = tiny_problem()
        s1 = step(SolverState(np.zeros(2), np.zeros(1)), p, self.cfg)
        np.testing.assert_allclose(s1.u, [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(s1.lam, [-2.0], atol=1e-15)
        du, dl = derivative(s1, p, self.cfg)
        np.testing.assert_allclose(du, [2.0, -2.0], atol=1e-15)
        np.testing.assert_allclose(dl, [2.0], atol=1e-15)
        s2 = step(s1, p, self.cfg)
        np.testing.assert_allclose(s2.u, [2.0, -2.0], atol=1e-15)
        np.testing.assert_allclose(s2.lam, [0.0], atol=1e-15)
        assert s2.iter == 2


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_derivative_matches_reference(variant, rng):
    p = make_problem(9, 5, 2, 0.0, seed=1)
    for _ in range(5):
        u = rng.normal(scale=2, size=9)
        lam = rng.normal(size=5)
        cfg = SolverConfig(variant=variant, kappa=0.7)
        du, dl = derivative(SolverState(u, lam, 0, 0.7), p, cfg)
        rdu, rdl = reference_derivative(u, lam, p.phi.entries, p.b, 0.7, variant)
        np.testing.assert_allclose(du, rdu, atol=1e-12)
        np.testing.assert_allclose(dl, rdl, atol=1e-12)


def test_step_is_pure(small_problem):
    s = SolverState(np.ones(64), np.ones(32))
    u0, l0 = s.u.copy(), s.lam.copy()
    step(s, small_problem, SolverConfig())
    np.testing.assert_array_equal(s.u, u0)
    np.testing.assert_array_equal(s.lam, l0)


def test_zero_step_only_advances_counter(small_problem):
    s = SolverState(np.linspace(-3, 3, 64), np.linspace(-1, 1, 32), 4)
    cfg = SolverConfig(mu=1e-300)
    t = step(s, small_problem, cfg)
    np.testing.assert_array_equal(t.u, s.u)
    assert t.iter == 5
    with pytest.raises(ValueError):
        SolverConfig(mu=0.0)


def build_equilibrium(rng, m=6, n=14, kappa=1.0):
    """An exact equilibrium: M = 0 and N = 0 by construction."""
    phi = rng.choice([-1.0, 1.0], size=(m, n)) / np.sqrt(m)
    lam = rng.normal(size=m)
    g = -(phi.T @ lam)
    lam *= kappa / np.abs(g).max()
    g = -(phi.T @ lam)
    i = int(np.argmax(np.abs(g)))
    g[i] = kappa * np.sign(g[i])
    x = np.zeros(n)
    x[i] = np.sign(g[i]) * rng.uniform(0.5, 3.0)
    u = g + x
    b = phi @ x
    return Problem(MeasurementMatrix(phi), b), SolverState(u, lam, 0, kappa)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_equilibrium_is_stationary(variant, rng):
    p, s = build_equilibrium(rng)
    du, dl = derivative(s, p, SolverConfig(variant=variant))
    assert np.abs(du).max() <= 1e-14 and np.abs(dl).max() <= 1e-14
    t = step(s, p, SolverConfig(variant=variant, mu=1.0))
    np.testing.assert_allclose(t.u, s.u, atol=1e-14)
    assert t.iter == 1


class TestKKT:
    def test_origin(self, small_problem):
        s = SolverState.zeros(small_problem)
        primal, station = kkt_residuals(s, small_problem)
        assert primal == pytest.approx(np.linalg.norm(small_problem.b), rel=1e-15)
        assert station == 0.0

    def test_hand_equilibrium(self):
        p = Problem(MeasurementMatrix(np.array([[1.0]]), validate=False), np.array([1.0]))
        primal, station = kkt_residuals(SolverState(np.array([2.0]), np.array([-1.0])), p)
        assert primal == 0.0 and station == 0.0

    def test_converged_run(self, small_problem):
        r = solve(small_problem, SolverConfig(variant=Variant.IMPROVED, mu=0.1,
                                              tol_residual=1e-6, tol_state=1e-6))
        assert r.converged
        primal, station = kkt_residuals(r.final_state, small_problem)
        assert primal <= 1e-5 and station <= 1e-5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_small_derivative_implies_kkt(self, seed):
        # near-equilibrium states from a converged run: tiny derivative => KKT
        p = make_problem(24, 12, 2, 0.0, seed=seed)
        cfg = SolverConfig(variant=Variant.IMPROVED, mu=0.2, tol_residual=1e-12,
                           tol_state=1e-12, max_iters=50_000)
        r = solve(p, cfg)
        du, dl = derivative(r.final_state, p, cfg)
        if max(np.abs(du).max(), np.abs(dl).max()) <= 1e-9:
            scale = 1.0 + np.linalg.norm(p.b)
            primal, station = kkt_residuals(r.final_state, p)
            assert primal <= 1e-7 * scale and station <= 1e-7 * scale


class TestVariantConsistency:
    def test_feasible_point_improved_variants_agree(self, rng, small_problem):
        u = rng.normal(scale=2, size=64)
        x = soft_threshold(u)
        p = Problem(small_problem.phi, small_problem.phi.entries @ x)
        s = SolverState(u, rng.normal(size=32))
        a = derivative(s, p, SolverConfig(variant=Variant.IMPROVED))
        b = derivative(s, p, SolverConfig(variant=Variant.IMPROVED_AUGMENTED))
        np.testing.assert_allclose(a[0], b[0], atol=1e-13)
        np.testing.assert_allclose(a[1], b[1], atol=1e-13)

    def test_stationary_point_multiplier_rates_agree(self, rng, small_problem):
        phi = small_problem.phi.entries
        lam = rng.normal(size=32)
        lam *= 0.9 / np.abs(phi.T @ lam).max()
        s = SolverState(-(phi.T @ lam), lam)
        _, dl_orig = derivative(s, small_problem, SolverConfig(variant=Variant.ORIGINAL))
        _, dl_imp = derivative(s, small_problem, SolverConfig(variant=Variant.IMPROVED))
        np.testing.assert_allclose(dl_orig, dl_imp, atol=1e-13)


@pytest.mark.parametrize("variant,expected", [
    (Variant.ORIGINAL, 2), (Variant.ORIGINAL_AUGMENTED, 3),
    (Variant.IMPROVED, 3), (Variant.IMPROVED_AUGMENTED, 4),
])
def test_matvec_count(variant, expected, monkeypatch, small_problem):
    calls = []

    def mv(phi, v):
        assert phi.ndim == 2 and v.ndim == 1
        calls.append("mv")
        return phi @ v

    def rmv(phi, v):
        assert phi.ndim == 2 and v.ndim == 1
        calls.append("rmv")
        return phi.T @ v

    monkeypatch.setattr(solvers, "_matvec", mv)
    monkeypatch.setattr(solvers, "_rmatvec", rmv)
    derivative(SolverState(np.ones(64), np.ones(32)), small_problem, SolverConfig(variant=variant))
    assert len(calls) == expected


class TestLyapunov:
    def test_zero_at_reference(self, small_problem):
        s = SolverState(np.ones(64), np.ones(32))
        assert lyapunov_trace([s], s)[0] == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            lyapunov_trace([], SolverState(np.zeros(1), np.zeros(1)))

    def test_descent_small_step(self):
        p = make_problem(64, 32, 4, 0.0, seed=17)
        r = solve(p, SolverConfig(variant=Variant.IMPROVED, mu=0.1, tol_residual=1e-10,
                                  tol_state=1e-10, max_iters=20_000, lyapunov_trace=True,
                                  state_trace=True))
        assert r.converged
        V = r.traces.lyapunov
        assert np.all(V >= 0)
        assert np.max(np.diff(V)) <= 1e-10
        dist = np.linalg.norm(r.traces.states - r.traces.states[-1], axis=1)
        assert np.max(np.diff(dist)) <= 1e-10

    def test_state_sequence_input(self, small_problem):
        cfg = SolverConfig(variant=Variant.IMPROVED)
        states = [SolverState.zeros(small_problem)]
        for _ in range(5):
            states.append(step(states[-1], small_problem, cfg))
        V = lyapunov_trace(states, states[-1])
        W = np.stack([s.w for s in states])
        np.testing.assert_allclose(V, 0.5 * np.sum((W - W[-1]) ** 2, axis=1))


class TestSolve:
    def test_tiny_instance_matches_l0(self):
        from lpnn_lca.experiments import planted_tiny
        from lpnn_lca.oracle import l0_exhaustive
        p = planted_tiny(8, 1, seed=0, index=0, m=5)
        oracle = l0_exhaustive(p, 3)
        r = solve(p, SolverConfig(mu=0.1, tol_residual=1e-9, tol_state=1e-9, max_iters=50_000))
        assert r.converged
        assert tuple(np.flatnonzero(r.x_hat)) == oracle.support
        assert np.max(np.abs(r.x_hat - oracle.x_star)) <= 1e-4

    def test_stopping_contract(self, small_problem):
        r = solve(small_problem, SolverConfig(mu=0.1, tol_residual=1e-8, tol_state=1e-8))
        assert r.converged and r.final_residual <= 1e-8

    def test_max_iters(self, small_problem):
        r = solve(small_problem, SolverConfig(mu=0.1, max_iters=5))
        assert not r.converged and not r.diverged and r.iters_used == 5
        assert r.status == "max_iters"

    def test_divergence_reported(self, small_problem):
        r = solve(small_problem, SolverConfig(mu=1.0, residual_trace=True, max_iters=5000))
        assert r.diverged and not r.converged
        assert np.isnan(r.final_residual)
        assert len(r.traces.primal) == r.iters_used
        # norms may overflow before the state itself turns non-finite
        assert np.all(np.isfinite(r.traces.primal[:10]))
        assert not np.isnan(r.traces.primal).any()
        assert r.traces.primal[-1] > 1e6 * r.traces.primal[0]

    def test_step_raises_divergence(self):
        p = tiny_problem()
        s = SolverState(np.array([1e308, -1e308]), np.array([1e308]))
        with pytest.raises(DivergenceError) as info:
            step(s, p, SolverConfig(variant=Variant.IMPROVED_AUGMENTED, mu=10.0))
        assert info.value.iteration == 1

    def test_matches_stepwise_integration(self, small_problem):
        cfg = SolverConfig(variant=Variant.IMPROVED_AUGMENTED, mu=0.1, max_iters=40,
                           state_trace=True, residual_trace=True)
        r = solve(small_problem, cfg)
        s = SolverState.zeros(small_problem)
        for k in range(40):
            np.testing.assert_allclose(r.traces.states[k], s.w, atol=1e-10)
            primal, station = kkt_residuals(s, small_problem)
            assert r.traces.primal[k] == pytest.approx(primal, abs=1e-10)
            assert r.traces.stationarity[k] == pytest.approx(station, abs=1e-10)
            s = step(s, small_problem, cfg)

    def test_init_state_respected(self, small_problem):
        first = solve(small_problem, SolverConfig(mu=0.1, max_iters=30))
        resumed = solve(small_problem, SolverConfig(mu=0.1), init=first.final_state)
        full = solve(small_problem, SolverConfig(mu=0.1))
        assert resumed.iters_used + 30 == full.iters_used
        np.testing.assert_allclose(resumed.x_hat, full.x_hat, atol=1e-12)

    def test_random_init_converges(self, small_problem):
        init = SolverState.random(small_problem, np.random.default_rng(0), scale=3.0)
        r = solve(small_problem, SolverConfig(mu=0.1, tol_residual=1e-8, tol_state=1e-8), init)
        assert r.converged
        np.testing.assert_allclose(r.x_hat, small_problem.truth.dense(), atol=1e-6)

    def test_dimension_mismatch(self, small_problem):
        with pytest.raises(ValueError):
            solve(small_problem, SolverConfig(), SolverState(np.zeros(3), np.zeros(32)))


def test_euler_bound_separates_stable_and_unstable(small_problem):
    bound = euler_step_bound(small_problem.phi)
    assert bound < 0.5  # ||Phi||^2 >= n/m = 2
    ok = solve(small_problem, SolverConfig(mu=0.9 * bound, max_iters=20_000))
    bad = solve(small_problem, SolverConfig(mu=1.1 * bound, max_iters=20_000))
    assert ok.converged
    assert not bad.converged


def test_original_euler_does_not_settle():
    # the plain LPNN-LCA dynamics are oscillatory on the active set; Euler
    # spirals outward even for small steps
    p = make_problem(128, 48, 5, 0.0, seed=2)
    r = solve(p, SolverConfig(variant=Variant.ORIGINAL, mu=0.05, max_iters=3000))
    assert not r.converged
    r_imp = solve(p, SolverConfig(variant=Variant.IMPROVED_AUGMENTED, mu=0.05, max_iters=3000))
    assert r_imp.converged


@pytest.mark.skipif(_kernels is None, reason="compiled kernel not built")
@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_backends_agree(variant):
    p = make_problem(96, 40, 5, 0.001, seed=4)
    out = []
    for mod in (_kernels, _fallback):
        u, lam = np.zeros(96), np.zeros(40)
        tr = np.zeros((301, 2))
        res = mod.euler_solve(p.phi.entries, p.b, u, lam, int(variant), 0.1, 1.0, 300,
                              1e-6, 1e-6, tr, None)
        out.append((res, u, lam, tr))
    (ra, ua, la, ta), (rb, ub, lb, tb) = out
    assert ra[:2] == rb[:2]
    scale = 1.0 + np.abs(ua).max()
    np.testing.assert_allclose(ua, ub, atol=1e-9 * scale)
    np.testing.assert_allclose(la, lb, atol=1e-9 * scale)
    np.testing.assert_allclose(ta[: ra[0] + 1], tb[: rb[0] + 1], rtol=1e-9, atol=1e-12)


class TestTraceFormat:
    def test_roundtrip(self, small_problem):
        r = solve(small_problem, SolverConfig(mu=0.1, residual_trace=True, lyapunov_trace=True))
        text = format_trace(r.traces)
        assert text.splitlines()[0] == "# iter primal_residual stationarity lyapunov"
        arr = parse_trace(text)
        assert arr.shape == (r.iters_used + 1, 4)
        np.testing.assert_array_equal(arr[:, 0], np.arange(r.iters_used + 1))
        np.testing.assert_array_equal(arr[:, 1], r.traces.primal)
        np.testing.assert_array_equal(arr[:, 3], r.traces.lyapunov)
        assert arr[-1, 3] == 0.0

    def test_without_lyapunov(self, small_problem):
        r = solve(small_problem, SolverConfig(mu=0.1, max_iters=3, residual_trace=True))
        arr = parse_trace(format_trace(r.traces))
        assert np.all(np.isnan(arr[:, 3]))

    def test_needs_residuals(self):
        with pytest.raises(ValueError):
            format_trace(solvers.Traces())


def test_variant_parse():
    assert Variant.parse("improved-augmented") is Variant.IMPROVED_AUGMENTED
    assert Variant.parse("ORIGINAL") is Variant.ORIGINAL
    with pytest.raises(ValueError):
        Variant.parse("nope")


def test_state_x_uses_kappa():
    s = SolverState(np.array([3.0, -0.5]), np.zeros(1), 0, 2.0)
    np.testing.assert_array_equal(s.x, [1.0, 0.0])
    np.testing.assert_array_equal(s.u - s.x, project_box(s.u, 2.0))
