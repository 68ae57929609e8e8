"""Pure-numpy twin of ``_kernels``; same signatures, same arithmetic order."""
import numpy as np

ORIGINAL, ORIGINAL_AUGMENTED, IMPROVED, IMPROVED_AUGMENTED = range(4)
CONVERGED, MAX_ITERS, DIVERGED = range(3)


def project_box(u, kappa, out):
    np.clip(u, -kappa, kappa, out=out)


def soft_threshold(u, kappa, out):
    np.subtract(u, np.clip(u, -kappa, kappa), out=out)


def euler_solve(phi, b, u, lam, variant, mu, kappa, max_iters,
                tol_residual, tol_state, residual_trace=None, state_trace=None):
    n = phi.shape[1]
    augmented = variant in (ORIGINAL_AUGMENTED, IMPROVED_AUGMENTED)
    improved = variant in (IMPROVED, IMPROVED_AUGMENTED)
    change = 0.0
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            p = np.clip(u, -kappa, kappa)
            x = u - p
            N = phi @ x - b
            M = -(phi.T @ lam) - p
            primal = float(np.sqrt(N @ N))
            station = float(np.abs(M).max()) if n else 0.0
            if residual_trace is not None:
                residual_trace[k, 0] = primal
                residual_trace[k, 1] = station
            if state_trace is not None:
                state_trace[k, :n] = u
                state_trace[k, n:] = lam
            if k > 0 and primal <= tol_residual and change <= tol_state:
                status = CONVERGED
                break
            if k >= max_iters:
                status = MAX_ITERS
                break

            du = M - phi.T @ N if augmented else M
            dl = N + phi @ M if improved else N
            step_u = mu * du
            step_l = mu * dl
            u += step_u
            lam += step_l
            change = max(np.abs(step_u).max(initial=0.0), np.abs(step_l).max(initial=0.0))
            k += 1
            if not (np.isfinite(u).all() and np.isfinite(lam).all()):
                status = DIVERGED
                break
    return k, status, primal, station
