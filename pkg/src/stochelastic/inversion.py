"""Recovery of the strength profile phi from per-receiver statistic values.

The limit of the statistic is linear in phi,

    S(x) = C(m) int |x - zeta|^-2 phi(zeta) d zeta,

so after midpoint discretisation on the grid of D the data satisfy d = A phi.
The recovery minimises

    ||A phi - d||^2 + alpha s^2 ||L phi||^2   subject to phi >= 0,

where L is the forward-difference gradient with phi = 0 on the boundary ring
of cells and ``s = ||A||_2 / ||L||_2`` makes alpha dimensionless.
"""

from dataclasses import asdict, dataclass
import json
import logging

import numpy as np
import scipy.linalg

from .randfield import GridD
from .statistic import rhs_constant

log = logging.getLogger(__name__)

PG_TOL = 1e-10
MAX_ITER = 500


@dataclass
class ForwardMap:
    """Dense forward matrix over the interior cells of ``grid``.

    ``free`` flags the cells carried as unknowns (the boundary ring is held
    at zero, matching the support condition on phi).
    """

    matrix: np.ndarray
    grid: GridD
    receivers: np.ndarray
    free: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, phi):
        """A phi for a full grid field."""
        return self.matrix @ np.asarray(phi, dtype=float).ravel()[self.free.ravel()]

    def gradient_operator(self):
        return gradient_operator(self.grid.shape)[:, self.free.ravel()]


def assemble_forward_map(receivers, grid: GridD, medium, m, boundary_zero=True):
    """A[k, c] = C(m) h^2 / |x_k - zeta_c|^2 with receivers outside the closed box."""
    rec = np.atleast_2d(np.asarray(receivers, dtype=float))
    if np.any(grid.contains(rec, closed=True)):
        raise ValueError("receivers must lie outside the closure of D")
    d = rec[:, None, None, :] - grid.points()[None]
    A = rhs_constant(medium, m) * grid.cell_area / np.sum(d * d, axis=-1)
    free = np.ones(grid.shape, dtype=bool)
    if boundary_zero:
        free[0], free[-1], free[:, 0], free[:, -1] = False, False, False, False
    return ForwardMap(A.reshape(len(rec), -1)[:, free.ravel()], grid, rec, free)


def gradient_operator(shape):
    """Forward differences along both axes, stacked; shape (edges, nx * ny)."""
    nx, ny = shape

    def diff(n):
        return (np.eye(n, k=1) - np.eye(n))[:-1]

    return np.vstack([np.kron(diff(nx), np.eye(ny)), np.kron(np.eye(nx), diff(ny))])


@dataclass
class RecoveryResult:
    phi: np.ndarray
    alpha: float
    misfit: float
    seminorm: float
    iterations: int
    converged: bool
    pg_norm: float

    def diagnostics(self):
        out = asdict(self)
        out.pop("phi")
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.diagnostics(), fh, indent=2)

    def to_csv(self, path, grid: GridD):
        pts = grid.points().reshape(-1, 2)
        arr = np.column_stack([pts, np.asarray(self.phi).ravel()])
        np.savetxt(path, arr, delimiter=",", header="x,y,phi", comments="", fmt="%.10g")


def _pg_norm(x, g):
    # projected gradient for the bound x >= 0
    pg = np.where(x > 0, g, np.minimum(g, 0.0))
    return float(np.linalg.norm(pg))


def tikhonov_solve(fmap: ForwardMap, d, alpha, tol=PG_TOL, max_iter=MAX_ITER, x0=None):
    """Nonnegative gradient-seminorm Tikhonov solution.

    Gradient projection with subspace steps: each iteration takes a projected
    steepest-descent step with Armijo backtracking from step 1/||H||_2 doubled
    up to 2^10 times, then solves the normal equations on the current free set
    (cells with phi > 0) and moves along that direction with a projected line
    search.  Stops when the projected-gradient norm falls below
    ``tol * ||A^T d||``; otherwise the result is flagged as not converged.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    A = fmap.matrix
    d = np.asarray(d, dtype=float)
    if d.shape != (A.shape[0],):
        raise ValueError(f"data length {d.shape} does not match {A.shape[0]} receivers")
    L = fmap.gradient_operator()
    scale = (np.linalg.norm(A, 2) / np.linalg.norm(L, 2)) ** 2
    H = A.T @ A + alpha * scale * (L.T @ L)
    b = A.T @ d
    lip = np.linalg.norm(H, 2)
    target = tol * max(np.linalg.norm(b), np.finfo(float).tiny)

    def f(x):
        return 0.5 * x @ (H @ x) - b @ x

    x = np.zeros(A.shape[1]) if x0 is None else np.maximum(np.asarray(x0, float), 0)
    g = H @ x - b
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # projected steepest descent
        t = 1.0 / lip
        fx = f(x)
        for _ in range(10):
            trial = np.maximum(x - 2 * t * g, 0.0)
            if f(trial) <= fx + 1e-4 * g @ (trial - x):
                t *= 2
            else:
                break
        x = np.maximum(x - t * g, 0.0)
        g = H @ x - b

        # Newton step on the free set
        free = x > 0
        if free.any():
            Hf = H[np.ix_(free, free)]
            try:
                p = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hf), g[free])
            except np.linalg.LinAlgError:
                p = -np.linalg.lstsq(Hf, g[free], rcond=None)[0]
            fx = f(x)
            step = 1.0
            for _ in range(40):
                trial = x.copy()
                trial[free] = np.maximum(x[free] + step * p, 0.0)
                if f(trial) <= fx + 1e-4 * g @ (trial - x):
                    x = trial
                    break
                step *= 0.5
            g = H @ x - b

        pg = _pg_norm(x, g)
        if pg <= target:
            converged = True
            break
    pg = _pg_norm(x, g)
    if not converged:
        log.warning("tikhonov_solve: no convergence after %d iterations (pg=%.2e)", it, pg)
    phi = np.zeros(fmap.grid.shape)
    phi[fmap.free] = x
    return RecoveryResult(
        phi=phi,
        alpha=float(alpha),
        misfit=float(np.linalg.norm(A @ x - d)),
        seminorm=float(np.linalg.norm(L @ x)),
        iterations=it,
        converged=converged,
        pg_norm=pg,
    )


def alpha_sweep(fmap, d, alphas):
    """One solve per alpha (ascending order), warm-started along the sweep."""
    alphas = sorted(float(a) for a in alphas)
    if not alphas:
        raise ValueError("alpha list must be nonempty")
    out = []
    x0 = None
    for a in alphas:
        res = tikhonov_solve(fmap, d, a, x0=x0)
        x0 = res.phi[fmap.free]
        out.append(res)
    return out


def discrepancy_choice(results, d, noise_level, tau=1.1):
    """Morozov rule: the largest alpha with misfit <= tau * noise_level * ||d||.

    Falls back to the smallest alpha when no candidate meets the bound.
    """
    delta = tau * noise_level * float(np.linalg.norm(d))
    ok = [r for r in results if r.misfit <= delta]
    if not ok:
        log.warning("no alpha meets the discrepancy bound %.3e; using the smallest", delta)
        return min(results, key=lambda r: r.alpha)
    return max(ok, key=lambda r: r.alpha)


def relative_error(phi_hat, phi_true):
    phi_true = np.asarray(phi_true, dtype=float)
    return float(np.linalg.norm(np.asarray(phi_hat) - phi_true) / np.linalg.norm(phi_true))


def add_multiplicative_noise(d, level, seed):
    """d * (1 + level * eps) with standard normal eps."""
    rng = np.random.default_rng(seed)
    return np.asarray(d) * (1 + level * rng.standard_normal(np.shape(d)))


def best_alpha(results, phi_true):
    errs = [relative_error(r.phi, phi_true) for r in results]
    k = int(np.argmin(errs))
    return results[k], errs[k]


def l_curve(results):
    """(alpha, misfit, seminorm) triples for plotting."""
    return [(r.alpha, r.misfit, r.seminorm) for r in results]


def default_alphas():
    return [10.0**k for k in range(-6, 0)]

