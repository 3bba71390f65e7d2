"""Nystrom discretisation of the elastic Lippmann-Schwinger equation on a cell grid.

The integral operator ``(K u)(x) = int_D G(x, z) rho(z) u(z) dz`` is collocated
at cell centres.  Off-diagonal blocks use the midpoint rule; the self-cell
block integrates G over the cell in polar coordinates, where the Jacobian
absorbs the logarithmic singularity.  Because the grid is uniform the
operator is a block-Toeplitz convolution, so it is stored as a table of
2x2 blocks indexed by cell offset and applied by FFT.  A dense matrix is
built on request for small grids.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .medium_green import ElasticMedium, green_offset, green_truncated
from .randfield import GridD

DENSE_LIMIT = 2500  # cells; above this the solver switches to FFT-accelerated GMRES
COND_LIMIT = 1e12


class NearSingularError(RuntimeError):
    """Raised when (I + K) is numerically singular for a realization."""


@dataclass(frozen=True)
class Polarization:
    a: tuple

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (2,) or abs(np.hypot(*a) - 1) > 1e-14:
            raise ValueError(f"polarization must be a unit 2-vector, got {self.a}")

    @property
    def vector(self):
        return np.asarray(self.a, dtype=float)


def polarization_pair(alpha=0.0):
    """Orthonormal pair a1 = (cos a, sin a), a2 = (-sin a, cos a)."""
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [-s, c]])


@dataclass
class ScatterRecord:
    receiver: np.ndarray
    omega: float
    pol_index: int
    u_s: np.ndarray
    solver: str


def incident(medium, omega, x, y, a):
    """Incident field G(x, y, omega) a."""
    a = np.asarray(a, dtype=float)
    return green_offset(medium, omega, np.asarray(x, float) - np.asarray(y, float)) @ a


def self_cell_integral(medium, omega, h, n_radial=12, n_levels=30, n_angle=16):
    """Integral of G over the square cell [-h/2, h/2]^2 (a multiple of I).

    By the symmetry of the square the dyad integrates to half its trace, so the
    integrand reduces to a radial function s(r).  The eight congruent triangles
    are covered in polar coordinates with Gauss-Legendre in angle and
    geometrically graded Gauss-Legendre panels in radius.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    tg, twg = np.polynomial.legendre.leggauss(n_angle)
    theta = (tg + 1) * (math.pi / 8)
    wtheta = twg * (math.pi / 8)
    R = 0.5 * h / np.cos(theta)

    # radial panels [R 2^-(k+1), R 2^-k], k < n_levels, plus [0, R 2^-n_levels]
    frac_lo = np.concatenate([2.0 ** -(np.arange(n_levels) + 1), [0.0]])
    frac_hi = np.concatenate([2.0 ** -np.arange(n_levels), [2.0**-n_levels]])
    mid = 0.5 * (frac_lo + frac_hi)
    half = 0.5 * (frac_hi - frac_lo)
    frac = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    wfrac = (half[:, None] * wg[None, :]).ravel()

    r = R[:, None] * frac[None, :]
    wr = R[:, None] * wfrac[None, :]
    offset = np.stack([r, np.zeros_like(r)], axis=-1)
    G = green_offset(medium, omega, offset)
    # radial profile: G_11 on the axis equals diag + coef r^2; G_22 equals diag
    s = 0.5 * (G[..., 0, 0] + G[..., 1, 1])
    inner = np.sum(s * r * wr, axis=1)
    value = 8.0 * np.sum(inner * wtheta)
    return value * np.eye(2)


@dataclass
class DiscreteOperator:
    """K_omega on a cell grid, stored as offset blocks ``table[di, dj]``.

    ``table`` has shape (2 nx - 1, 2 ny - 1, 2, 2); entry (di, dj) holds the
    weighted Green block for cell offset (di - nx + 1, dj - ny + 1).  The
    (i, j) block of the operator is ``table[i - j] * rho[j]``.
    """

    grid: GridD
    rho: np.ndarray
    medium: ElasticMedium
    omega: float
    table: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_cells(self):
        return self.grid.size

    @cached_property
    def _table_hat(self):
        nx, ny = self.grid.shape
        P = (2 * nx, 2 * ny)
        circ = np.zeros(P + (2, 2), dtype=complex)
        di = np.arange(-(nx - 1), nx) % P[0]
        dj = np.arange(-(ny - 1), ny) % P[1]
        circ[np.ix_(di, dj)] = self.table
        return np.fft.fft2(circ, axes=(0, 1))

    def matvec(self, u):
        """Apply K to fields of shape (..., nx, ny, 2)."""
        nx, ny = self.grid.shape
        u = np.asarray(u)
        v = u * self.rho[..., None]
        P = (2 * nx, 2 * ny)
        vh = np.fft.fft2(v, s=P, axes=(-3, -2))
        th = self._table_hat
        out_h = np.einsum("xyab,...xyb->...xya", th, vh)
        out = np.fft.ifft2(out_h, axes=(-3, -2))
        return out[..., :nx, :ny, :]

    @cached_property
    def matrix(self):
        """Dense (2 Nc x 2 Nc) matrix; unknowns ordered (cell, component)."""
        nx, ny = self.grid.shape
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ix, iy = ix.ravel(), iy.ravel()
        di = ix[:, None] - ix[None, :] + nx - 1
        dj = iy[:, None] - iy[None, :] + ny - 1
        blocks = self.table[di, dj] * self.rho.ravel()[None, :, None, None]
        n = ix.size
        return blocks.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)

    def norm_proxy(self, iters=30, seed=0):
        """Power-iteration estimate of the spectral norm of K."""
        rng = np.random.default_rng(seed)
        shape = self.grid.shape + (2,)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iters):
            w = self.rmatvec(self.matvec(v))
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return 0.0
            est = math.sqrt(nrm)
            v = w / nrm
        return est

    def rmatvec(self, u):
        """Apply the adjoint K^H."""
        nx, ny = self.grid.shape
        P = (2 * nx, 2 * ny)
        uh = np.fft.fft2(np.asarray(u), s=P, axes=(-3, -2))
        # adjoint of a convolution: correlate with the conjugate-transposed table
        th = np.conj(self._table_hat)
        out_h = np.einsum("xyba,...xyb->...xya", th, uh)
        out = np.fft.ifft2(out_h, axes=(-3, -2))[..., :nx, :ny, :]
        return out * self.rho[..., None]


def offset_table(grid: GridD, medium, omega):
    """Weighted Green blocks for every cell offset, self-cell block included."""
    nx, ny = grid.shape
    h = grid.h
    di = np.arange(-(nx - 1), nx) * h
    dj = np.arange(-(ny - 1), ny) * h
    D = np.stack(np.meshgrid(di, dj, indexing="ij"), axis=-1)
    D[nx - 1, ny - 1] = (h, 0.0)  # placeholder, overwritten below
    table = green_offset(medium, omega, D) * grid.cell_area
    table[nx - 1, ny - 1] = self_cell_integral(medium, omega, h)
    return table


def assemble_operator(grid: GridD, rho, medium, omega):
    """Discretise K_omega for the potential ``rho`` (array or PotentialRealization)."""
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"potential shape {values.shape} does not match grid {grid.shape}")
    table = offset_table(grid, medium, omega)
    weights = np.full(grid.shape, grid.cell_area)
    return DiscreteOperator(grid, values, medium, omega, table, weights)


def _check_outside(grid, y):
    y = np.asarray(y, dtype=float)
    if np.any(grid.contains(y, closed=True)):
        raise ValueError(f"point {y.tolist()} lies in the closure of D")


def source_field(op: DiscreteOperator, y, a):
    """u_0(z) = G(z, y) a at the cell centres; a may be (2,) or (P, 2)."""
    _check_outside(op.grid, y)
    Z = op.grid.points()
    G = green_offset(op.medium, op.omega, Z - np.asarray(y, float))
    return np.einsum("xyab,...b->...xya", G, np.asarray(a, dtype=float))


def born_terms(op: DiscreteOperator, y, a, count):
    """Born sequence u_0, ..., u_count with u_j = -K u_{j-1}."""
    u = source_field(op, y, a)
    terms = [u]
    for _ in range(count):
        u = -op.matvec(u)
        terms.append(u)
    return terms


@dataclass
class DirectSolution:
    u: np.ndarray
    condition: float
    residual: float
    method: str


def solve_direct(op: DiscreteOperator, y, a, seed=None, rtol=1e-12):
    """Solve (I + K) u = u_0 for the total field on the cells.

    Grids up to DENSE_LIMIT cells use an LU factorisation with a 1-norm
    condition estimate; larger grids use GMRES with FFT products, where the
    condition number is not estimated (reported as nan) and breakdown is
    detected through non-convergence instead.
    """
    u0 = source_field(op, y, a)
    if op.n_cells <= DENSE_LIMIT:
        return _solve_dense(op, u0, seed)
    return _solve_gmres(op, u0, seed, rtol)


def _solve_dense(op, u0, seed):
    n = 2 * op.n_cells
    A = np.eye(n, dtype=complex) + op.matrix
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    anorm = np.abs(A).sum(axis=0).max()
    (gecon,) = scipy.linalg.lapack.get_lapack_funcs(("gecon",), (lu,))
    rcond, _ = gecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0 else 1.0 / rcond
    if cond > COND_LIMIT:
        raise NearSingularError(
            f"(I + K) is near singular (condition ~{cond:.2e}) at omega={op.omega}, seed={seed}"
        )
    b = u0.reshape(u0.shape[:-3] + (n,))
    flat = b.reshape(-1, n).T
    x = scipy.linalg.lu_solve((lu, piv), flat, check_finite=False)
    res = np.linalg.norm(A @ x - flat) / np.linalg.norm(flat)
    u = x.T.reshape(u0.shape)
    return DirectSolution(u, cond, float(res), "dense")


def _solve_gmres(op, u0, seed, rtol):
    shape = op.grid.shape + (2,)
    n = 2 * op.n_cells

    def mv(v):
        v = v.reshape(shape)
        return (v + op.matvec(v)).ravel()

    A = scipy.sparse.linalg.LinearOperator((n, n), matvec=mv, dtype=complex)
    flat = u0.reshape(-1, n)
    out = np.empty_like(flat)
    worst = 0.0
    for k, b in enumerate(flat):
        x, info = scipy.sparse.linalg.gmres(A, b, rtol=rtol, atol=0.0, restart=200, maxiter=20)
        res = np.linalg.norm(mv(x) - b) / np.linalg.norm(b)
        if info != 0 or res > 1e3 * rtol:
            raise NearSingularError(
                f"GMRES stalled (residual {res:.2e}) at omega={op.omega}, seed={seed}"
            )
        out[k] = x
        worst = max(worst, res)
    return DirectSolution(out.reshape(u0.shape), math.nan, float(worst), "gmres")


def receiver_green(grid: GridD, medium, omega, x):
    """G(x, z) for receivers x (..., 2) against all cells: (..., nx, ny, 2, 2)."""
    x = np.asarray(x, dtype=float)
    _check_outside(grid, x)
    Z = grid.points()
    return green_offset(medium, omega, x[..., None, None, :] - Z)


def scattered_at_source(op: DiscreteOperator, u, x):
    """u^s(x) = -sum_cells w G(x, z) rho(z) u(z); u has shape (..., nx, ny, 2)."""
    Gx = receiver_green(op.grid, op.medium, op.omega, x)
    return -op.grid.cell_area * np.einsum("xyab,xy,...xyb->...a", Gx, op.rho, u)


def u1_single_scatter(rho, grid: GridD, medium, omega, x, a):
    """Single-scattering field -int rho G(x, z)^2 a dz by the midpoint rule."""
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    Gx = receiver_green(grid, medium, omega, x)
    return _u1_from_green(Gx, values, grid.cell_area, a)


def u1_truncated(rho, grid: GridD, medium, omega, x, a, N=2):
    """As :func:`u1_single_scatter` with the N-term truncated Green tensor."""
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    x = np.asarray(x, dtype=float)
    _check_outside(grid, x)
    Gx = green_truncated(medium, omega, N, x, grid.points())
    return _u1_from_green(Gx, values, grid.cell_area, a)


def _u1_from_green(Gx, values, weight, a):
    G2 = Gx @ Gx
    return -weight * np.einsum("xyab,...xy,b->...a", G2, values, np.asarray(a, dtype=float))
