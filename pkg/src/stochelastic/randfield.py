"""Microlocally isotropic Gaussian potentials built from fractional Gaussian fields.

A realization is ``rho = sqrt(phi) * f_m`` where ``f_m = (-Lap)^{-m/4} W`` is
synthesised spectrally on a zero-padded periodic box.  With the Fourier
convention ``K(r) = (2 pi)^-2 int |xi|^-m e^{i xi.r} d xi`` the synthesis
reproduces the covariance kernel of :func:`kernel_fgf`.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output step; used to derive per-realization seeds."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed of realization ``index`` in a batch: splitmix64(seed XOR index)."""
    return splitmix64((seed & _MASK64) ^ index)


@dataclass(frozen=True)
class GridD:
    """Uniform cell grid on the box [x0, x0 + nx h] x [y0, y0 + ny h].

    Nodes sit at cell centres, which double as collocation points of the
    scattering solver.
    """

    origin: tuple
    h: float
    nx: int
    ny: int

    @classmethod
    def box(cls, lo, hi, h):
        """Grid covering [lo[0], hi[0]] x [lo[1], hi[1]] with spacing close to h."""
        nx = max(1, int(round((hi[0] - lo[0]) / h)))
        ny = max(1, int(round((hi[1] - lo[1]) / h)))
        if not math.isclose(nx * h, hi[0] - lo[0], rel_tol=1e-9) or not math.isclose(
            ny * h, hi[1] - lo[1], rel_tol=1e-9
        ):
            raise ValueError(f"spacing {h} does not tile the box {lo}..{hi}")
        return cls((float(lo[0]), float(lo[1])), float(h), nx, ny)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def upper(self):
        return (self.origin[0] + self.nx * self.h, self.origin[1] + self.ny * self.h)

    def axes(self):
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return xs, ys

    def points(self):
        """Cell centres, shape (nx, ny, 2), indexed [ix, iy]."""
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def contains(self, x, closed=True):
        x = np.asarray(x, dtype=float)
        lo, hi = self.origin, self.upper
        if closed:
            return (lo[0] <= x[..., 0]) & (x[..., 0] <= hi[0]) & (lo[1] <= x[..., 1]) & (x[..., 1] <= hi[1])
        return (lo[0] < x[..., 0]) & (x[..., 0] < hi[0]) & (lo[1] < x[..., 1]) & (x[..., 1] < hi[1])

    def refine(self, factor=2):
        return GridD(self.origin, self.h / factor, self.nx * factor, self.ny * factor)


@dataclass(frozen=True, eq=False)
class FieldSpec:
    m: float
    phi: np.ndarray = field(repr=False)
    seed: int = 0
    padding_factor: float = 2.0

    def __post_init__(self):
        if not 1 < self.m <= 2:
            raise ValueError(f"order m must lie in (1, 2], got {self.m}")
        if self.padding_factor < 2:
            raise ValueError(f"padding factor must be >= 2, got {self.padding_factor}")
        phi = np.asarray(self.phi)
        if np.any(phi < 0):
            raise ValueError("strength profile phi must be nonnegative")
        if phi.ndim == 2 and phi.size and (
            np.any(phi[0]) or np.any(phi[-1]) or np.any(phi[:, 0]) or np.any(phi[:, -1])
        ):
            raise ValueError("strength profile phi must vanish on the boundary layer of D")


@dataclass
class PotentialRealization:
    grid: GridD
    values: np.ndarray
    spec: FieldSpec | None = None


def padded_size(n: int, padding_factor: float) -> int:
    """Smallest even FFT-friendly size >= padding_factor * n."""
    target = int(math.ceil(padding_factor * n))
    size = max(2, target + (target % 2))
    while not _is_smooth(size):
        size += 2
    return size


def _is_smooth(n):
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def spectral_filter(shape, h, m):
    """|xi|^{-m/2} / h on the DFT lattice of a periodic box, zero at xi = 0."""
    kx = 2 * np.pi * np.fft.fftfreq(shape[0], d=h)
    ky = 2 * np.pi * np.fft.fftfreq(shape[1], d=h)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    with np.errstate(divide="ignore"):
        filt = np.where(k2 > 0, k2 ** (-m / 4) / h, 0.0)
    return filt


def synthesize_periodic(shape, h, m, rng, count=None):
    """Realizations of f_m on a periodic box of ``shape`` cells with spacing h.

    Real white noise is filtered in Fourier space, so Hermitian symmetry holds
    by construction and the output is real.  ``count`` stacks realizations on
    a leading axis.
    """
    if not m > 0:
        raise ValueError(f"order m must be positive, got {m}")
    lead = () if count is None else (count,)
    noise = rng.standard_normal(lead + tuple(shape))
    filt = spectral_filter(shape, h, m)
    spec = np.fft.rfft2(noise) * filt[:, : shape[1] // 2 + 1]
    return np.fft.irfft2(spec, s=shape)


def sample_fgf(grid: GridD, m: float, seed: int, padding_factor: float = 2.0):
    """One realization of f_m restricted to the grid; deterministic in its inputs."""
    if not m > 0:
        raise ValueError(f"order m must be positive, got {m}")
    if padding_factor < 2:
        raise ValueError(f"padding factor must be >= 2, got {padding_factor}")
    shape = (padded_size(grid.nx, padding_factor), padded_size(grid.ny, padding_factor))
    rng = np.random.default_rng(seed)
    box = synthesize_periodic(shape, grid.h, m, rng)
    return box[: grid.nx, : grid.ny].copy()


def sample_fgf_batch(grid, m, seed, count, padding_factor=2.0):
    """``count`` realizations using the seeds ``derive_seed(seed, k)``."""
    return np.stack(
        [sample_fgf(grid, m, derive_seed(seed, k), padding_factor) for k in range(count)]
    )


def modulate(field, phi, grid=None, spec=None) -> PotentialRealization:
    """rho = sqrt(phi) * field, pointwise on a shared grid."""
    field = np.asarray(field, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if field.shape[-2:] != phi.shape:
        raise ValueError(f"field shape {field.shape} does not match phi shape {phi.shape}")
    if np.any(phi < 0):
        raise ValueError("strength profile phi must be nonnegative")
    return PotentialRealization(grid, np.sqrt(phi) * field, spec)


def sample_potential(grid: GridD, spec: FieldSpec, index: int | None = None):
    """Sample rho for a FieldSpec; ``index`` selects a derived batch seed."""
    seed = spec.seed if index is None else derive_seed(spec.seed, index)
    f = sample_fgf(grid, spec.m, seed, spec.padding_factor)
    return modulate(f, spec.phi, grid, spec)


DIRAC = "dirac"


def kernel_fgf(m: float, d: int, r):
    """Covariance kernel of f_m in dimension d at distance r.

    Returns ``C1 r^{2H}`` when H = (m - d)/2 is not a nonnegative integer,
    ``C2 r^{2H} ln r`` when it is, and the marker :data:`DIRAC` for m = 0.
    """
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    if m < 0:
        raise ValueError(f"order m must be nonnegative, got {m}")
    if m == 0:
        return DIRAC
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("kernel distance must be positive")
    H = (m - d) / 2
    if H >= 0 and float(H).is_integer():
        k = int(H)
        c2 = (-1) ** (k + 1) * 2.0 ** (1 - m) * math.pi ** (-d / 2) / (math.factorial(k) * math.gamma(m / 2))
        out = c2 * r ** (2 * H) * np.log(r)
    else:
        c1 = 2.0**-m * math.pi ** (-d / 2) * math.gamma((d - m) / 2) / math.gamma(m / 2)
        out = c1 * r ** (2 * H)
    return out[()] if out.ndim == 0 else out


def lattice_kernel(shape, h, m, offsets):
    """Covariance of the discrete periodic synthesis at integer cell offsets.

    ``(1 / L^2) sum_{xi != 0} |xi|^-m cos(xi . r)`` over the DFT lattice, i.e.
    what :func:`synthesize_periodic` realises exactly.
    """
    filt = spectral_filter(shape, h, m)
    power = (filt * h) ** 2
    cov = np.fft.ifft2(power).real / (h * h)
    offsets = np.asarray(offsets, dtype=int)
    return cov[offsets[..., 0] % shape[0], offsets[..., 1] % shape[1]]


def empirical_covariance(realizations, point_pairs):
    """Unbiased sample covariance of the values at each index pair.

    ``realizations`` is a sequence of PotentialRealization (or raw arrays) on a
    common grid; ``point_pairs`` is a sequence of ((ix, iy), (jx, jy)).
    """
    arrays = [getattr(r, "values", r) for r in realizations]
    if len(arrays) < 2:
        raise ValueError("covariance needs at least two realizations")
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError("realizations must share one grid")
    stack = np.stack(arrays)
    out = []
    for (i, j) in point_pairs:
        a = stack[(slice(None),) + tuple(i)]
        b = stack[(slice(None),) + tuple(j)]
        out.append(np.cov(a, b, ddof=1)[0, 1])
    out = np.array(out)
    if np.all(np.ptp(stack.reshape(len(arrays), -1), axis=0) == 0):
        warnings.warn("all realizations are identical; covariance estimate is degenerate")
    return out


def radial_periodogram(fields, h, nbins=40):
    """Radially averaged periodogram of periodic fields (leading batch axis).

    Returns (|xi| bin centres, mean power) with power normalised so that the
    synthesis rule gives |xi|^-m exactly in expectation.
    """
    fields = np.asarray(fields)
    if fields.ndim == 2:
        fields = fields[None]
    n1, n2 = fields.shape[-2:]
    spec = np.abs(np.fft.fft2(fields)) ** 2
    # E|F_k|^2 = N * s_k^2 with s_k = |xi|^{-m/2}/h
    power = spec.mean(axis=0) * h * h / (n1 * n2)
    kx = 2 * np.pi * np.fft.fftfreq(n1, d=h)
    ky = 2 * np.pi * np.fft.fftfreq(n2, d=h)
    kk = np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
    kmin = 2 * np.pi / (max(n1, n2) * h)
    kmax = np.pi / h
    edges = np.geomspace(kmin, kmax, nbins + 1)
    idx = np.digitize(kk.ravel(), edges) - 1
    good = (idx >= 0) & (idx < nbins)
    sums = np.bincount(idx[good], weights=power.ravel()[good], minlength=nbins)
    counts = np.bincount(idx[good], minlength=nbins)
    ksum = np.bincount(idx[good], weights=kk.ravel()[good], minlength=nbins)
    keep = counts > 0
    return ksum[keep] / counts[keep], sums[keep] / counts[keep]


def spectral_slope(fields, h, band=(0.1, 0.5), nbins=40):
    """Least-squares slope of log power vs log |xi| over a fraction of Nyquist."""
    k, p = radial_periodogram(fields, h, nbins)
    nyq = np.pi / h
    sel = (k >= band[0] * nyq) & (k <= band[1] * nyq)
    slope, _ = np.polyfit(np.log(k[sel]), np.log(p[sel]), 1)
    return slope


FIELD_MAGIC = 0x5346474B  # "SFGK"
FIELD_VERSION = 1


def write_field_csv(path, realization: PotentialRealization):
    """Columns ix, iy, x, y, rho in row-major (ix outer) order."""
    grid = realization.grid
    ix, iy = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
    pts = grid.points()
    arr = np.column_stack(
        [ix.ravel(), iy.ravel(), pts[..., 0].ravel(), pts[..., 1].ravel(), realization.values.ravel()]
    )
    np.savetxt(path, arr, delimiter=",", header="ix,iy,x,y,rho", comments="",
               fmt=["%d", "%d", "%.17g", "%.17g", "%.17g"])


def write_field_binary(path, realization: PotentialRealization, m=None):
    """Little-endian float64 file: 8-value header then the row-major values.

    Header: magic, version, n_x, n_y, h, origin_x, origin_y, m.
    """
    grid = realization.grid
    if m is None:
        m = realization.spec.m if realization.spec is not None else float("nan")
    header = np.array(
        [FIELD_MAGIC, FIELD_VERSION, grid.nx, grid.ny, grid.h, grid.origin[0], grid.origin[1], m],
        dtype="<f8",
    )
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(realization.values, dtype="<f8").tobytes())


def read_field_binary(path):
    """Inverse of :func:`write_field_binary`; returns (realization, m)."""
    raw = np.fromfile(path, dtype="<f8")
    if raw.size < 8 or raw[0] != FIELD_MAGIC:
        raise ValueError(f"{path} is not a field file")
    if raw[1] != FIELD_VERSION:
        raise ValueError(f"unsupported field file version {raw[1]}")
    nx, ny = int(raw[2]), int(raw[3])
    if raw.size != 8 + nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {raw.size - 8}")
    grid = GridD((float(raw[5]), float(raw[6])), float(raw[4]), nx, ny)
    return PotentialRealization(grid, raw[8:].reshape(nx, ny).copy()), float(raw[7])
