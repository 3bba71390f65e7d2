"""Measured checks of the numerical invariants, grouped in suites.

Each check returns a :class:`Check` with the measured value and its bound;
the CLI ``validate`` command serialises them and the acceptance tests assert
on them at full size.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from .lippmann import assemble_operator, polarization_pair, scattered_at_source, solve_direct
from .medium_green import ElasticMedium, green, green_truncated
from .randfield import GridD, derive_seed, sample_fgf, spectral_slope, synthesize_periodic
from .specfun import hankel1, hankel1_truncated
from .statistic import born_scattered, oscillatory_leading_order

SUITES = ("hankel", "green", "field", "born", "oscillatory")


@dataclass
class Check:
    name: str
    value: float
    bound: str
    passed: bool

    def as_dict(self):
        out = asdict(self)
        out["value"] = float(self.value)
        out["passed"] = bool(self.passed)
        return out


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# --- hankel --------------------------------------------------------------------


def truncation_slopes(npts=200):
    """Slope of log|H_n - H_n^(N)| vs log x over [20, 2000] for n, N in {0, 1, 2}."""
    x = np.geomspace(20, 2000, npts)
    out = {}
    for n in (0, 1, 2):
        exact = hankel1(n, x)
        for N in (0, 1, 2):
            out[(n, N)] = loglog_slope(x, np.abs(exact - hankel1_truncated(n, N, x)))
    return out


def wronskian_error(npts=400):
    x = np.geomspace(0.1, 100, npts)
    worst = 0.0
    for n in (0, 1):
        a, b = hankel1(n, x), hankel1(n + 1, x)
        w = a.real * b.imag - b.real * a.imag
        worst = max(worst, float(np.max(np.abs(w + 2 / (np.pi * x)) / (2 / (np.pi * x)))))
    return worst


def recurrence_error(npts=400):
    x = np.geomspace(1e-3, 1e4, npts)
    h0, h1, h2 = (hankel1(n, x) for n in range(3))
    return float(np.max(np.abs(h2 - (2 / x * h1 - h0)) / np.abs(h2)))


def suite_hankel():
    checks = []
    for (n, N), s in truncation_slopes().items():
        checks.append(Check(f"truncation_slope_n{n}_N{N}", s, f"<= {-(N + 1.3)}", s <= -(N + 1.3)))
    w = wronskian_error()
    checks.append(Check("wronskian_rel_error", w, "<= 1e-10", w <= 1e-10))
    r = recurrence_error()
    checks.append(Check("recurrence_rel_error", r, "<= 1e-10", r <= 1e-10))
    return checks


# --- green ---------------------------------------------------------------------


def green_decay_slopes(medium=None, r=2.0, npts=60):
    """Per-entry slopes in omega of |G_ij| and |G_ij - G^(2)_ij| at fixed distance r.

    Returns {(i, j): (slope_G, slope_remainder)} for the three distinct entries.
    """
    medium = ElasticMedium(1.0, 1.0) if medium is None else medium
    w = np.geomspace(10, 1000, npts)
    x = np.array([r / math.sqrt(2), r / math.sqrt(2)])
    y = np.zeros(2)
    G = np.array([green(medium, om, x, y) for om in w])
    G2 = np.array([green_truncated(medium, om, 2, x, y) for om in w])
    return {
        (i, j): (loglog_slope(w, np.abs(G[:, i, j])), loglog_slope(w, np.abs(G[:, i, j] - G2[:, i, j])))
        for i, j in ((0, 0), (0, 1), (1, 1))
    }


def navier_residual(medium, omega, h, x=(0.6, 0.8), y=(0.0, 0.0)):
    """Relative residual of mu Lap G + (lam + mu) grad div G + omega^2 G by central differences.

    Normalised by |omega^2 G| at x; fourth-order stencils would hide the
    h^2 rate, so plain second-order ones are used.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    e = np.eye(2) * h

    def G(p):
        return green(medium, omega, p, y)

    g0 = G(x)
    lap = sum(G(x + e[k]) - 2 * g0 + G(x - e[k]) for k in range(2)) / h**2
    # grad div acting on each column: (grad div u)_i = sum_k d_i d_k u_k
    gd = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for k in range(2):
            if i == k:
                d2 = (G(x + e[i]) - 2 * g0 + G(x - e[i])) / h**2
            else:
                d2 = (G(x + e[i] + e[k]) - G(x + e[i] - e[k]) - G(x - e[i] + e[k]) + G(x - e[i] - e[k])) / (4 * h * h)
            gd[i] += d2[k]
    res = medium.mu * lap + (medium.lam + medium.mu) * gd + omega**2 * g0
    return float(np.linalg.norm(res) / np.linalg.norm(omega**2 * g0))


def suite_green():
    slopes = green_decay_slopes()
    full = max((v[0] for v in slopes.values()), key=lambda v: abs(v + 0.5))
    rem = max((v[1] for v in slopes.values()), key=lambda v: abs(v + 3.5))
    med = ElasticMedium(1.0, 1.0)
    r1 = navier_residual(med, 5.0, 1e-3)
    r2 = navier_residual(med, 5.0, 2e-3)
    rate = math.log2(r2 / r1)
    x = np.array([[1.0, 0.3], [-0.2, 2.0]])
    Gs = green(med, 3.0, x, np.zeros(2))
    sym = float(np.max(np.abs(Gs - np.swapaxes(Gs, -1, -2))))
    return [
        Check("green_slope_worst_entry", full, "-0.5 +- 0.1", abs(full + 0.5) <= 0.1),
        Check("green_remainder_slope_worst_entry", rem, "-3.5 +- 0.3", abs(rem + 3.5) <= 0.3),
        Check("navier_residual_h1e-3", r1, "< 1e-3", r1 < 1e-3),
        Check("navier_residual_rate", rate, "2 +- 0.3", abs(rate - 2) <= 0.3),
        Check("green_symmetry", sym, "<= 1e-15", sym <= 1e-15),
    ]


# --- field ---------------------------------------------------------------------


def periodogram_slope(m, count=200, n=128, h=1.0 / 128, seed=0):
    rng = np.random.default_rng(seed)
    fields = synthesize_periodic((n, n), h, m, rng, count=count)
    return spectral_slope(fields, h)


def probe_moments(m, count, n=32, seed=0, padding_factor=2.0):
    """Skewness, excess kurtosis and standardised mean of five probe functionals."""
    grid = GridD((0.0, 0.0), 1.0 / n, n, n)
    P = grid.points()
    probes = [
        np.exp(-((P[..., 0] - 0.5) ** 2 + (P[..., 1] - 0.5) ** 2) / 0.02),
        np.sin(2 * np.pi * P[..., 0]) * np.sin(np.pi * P[..., 1]),
        (P[..., 0] < 0.3).astype(float),
        P[..., 0] * P[..., 1],
        np.cos(6 * np.pi * P[..., 1]),
    ]
    Psi = np.stack([p.ravel() for p in probes], axis=1) * grid.cell_area
    vals = np.empty((count, len(probes)))
    for k in range(count):
        f = sample_fgf(grid, m, derive_seed(seed, k), padding_factor)
        vals[k] = f.ravel() @ Psi
    c = vals - vals.mean(axis=0)
    sd = c.std(axis=0, ddof=1)
    skew = (c**3).mean(axis=0) / sd**3
    kurt = (c**4).mean(axis=0) / sd**4 - 3
    zmean = np.abs(vals.mean(axis=0)) / (sd / math.sqrt(count))
    return skew, kurt, zmean


def suite_field(m=1.8, count=200, moment_count=2000):
    s = periodogram_slope(m, count)
    skew, kurt, z = probe_moments(m, moment_count)
    # bounds for the reduced sample size scale with 1/sqrt(count)
    sk_bound = 0.1 * math.sqrt(2e4 / moment_count)
    ku_bound = 0.2 * math.sqrt(2e4 / moment_count)
    return [
        Check(f"periodogram_slope_m{m}", s, f"{-m} +- 0.15", abs(s + m) <= 0.15),
        Check("probe_skewness_max", float(np.max(np.abs(skew))), f"< {sk_bound:.3g}",
              bool(np.max(np.abs(skew)) < sk_bound)),
        Check("probe_excess_kurtosis_max", float(np.max(np.abs(kurt))), f"< {ku_bound:.3g}",
              bool(np.max(np.abs(kurt)) < ku_bound)),
        Check("probe_mean_z_max", float(np.max(z)), "<= 3", bool(np.max(z) <= 3)),
    ]


# --- born ----------------------------------------------------------------------


def born_direct_gap(grid, rho, medium, omega, x, terms=8):
    """(norm proxy, ||sum_{j<=terms} u_j - u_direct|| / ||u_direct||) at receiver x."""
    op = assemble_operator(grid, rho, medium, omega)
    pair = polarization_pair(0.0)
    sol = solve_direct(op, x, pair)
    ud = scattered_at_source(op, sol.u, x)
    ub, _ = born_scattered(op, np.atleast_2d(x), pair, terms)
    return op.norm_proxy(), float(np.linalg.norm(ub[0] - ud) / np.linalg.norm(ud)), sol.residual


def rotation_spread(grid, rho, medium, omega, x, alphas=(0.0, math.pi / 6, math.pi / 3), terms=8):
    """Relative spread of sum_j |u^s(a_j(alpha))|^2 over pair angles."""
    op = assemble_operator(grid, rho, medium, omega)
    vals = []
    for a in alphas:
        ub, _ = born_scattered(op, np.atleast_2d(x), polarization_pair(a), terms)
        vals.append(float(np.sum(np.abs(ub) ** 2)))
    vals = np.array(vals)
    return float((vals.max() - vals.min()) / vals.max())


def suite_born(grid, rho, medium, x, omega=5.0):
    proxy, gap, res = born_direct_gap(grid, rho, medium, omega, x)
    spread = rotation_spread(grid, rho, medium, omega, x)
    return [
        Check("norm_proxy", proxy, "< 0.5", proxy < 0.5),
        Check("born8_direct_gap", gap, "< 1e-6", gap < 1e-6),
        Check("direct_residual", res, "<= 1e-10", res <= 1e-10),
        Check("rotation_spread", spread, "<= 1e-12", spread <= 1e-12),
    ]


# --- oscillatory ---------------------------------------------------------------


def _smooth_step(t):
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1, np.exp(-1 / np.maximum(1 - t, 1e-300)), 0.0)
    return a / (a + b)


def disc_taper(radius, width, center=(0.0, 0.0)):
    """Smooth cutoff equal to 1 inside ``radius`` and 0 beyond ``radius + width``."""
    c = np.asarray(center, dtype=float)

    def chi(Z):
        r = np.hypot(Z[..., 0] - c[0], Z[..., 1] - c[1])
        return 1 - _smooth_step((r - radius) / width)

    return chi


DEFAULT_BOX = ((-0.5, -0.5), (0.5, 0.5))


def oscillatory_checks(phi, x, medium, m=1.8, exponents=(1, 0, 0, 1, 2, 2), taper=None,
                       omegas=(50, 100, 200, 400), omega_ratio=200, box=DEFAULT_BOX):
    """Ratio at ``omega_ratio`` (two resolutions) and the slope of |I_2| over ``omegas``."""

    def run(w, oversample=1.5):
        return oscillatory_leading_order(x, w, "2cs", "2cs", exponents, phi, m, medium, box=box,
                                         taper=taper, oversample=oversample)

    ratio = run(omega_ratio)
    fine = run(omega_ratio, oversample=3.0)
    slope = loglog_slope(omegas, [abs(run(w).numeric) for w in omegas])
    return ratio, fine, slope


def suite_oscillatory(phi, x, medium, m=1.8, taper=None, box=DEFAULT_BOX):
    ratio, fine, slope = oscillatory_checks(phi, x, medium, m, taper=taper, box=box)
    r = ratio.ratio.real
    drift = abs(fine.numeric - ratio.numeric) / abs(fine.numeric)
    return [
        Check("ratio_omega200", r, "in [0.9, 1.1]", 0.9 <= r <= 1.1),
        Check("ratio_imag_omega200", ratio.ratio.imag, "|.| <= 0.1", abs(ratio.ratio.imag) <= 0.1),
        Check("resolution_drift", drift, "<= 1e-3", drift <= 1e-3),
        Check("slope", slope, f"{-m} +- 0.15", abs(slope + m) <= 0.15),
    ]
