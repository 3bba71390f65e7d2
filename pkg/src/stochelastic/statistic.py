"""Frequency sweeps and the frequency-averaged backscatter statistic.

The statistic at a receiver x is

    S_Q(x) = 1/(Q - 1) int_1^Q omega^{m+2} sum_j |u^s(x, omega, a_j)|^2 d omega

whose almost-sure limit is ``C(m) int |x - zeta|^-2 phi(zeta) d zeta`` with
``C(m) = (c_s^{6-m} + c_p^{6-m}) / (2^{m+6} pi^2)``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import time
import warnings

import numpy as np

from .lippmann import (
    NearSingularError,
    ScatterRecord,
    assemble_operator,
    polarization_pair,
    receiver_green,
    solve_direct,
)
from .medium_green import ElasticMedium, green_truncated
from .randfield import FieldSpec, GridD, sample_potential

log = logging.getLogger(__name__)

MODES = ("direct", "born_k", "u1_only")
ADMISSIBLE_SPEEDS = ("2cs", "cs+cp", "2cp")
CSV_COLUMNS = (
    "seed", "receiver_index", "x1", "x2", "omega", "pol_index",
    "re_u1s", "im_u1s", "re_u2s", "im_u2s", "mode",
)
ESTIMATE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FrequencyBand:
    """Uniform band [omega_min, Q] with ``count`` samples."""

    q: float
    count: int
    omega_min: float = 1.0

    def __post_init__(self):
        if self.omega_min != 1.0:
            raise ValueError("the averaging band starts at omega = 1")
        if self.count < 2:
            raise ValueError(f"band needs at least two frequencies, got {self.count}")
        if not self.q > self.omega_min:
            raise ValueError(f"band end Q={self.q} must exceed {self.omega_min}")

    @property
    def omegas(self):
        return np.linspace(self.omega_min, self.q, self.count)

    @property
    def spacing(self):
        return (self.q - self.omega_min) / (self.count - 1)

    @staticmethod
    def max_spacing(medium, receivers, grid):
        """Phase-resolution bound pi / (4 c_max L_max)."""
        return math.pi / (4 * medium.c_max * max_distance(receivers, grid))

    @classmethod
    def resolved(cls, q, medium, receivers, grid, step=None):
        """Smallest band on [1, Q] meeting the phase-resolution rule.

        With ``step`` given, that spacing is used (and checked) instead.
        """
        bound = cls.max_spacing(medium, receivers, grid)
        step = bound if step is None else step
        if step > bound * (1 + 1e-12):
            raise ValueError(f"frequency step {step} exceeds the resolution bound {bound:.4g}")
        count = int(math.ceil((q - 1.0) / step - 1e-9)) + 1
        return cls(q, count)

    def check_resolution(self, medium, receivers, grid):
        bound = self.max_spacing(medium, receivers, grid)
        if self.spacing > bound * (1 + 1e-12):
            raise ValueError(
                f"frequency step {self.spacing:.4g} exceeds the resolution bound {bound:.4g}"
            )


def max_distance(receivers, grid: GridD):
    """Largest receiver-to-D distance, measured to the corners of D."""
    lo, hi = grid.origin, grid.upper
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    rec = np.atleast_2d(receivers)
    return float(np.max(np.linalg.norm(rec[:, None, :] - corners[None], axis=-1)))


def solver_spacing(medium, q, oversample=1.25):
    """Largest cell size whose Nyquist wavenumber exceeds 2 c_max Q by ``oversample``.

    The backscatter at frequency omega samples the potential's spectrum near
    |xi| = 2 c omega, so the grid has to carry those wavenumbers.
    """
    return math.pi / (oversample * 2 * medium.c_max * q)


@dataclass
class SweepDataset:
    """Scattered fields over (receiver, frequency, polarization).

    ``u_s`` has shape (R, F, 2, 2): receiver, frequency, polarization index,
    vector component.
    """

    receivers: np.ndarray
    omegas: np.ndarray
    u_s: np.ndarray
    pair_angle: float = 0.0
    seed: int = 0
    mode: str = "direct"
    band: FrequencyBand | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        R, F = len(self.receivers), len(self.omegas)
        if self.u_s.shape != (R, F, 2, 2):
            raise ValueError(f"u_s must have shape {(R, F, 2, 2)}, got {self.u_s.shape}")

    @property
    def polarizations(self):
        return polarization_pair(self.pair_angle)

    def records(self):
        for r, x in enumerate(self.receivers):
            for f, w in enumerate(self.omegas):
                for p in range(2):
                    yield ScatterRecord(x, float(w), p + 1, self.u_s[r, f, p], self.mode)

    def __len__(self):
        return self.u_s.shape[0] * self.u_s.shape[1] * 2

    def to_csv(self, path):
        """One row per (receiver, omega, polarization); components as re/im pairs."""
        rows = []
        for r, x in enumerate(self.receivers):
            for f, w in enumerate(self.omegas):
                for p in range(2):
                    u = self.u_s[r, f, p]
                    vals = (x[0], x[1], w, u[0].real, u[0].imag, u[1].real, u[1].imag)
                    v = [repr(float(t)) for t in vals]
                    rows.append(f"{self.seed},{r},{v[0]},{v[1]},{v[2]},{p + 1},{','.join(v[3:])},{self.mode}")
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            fh.write("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path, pair_angle=0.0, band=None):
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
        data = np.atleast_1d(data)
        if tuple(data.dtype.names) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected columns {CSV_COLUMNS}")
        ridx = data["receiver_index"].astype(int)
        omegas = np.unique(data["omega"].astype(float))
        R = ridx.max() + 1
        receivers = np.zeros((R, 2))
        receivers[ridx, 0] = data["x1"]
        receivers[ridx, 1] = data["x2"]
        u = np.full((R, len(omegas), 2, 2), np.nan, dtype=complex)
        f = np.searchsorted(omegas, data["omega"].astype(float))
        p = data["pol_index"].astype(int) - 1
        u[ridx, f, p, 0] = data["re_u1s"] + 1j * data["im_u1s"]
        u[ridx, f, p, 1] = data["re_u2s"] + 1j * data["im_u2s"]
        seeds = np.unique(data["seed"])
        modes = np.unique(data["mode"])
        return cls(receivers, omegas, u, pair_angle, int(seeds[0]), str(modes[0]), band)

    def missing(self):
        """(receiver, omega) pairs with non-finite entries."""
        bad = ~np.isfinite(self.u_s).all(axis=(2, 3))
        return [(int(r), float(self.omegas[f])) for r, f in zip(*np.nonzero(bad))]


def frequency_average(dataset: SweepDataset, m: float, q=None):
    """Trapezoid-rule statistic S_Q per receiver, optionally on the sub-band [1, q]."""
    _check_m(m)
    missing = dataset.missing()
    if missing:
        raise ValueError(f"dataset incomplete; missing (receiver, omega): {missing[:10]}")
    w = dataset.omegas
    power = np.sum(np.abs(dataset.u_s) ** 2, axis=(2, 3))
    if q is not None:
        keep = w <= q * (1 + 1e-12)
        if not np.isclose(w[keep][-1], q):
            raise ValueError(f"q={q} is not a sample of the band")
        w, power = w[keep], power[:, keep]
    integrand = w ** (m + 2) * power
    return np.trapezoid(integrand, w, axis=1) / (w[-1] - w[0])


def _check_m(m):
    if not 5 / 3 < m <= 2:
        warnings.warn(f"m={m} lies outside (5/3, 2] where the averaged identity is proven")


@dataclass
class EstimateResult:
    """Per-receiver statistic, analytic limit and relative deviation."""

    receivers: np.ndarray
    s_q: np.ndarray
    rhs: np.ndarray
    q: float
    m: float

    @property
    def rel_dev(self):
        return np.abs(self.s_q - self.rhs) / self.rhs

    def to_dict(self):
        return {
            "schema_version": ESTIMATE_SCHEMA_VERSION,
            "Q": float(self.q),
            "m": float(self.m),
            "receivers": [
                {"x": [float(v) for v in x], "S_Q": float(s), "rhs": float(r), "rel_dev": float(d)}
                for x, s, r, d in zip(self.receivers, self.s_q, self.rhs, self.rel_dev)
            ],
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("schema_version") != ESTIMATE_SCHEMA_VERSION:
            raise ValueError(f"unsupported estimate schema {obj.get('schema_version')!r}")
        recs = obj["receivers"]
        return cls(
            np.array([r["x"] for r in recs], dtype=float),
            np.array([r["S_Q"] for r in recs], dtype=float),
            np.array([r["rhs"] for r in recs], dtype=float),
            float(obj["Q"]),
            float(obj["m"]),
        )


def estimate(dataset: SweepDataset, phi, grid, medium, m, q=None):
    s_q = frequency_average(dataset, m, q)
    rhs = analytic_rhs(phi, grid, medium, m, dataset.receivers)
    return EstimateResult(dataset.receivers, s_q, rhs, q or float(dataset.omegas[-1]), m)


def rhs_constant(medium: ElasticMedium, m: float):
    return (medium.c_s ** (6 - m) + medium.c_p ** (6 - m)) / (2 ** (m + 6) * math.pi**2)


def _check_receivers(phi, grid, receivers):
    rec = np.atleast_2d(np.asarray(receivers, dtype=float))
    Z = grid.points()
    support = np.asarray(phi) > 0
    if support.any():
        # support = union of the closed cells where phi > 0
        d = np.abs(rec[:, None, :] - Z[support][None])
        if np.any(np.all(d <= 0.5 * grid.h * (1 + 1e-12), axis=-1)):
            raise ValueError("receiver lies inside the support of phi")
    return rec


def analytic_rhs(phi, grid: GridD, medium, m, receivers):
    """C(m) * int |x - zeta|^-2 phi(zeta) d zeta by the midpoint rule, per receiver."""
    rec = _check_receivers(phi, grid, receivers)
    d = rec[:, None, None, :] - grid.points()[None]
    r2 = np.sum(d * d, axis=-1)
    integral = grid.cell_area * np.sum(np.asarray(phi) / r2, axis=(1, 2))
    return rhs_constant(medium, m) * integral


def t2_coefficient(phi, grid: GridD, medium, m, x, a):
    """Leading coefficient T_2(x, a) of E|u_1^(2)|^2 = T_2 omega^-(m+2) + ..."""
    rec = _check_receivers(phi, grid, x)[0]
    a = np.asarray(a, dtype=float)
    d = rec - grid.points()
    r2 = np.sum(d * d, axis=-1)
    proj = (d @ a) ** 2 / r2**2
    phi = np.asarray(phi)
    shear = grid.cell_area * np.sum((1 / r2 - proj) * phi)
    press = grid.cell_area * np.sum(proj * phi)
    scale = 2.0 ** (-6 - m) / math.pi**2
    return scale * (medium.c_s ** (6 - m) * shear + medium.c_p ** (6 - m) * press)


def expected_u1sq(phi, grid, medium, m, omega, x, pair=None):
    """Leading-order E sum_j |u_1^(2)(x, omega, a_j)|^2 over a polarization pair."""
    pair = polarization_pair(0.0) if pair is None else np.asarray(pair, dtype=float)
    total = sum(t2_coefficient(phi, grid, medium, m, x, a) for a in pair)
    return total * omega ** (-(m + 2))


# --- oscillatory double integral -------------------------------------------------


def _speed(medium, label):
    if label in ("2cs", "cs+cp", "2cp"):
        return {"2cs": 2 * medium.c_s, "cs+cp": medium.c_s + medium.c_p, "2cp": 2 * medium.c_p}[
            label
        ]
    raise ValueError(f"phase speed must be one of {ADMISSIBLE_SPEEDS}, got {label!r}")


def _check_exponents(exponents):
    if len(exponents) != 6:
        raise ValueError("exponent tuple is (d11, d12, d21, d22, d1, d2)")
    d11, d12, d21, d22, d1, d2 = exponents
    for e in (d11, d12, d21, d22):
        if e < 0 or int(e) != e:
            raise ValueError(f"monomial exponents must be nonnegative integers, got {exponents}")
    if d1 < 0 or d2 < 0 or 2 * d1 != int(2 * d1) or 2 * d2 != int(2 * d2):
        raise ValueError(f"radial exponents must be nonnegative half-integers, got {exponents}")
    if d1 < d11 + d12 or d2 < d21 + d22:
        raise ValueError(f"amplitude must not grow with distance, got {exponents}")


def _amplitude(d, r, powers, radial):
    return d[..., 0] ** powers[0] * d[..., 1] ** powers[1] / r**radial


@dataclass
class OscillatoryResult:
    numeric: complex
    analytic: complex
    h: float

    @property
    def ratio(self):
        return self.numeric / self.analytic


def oscillatory_leading_order(
    x, omega, c1, c2, exponents, phi, m, medium, box=((-0.5, -0.5), (0.5, 0.5)), taper=None,
    oversample=1.5,
):
    """Double oscillatory integral I_2(x, omega, omega) against its leading term.

    The covariance of the potential is replaced by ``phi(z) K(z - z') chi(z')``,
    where K is the fractional-field kernel and ``chi`` a smooth cutoff to the
    box.  The double integral is evaluated in Fourier space, where K acts as
    the multiplier |xi|^-m, so the weak diagonal singularity is handled
    exactly.  The analytic side is ``2^m (c1 + c2)^-m omega^-m`` times the single
    integral of the combined amplitude against phi.

    ``c1`` and ``c2`` are labels in ``ADMISSIBLE_SPEEDS``; ``phi`` and ``taper``
    are callables on point arrays of shape (..., 2).  For c1 != c2 the single
    integral has a non-stationary phase, so both sides decay faster than
    omega^-(m+1) and their ratio carries no information.
    """
    _check_exponents(exponents)
    s1, s2 = _speed(medium, c1), _speed(medium, c2)
    d11, d12, d21, d22, d1, d2 = exponents
    x = np.asarray(x, dtype=float)

    h_target = math.pi / (oversample * max(s1, s2) * omega)
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    n = int(math.ceil(np.max(hi - lo) / h_target))
    h = float(np.max(hi - lo)) / n
    grid = GridD(tuple(lo), h, n, n)
    if np.any(grid.contains(x)):
        raise ValueError("observation point lies inside the integration box")
    Z = grid.points()
    d = x - Z
    r = np.hypot(d[..., 0], d[..., 1])
    phi_z = np.asarray(phi(Z), dtype=float)
    chi = np.ones_like(r) if taper is None else np.asarray(taper(Z), dtype=float)

    a_z = phi_z * _amplitude(d, r, (d11, d12), d1) * np.exp(1j * s1 * omega * r)
    b_z = chi * _amplitude(d, r, (d21, d22), d2) * np.exp(-1j * s2 * omega * r)

    # periodic box twice the integration box so K-images stay smooth
    P = (2 * n, 2 * n)
    kx = 2 * np.pi * np.fft.fftfreq(P[0], d=h)
    k2 = kx[:, None] ** 2 + kx[None, :] ** 2
    with np.errstate(divide="ignore"):
        S = np.where(k2 > 0, k2 ** (-m / 2), 0.0)
    A_neg = np.fft.ifft2(a_z, s=P) * (P[0] * P[1])  # sum_j a_j e^{+i xi z_j}
    B = np.fft.fft2(b_z, s=P)
    numeric = h**4 / (P[0] * P[1] * h * h) * np.sum(S * A_neg * B)

    amp = _amplitude(d, r, (d11 + d21, d12 + d22), d1 + d2)
    single = h * h * np.sum(np.exp(1j * (s1 - s2) * omega * r) * amp * phi_z)
    analytic = 2.0**m / (s1 + s2) ** m * single * omega ** (-m)
    return OscillatoryResult(complex(numeric), complex(analytic), h)


# --- sweeps ---------------------------------------------------------------------


def born_threshold(grid, rho, medium, band: FrequencyBand, target=0.5):
    """Lowest band frequency from which the norm proxy of K stays below ``target``.

    Bisection over the band assumes the proxy decreases with frequency.
    """
    omegas = band.omegas

    def proxy(k):
        return assemble_operator(grid, rho, medium, omegas[k]).norm_proxy()

    if proxy(0) < target:
        return float(omegas[0])
    if proxy(len(omegas) - 1) >= target:
        return math.inf
    lo, hi = 0, len(omegas) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if proxy(mid) < target:
            hi = mid
        else:
            lo = mid
    return float(omegas[hi])


def born_scattered(op, receivers, pair, count):
    """u^s at each receiver (as its own source) from ``count`` Born terms."""
    R = len(receivers)
    Gx = receiver_green(op.grid, op.medium, op.omega, receivers)  # (R, nx, ny, 2, 2)
    u0 = np.einsum("rxyab,pb->rpxya", Gx, pair)
    u = u0
    total = u0.copy()
    for _ in range(count - 1):
        u = -op.matvec(u)
        total += u
    # u^s = -int G rho u, with u truncated at u_{count-1} so u^s keeps count terms
    return -op.grid.cell_area * np.einsum("rxyab,xy,rpxyb->rpa", Gx, op.rho, total), R


def _direct_scattered(op, receivers, pair, seed):
    Gx = receiver_green(op.grid, op.medium, op.omega, receivers)
    out = np.empty((len(receivers), 2, 2), dtype=complex)
    for r, x in enumerate(receivers):
        sol = solve_direct(op, x, pair, seed=seed)
        out[r] = -op.grid.cell_area * np.einsum("xyab,xy,pxyb->pa", Gx[r], op.rho, sol.u)
    return out


def run_sweep(
    spec: FieldSpec,
    grid: GridD,
    medium: ElasticMedium,
    band: FrequencyBand,
    receivers,
    mode="direct",
    born_terms=8,
    omega_threshold=None,
    pair_angle=0.0,
    rho=None,
    on_failure="raise",
    workers=1,
):
    """Scattered fields at coincident source/receiver points over a band.

    Modes: ``u1_only`` uses single scattering; ``born_k`` sums ``born_terms``
    terms of the Born series at every frequency; ``direct`` solves the full
    Lippmann-Schwinger system below ``omega_threshold`` and switches to the
    Born sum above it (``None`` picks the frequency where the norm proxy of K
    drops below 0.5).  ``born_terms`` counts scattered-field terms u_1..u_k.
    Failures raise, or with ``on_failure="record"`` are stored as nan and
    listed in ``meta["failures"]``.  ``workers > 1`` maps frequencies over a
    thread pool; results are stored by frequency index, so output does not
    depend on the worker count.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    if np.any(grid.contains(receivers)):
        raise ValueError("receivers must lie outside the closure of D")
    if rho is None:
        rho = sample_potential(grid, spec)
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    pair = polarization_pair(pair_angle)
    omegas = band.omegas
    us = np.empty((len(receivers), len(omegas), 2, 2), dtype=complex)
    meta = {"timings": [], "failures": [], "born_terms": born_terms}

    if mode == "direct" and omega_threshold is None:
        omega_threshold = born_threshold(grid, values, medium, band)
    meta["omega_threshold"] = omega_threshold

    def one(f):
        w = omegas[f]
        t0 = time.perf_counter()
        failure = None
        if mode == "u1_only":
            Gx = receiver_green(grid, medium, w, receivers)
            out = -grid.cell_area * np.einsum("rxyab,xy,pb->rpa", Gx @ Gx, values, pair)
        else:
            try:
                op = assemble_operator(grid, values, medium, w)
                if mode == "direct" and w < omega_threshold:
                    out = _direct_scattered(op, receivers, pair, spec.seed)
                else:
                    out, _ = born_scattered(op, receivers, pair, born_terms)
            except NearSingularError as exc:
                if on_failure == "raise":
                    raise NearSingularError(f"{exc} (frequency index {f})") from exc
                log.warning("solver failure at omega=%s: %s", w, exc)
                out = np.full((len(receivers), 2, 2), np.nan, dtype=complex)
                failure = {"omega": float(w), "error": str(exc)}
        dt = time.perf_counter() - t0
        log.debug("omega=%.4f done in %.3fs (%d receivers)", w, dt, len(receivers))
        return out, dt, failure

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(len(omegas))))
    else:
        results = [one(f) for f in range(len(omegas))]
    for f, (out, dt, failure) in enumerate(results):
        us[:, f] = out
        meta["timings"].append(dt)
        if failure is not None:
            meta["failures"].append(failure)

    return SweepDataset(receivers, omegas, us, pair_angle, spec.seed, mode, band, meta)


def deviation_summary(per_seed, rhs, qs=(20, 50, 100)):
    """Seed-level trend of |S_Q - rhs| / rhs.

    ``per_seed`` is a list of {Q: S_Q per receiver}.  Each seed is reduced to
    the median deviation over receivers, then the median is taken over seeds.
    The spread compares the first two seeds at the largest Q.
    """
    qs = tuple(qs)
    dev = {q: [float(np.median(np.abs(s[q] - rhs) / rhs)) for s in per_seed] for q in qs}
    med = {q: float(np.median(dev[q])) for q in qs}
    top = qs[-1]
    spread = float(np.median(np.abs(per_seed[0][top] - per_seed[1][top]) / rhs))
    return {
        "deviation_per_seed": {str(q): dev[q] for q in qs},
        "median_deviation": {str(q): med[q] for q in qs},
        "non_increasing": bool(all(med[a] >= med[b] for a, b in zip(qs, qs[1:]))),
        "below_25pct_at_top": bool(med[top] < 0.25),
        "seed_spread": spread,
        "spread_within_2x": bool(spread <= 2 * med[top]),
    }


def arc_receivers(center, radius, count, angle_span=(-math.pi / 4, math.pi / 4), facing=0.0):
    """Equally spaced points on a circular arc of the given radius around ``center``."""
    t = np.linspace(angle_span[0], angle_span[1], count) + facing
    c = np.asarray(center, dtype=float)
    return np.stack([c[0] + radius * np.cos(t), c[1] + radius * np.sin(t)], axis=-1)


def u1_truncated_batch(values, grid, medium, omega, x, pair, N=2):
    """Single-scatter field with G^(N) for a batch of potentials (B, nx, ny)."""
    Gx = green_truncated(medium, omega, N, np.asarray(x, float), grid.points())
    G2 = Gx @ Gx
    return -grid.cell_area * np.einsum("xyab,nxy,pb->npa", G2, values, pair)
