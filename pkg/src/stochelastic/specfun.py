"""Hankel functions of the first kind, orders 0-2, for positive real argument.

Three evaluation regimes, chosen per element:

* ``x < 5``: ascending power series for J0, J1, J2, Y0, Y1.
* ``5 <= x < X_ASYM``: Steed's continued-fraction method (CF1 for J0'/J0,
  complex CF2 for (J0' + iY0')/(J0 + iY0)), normalised with the Wronskian.
* ``x >= X_ASYM``: Hankel's large-argument expansion, summed to machine
  precision.

Y2 and H2 come from the forward recurrence, which is stable for Y and H.
Everything is vectorised over numpy arrays and has no dependency beyond numpy.
"""

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061
X_SERIES = 5.0
X_ASYM = 20.0
_CF_EPS = np.finfo(float).eps
_FPMIN = 1e-300
_SERIES_TERMS = 30
_ASYM_TERMS = 40


def asym_coeff(n: int, j: int) -> complex:
    """Coefficient of x^-(j+1/2) e^{i(x - n pi/2)} in the expansion of H_n^(1)(x).

    ``(1 - i) i^j / (sqrt(pi) 8^j j!) * prod_{l=1..j} (4 n^2 - (2l - 1)^2)``.

    The leading value is (1 - i)/sqrt(pi) = sqrt(2/pi) e^{-i pi/4}; writing
    (1 + i) there instead multiplies the whole expansion by i and breaks the
    truncation error bound.
    """
    if n not in (0, 1, 2):
        raise ValueError(f"order n must be 0, 1 or 2, got {n}")
    if j < 0:
        raise ValueError(f"index j must be nonnegative, got {j}")
    prod = 1.0
    for l in range(1, j + 1):
        prod *= 4 * n * n - (2 * l - 1) ** 2
    return (1 - 1j) * (1j**j) * prod / (math.sqrt(math.pi) * 8.0**j * math.factorial(j))


def hankel1_truncated(n: int, N: int, x):
    """Sum of the first N+1 terms of the large-argument expansion of H_n^(1)."""
    if N < 0:
        raise ValueError(f"truncation order N must be nonnegative, got {N}")
    x = _check_arg(x)
    total = np.zeros(np.shape(x), dtype=complex)
    for j in range(N + 1):
        total = total + asym_coeff(n, j) * x ** (-(j + 0.5))
    # e^{ix} first so large x keeps its exact phase
    out = total * np.exp(1j * x) * (-1j) ** n
    return out[()] if out.ndim == 0 else out


def hankel1(n: int, x):
    """H_n^(1)(x) = J_n(x) + i Y_n(x) for n in {0, 1, 2} and x > 0."""
    if n not in (0, 1, 2):
        raise ValueError(f"order n must be 0, 1 or 2, got {n}")
    out = hankel012(x)[n]
    return out[()] if out.ndim == 0 else out


def hankel012(x):
    """Return (H0, H1, H2) evaluated at x, each shaped like x."""
    x = _check_arg(x)
    shape = x.shape
    x = x.ravel()
    h0 = np.empty(x.shape, dtype=complex)
    h1 = np.empty(x.shape, dtype=complex)
    h2 = np.empty(x.shape, dtype=complex)

    small = x < X_SERIES
    big = x >= X_ASYM
    mid = ~(small | big)
    if small.any():
        j0, j1, j2, y0, y1 = _series(x[small])
        y2 = 2.0 / x[small] * y1 - y0
        h0[small] = j0 + 1j * y0
        h1[small] = j1 + 1j * y1
        h2[small] = j2 + 1j * y2
    for mask, fn in ((mid, _steed), (big, _asymptotic)):
        if mask.any():
            xs = x[mask]
            a, b = fn(xs)
            h0[mask] = a
            h1[mask] = b
            h2[mask] = 2.0 / xs * b - a
    return h0.reshape(shape), h1.reshape(shape), h2.reshape(shape)


def _check_arg(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("Hankel argument must be positive and finite")
    if np.any(~np.isfinite(x)):
        raise ValueError("Hankel argument must be positive and finite")
    return x


def _series(x):
    q = 0.25 * x * x
    term0 = np.ones_like(x)  # (-q)^k / (k!)^2
    term1 = 0.5 * x  # (-q)^k (x/2) / (k! (k+1)!)
    term2 = 0.125 * x * x  # (-q)^k (x/2)^2 / (k! (k+2)!)
    j0 = term0.copy()
    j1 = term1.copy()
    j2 = term2.copy()
    harmonic = 0.0
    s0 = np.zeros_like(x)
    # psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
    s1 = (1.0 - 2 * EULER_GAMMA) * term1
    for k in range(1, _SERIES_TERMS):
        term0 = -term0 * q / (k * k)
        term1 = -term1 * q / (k * (k + 1))
        term2 = -term2 * q / (k * (k + 2))
        harmonic += 1.0 / k
        j0 += term0
        j1 += term1
        j2 += term2
        s0 -= harmonic * term0
        s1 += (2 * harmonic + 1.0 / (k + 1) - 2 * EULER_GAMMA) * term1
    log_half = np.log(0.5 * x)
    y0 = (2 / np.pi) * ((log_half + EULER_GAMMA) * j0 + s0)
    y1 = -2 / (np.pi * x) + (2 / np.pi) * log_half * j1 - s1 / np.pi
    return j0, j1, j2, y0, y1


def _steed(x):
    """Barnett-Steed evaluation of H0, H1 for moderate x (order nu = 0).

    Both continued fractions run on a shrinking index set, so elements that
    converge early stop costing work.
    """
    f, sign = _cf1(x)
    p, q = _cf2(x)
    w = 2.0 / (np.pi * x)
    gam = (p - f) / q
    rjmu = np.copysign(np.sqrt(w / ((p - f) * gam + q)), sign)
    rymu = rjmu * gam
    rymup = rymu * (p + q / gam)
    j0 = rjmu
    j1 = -f * rjmu
    return j0 + 1j * rymu, j1 - 1j * rymup


def _cf1(x):
    """J0'/J0 by the modified Lentz method, plus the sign of J0."""
    f = np.empty_like(x)
    sign = np.empty_like(x)
    idx = np.arange(x.size)
    xi2 = 2.0 / x
    h = np.full_like(x, _FPMIN)
    b = np.zeros_like(x)
    d = np.zeros_like(x)
    c = h.copy()
    isign = np.ones_like(x)
    for _ in range(100000):
        b = b + xi2
        d = b - d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b - 1.0 / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = c * d
        h = delta * h
        isign = np.where(d < 0, -isign, isign)
        done = np.abs(delta - 1.0) < _CF_EPS
        if done.any():
            f[idx[done]] = h[done]
            sign[idx[done]] = isign[done]
            keep = ~done
            if not keep.any():
                return f, sign
            idx, xi2, h, b, d, c, isign = (a[keep] for a in (idx, xi2, h, b, d, c, isign))
    raise RuntimeError("CF1 did not converge")


def _cf2(x):
    """p + iq = (J0' + iY0')/(J0 + iY0) by the modified Lentz method."""
    p_out = np.empty_like(x)
    q_out = np.empty_like(x)
    idx = np.arange(x.size)
    xi = 1.0 / x
    a = 0.25
    p = -0.5 * xi
    q = np.ones_like(x)
    br = 2.0 * x
    bi = 2.0
    fact = a * xi / (p * p + q * q)
    cr = br + q * fact
    ci = bi + p * fact
    den = br * br + bi * bi
    dr = br / den
    di = -bi / den
    dlr = cr * dr - ci * di
    dli = cr * di + ci * dr
    p, q = p * dlr - q * dli, p * dli + q * dlr
    for i in range(2, 100000):
        a += 2 * (i - 1)
        bi += 2.0
        dr = a * dr + br
        di = a * di + bi
        dr = np.where((np.abs(dr) + np.abs(di)) < _FPMIN, _FPMIN, dr)
        fact = a / (cr * cr + ci * ci)
        cr = br + cr * fact
        ci = bi - ci * fact
        cr = np.where((np.abs(cr) + np.abs(ci)) < _FPMIN, _FPMIN, cr)
        den = dr * dr + di * di
        dr = dr / den
        di = -di / den
        dlr = cr * dr - ci * di
        dli = cr * di + ci * dr
        p, q = p * dlr - q * dli, p * dli + q * dlr
        done = (np.abs(dlr - 1.0) + np.abs(dli)) < _CF_EPS
        if done.any():
            p_out[idx[done]] = p[done]
            q_out[idx[done]] = q[done]
            keep = ~done
            if not keep.any():
                return p_out, q_out
            idx, p, q, br, dr, di, cr, ci = (v[keep] for v in (idx, p, q, br, dr, di, cr, ci))
    raise RuntimeError("CF2 did not converge")


def _asym_terms(x_lo):
    """Smallest term count whose last term falls below 1e-16 for all x >= x_lo."""
    for count in range(1, _ASYM_TERMS + 1):
        if max(abs(_ASYM_COEFFS[n][count - 1]) for n in (0, 1)) * x_lo ** (1 - count) < 1e-16:
            return count
    raise ValueError(f"asymptotic expansion cannot reach full precision at x={x_lo}")


# i^k a_k(n): coefficients of x^-k in e^{-i(x - n pi/2 - pi/4)} sqrt(pi x / 2) H_n(x)
_ASYM_COEFFS = {
    n: [asym_coeff(n, k) / asym_coeff(n, 0) for k in range(_ASYM_TERMS)] for n in (0, 1)
}
_ASYM_BINS = [(lo, _asym_terms(lo)) for lo in (X_ASYM, 30.0, 40.0, 80.0, 200.0, 1000.0, 1e4)]


def _asymptotic(x):
    h0 = np.empty(x.shape, dtype=complex)
    h1 = np.empty(x.shape, dtype=complex)
    edges = [lo for lo, _ in _ASYM_BINS[1:]] + [np.inf]
    for (lo, count), hi in zip(_ASYM_BINS, edges):
        mask = (x >= lo) & (x < hi)
        if not mask.any():
            continue
        xs = x[mask]
        t = 1.0 / xs
        amp = np.sqrt(2.0 / (np.pi * xs)) * np.exp(1j * xs)
        for n, out in ((0, h0), (1, h1)):
            coeffs = _ASYM_COEFFS[n]
            total = np.full(xs.shape, coeffs[count - 1], dtype=complex)
            for k in range(count - 2, -1, -1):
                total = total * t + coeffs[k]
            out[mask] = amp * np.exp(-1j * (n * np.pi / 2 + np.pi / 4)) * total
    return h0, h1
