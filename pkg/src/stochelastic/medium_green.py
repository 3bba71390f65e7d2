"""Homogeneous isotropic elastic medium and the 2D Navier Green tensor."""

from dataclasses import dataclass
import math

import numpy as np

from .specfun import hankel012, hankel1_truncated


@dataclass(frozen=True)
class ElasticMedium:
    """Lame pair (lambda, mu); requires mu > 0 and lambda + 2 mu > 0."""

    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"Lame parameter mu must be positive, got {self.mu}")
        if not self.lam + 2 * self.mu > 0:
            raise ValueError(
                f"strong ellipticity needs lambda + 2 mu > 0, got {self.lam + 2 * self.mu}"
            )

    @property
    def c_p(self) -> float:
        return 1.0 / math.sqrt(self.lam + 2 * self.mu)

    @property
    def c_s(self) -> float:
        return 1.0 / math.sqrt(self.mu)

    @property
    def c_max(self) -> float:
        return max(self.c_p, self.c_s)


def wavenumbers(medium: ElasticMedium, omega: float):
    """Compressional and shear wavenumbers (kappa_p, kappa_s) at frequency omega."""
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    return medium.c_p * omega, medium.c_s * omega


def green(medium: ElasticMedium, omega: float, x, y):
    """Green tensor G(x, y, omega) of mu Lap + (lambda + mu) grad div + omega^2.

    ``x`` and ``y`` are broadcastable arrays of points with trailing axis 2;
    the result has shape ``broadcast(x, y).shape[:-1] + (2, 2)``.  Built from
    the Hankel-function form, so no numerical differentiation is involved.
    """
    offset = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return green_offset(medium, omega, offset)


def green_truncated(medium: ElasticMedium, omega: float, N: int, x, y):
    """Green tensor with each Hankel factor replaced by its N-term expansion."""
    offset = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = _distance(offset)
    kp, ks = wavenumbers(medium, omega)
    h1s = hankel1_truncated(1, N, ks * r)
    h1p = hankel1_truncated(1, N, kp * r)
    h0s = hankel1_truncated(0, N, ks * r)
    h2s = hankel1_truncated(2, N, ks * r)
    h2p = hankel1_truncated(2, N, kp * r)
    return _assemble(medium, omega, offset, r, h0s, ks * h1s - kp * h1p, ks**2 * h2s - kp**2 * h2p)


def green_offset(medium: ElasticMedium, omega: float, offset):
    """G evaluated at separation vectors ``offset = x - y`` (shape (..., 2))."""
    offset = np.asarray(offset, dtype=float)
    r = _distance(offset)
    kp, ks = wavenumbers(medium, omega)
    h0s, h1s, h2s = hankel012(ks * r)
    if kp == ks:
        # lambda = -mu: both wave speeds coincide and the dyadic part vanishes
        trace = np.zeros_like(h1s)
        dyad = np.zeros_like(h2s)
    else:
        _, h1p, h2p = hankel012(kp * r)
        trace = ks * h1s - kp * h1p
        dyad = ks**2 * h2s - kp**2 * h2p
    return _assemble(medium, omega, offset, r, h0s, trace, dyad)


def _distance(offset):
    if offset.shape[-1] != 2:
        raise ValueError(f"points must have a trailing axis of length 2, got {offset.shape}")
    r = np.hypot(offset[..., 0], offset[..., 1])
    if np.any(r == 0):
        raise ValueError("Green tensor is singular at coincident points")
    return r


def _assemble(medium, omega, offset, r, h0s, trace, dyad):
    w2 = omega * omega
    diag = 0.25j / medium.mu * h0s - 0.25j / w2 * trace / r
    coef = 0.25j / w2 * dyad / r**2
    out = coef[..., None, None] * (offset[..., :, None] * offset[..., None, :])
    out[..., 0, 0] += diag
    out[..., 1, 1] += diag
    return out
