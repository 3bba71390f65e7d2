import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochelastic.medium_green import ElasticMedium, green, green_offset, green_truncated, wavenumbers
from stochelastic.specfun import asym_coeff, hankel1
from stochelastic.validation import green_decay_slopes, navier_residual

REF = ElasticMedium(1.0, 1.0)

points = st.tuples(st.floats(-3, 3), st.floats(-3, 3))


def test_wavenumbers_examples():
    kp, ks = wavenumbers(REF, 2.0)
    assert kp == pytest.approx(2 / math.sqrt(3))
    assert ks == pytest.approx(2.0)
    kp, ks = wavenumbers(ElasticMedium(0.0, 1.0), 1.0)
    assert (kp, ks) == pytest.approx((1 / math.sqrt(2), 1.0))
    with pytest.raises(ValueError):
        wavenumbers(REF, 0.0)


@pytest.mark.parametrize("lam,mu", [(1.0, 0.0), (1.0, -1.0), (-3.0, 1.0)])
def test_medium_rejects_invalid_lame(lam, mu):
    with pytest.raises(ValueError):
        ElasticMedium(lam, mu)


@settings(max_examples=50, deadline=None)
@given(points, points, st.floats(0.5, 50))
def test_symmetry_and_reciprocity(x, y, omega):
    x, y = np.array(x), np.array(y)
    if np.hypot(*(x - y)) < 1e-3:
        return
    G = green(REF, omega, x, y)
    assert np.array_equal(G, G.T)
    assert np.array_equal(G, green(REF, omega, y, x))


def test_coincident_points_rejected():
    with pytest.raises(ValueError):
        green(REF, 1.0, np.zeros(2), np.zeros(2))


def test_helmholtz_reduction_when_lambda_is_minus_mu():
    med = ElasticMedium(-2.0, 2.0)
    x = np.array([0.7, -0.4])
    G = green(med, 3.0, x, np.zeros(2))
    ks = med.c_s * 3.0
    expected = 0.25j / med.mu * hankel1(0, ks * np.hypot(*x)) * np.eye(2)
    np.testing.assert_allclose(G, expected, rtol=1e-10, atol=0)


def _closed_form_g2(medium, omega, x, z):
    """Truncated tensor written out term by term with b_j^(n) = asym_coeff(n, j)."""
    d = np.asarray(x, float) - np.asarray(z, float)
    r = np.hypot(*d)
    cs, cp = medium.c_s, medium.c_p
    dd = np.outer(d, d)
    I = np.eye(2)
    s = np.zeros((2, 2), complex)
    p = np.zeros((2, 2), complex)
    for j in range(3):
        b0, b1, b2 = asym_coeff(0, j), asym_coeff(1, j), asym_coeff(2, j)
        s += (b0 * cs ** (-j + 1.5) * I / (omega ** (j + 0.5) * r ** (j + 0.5))
              + 1j * b1 * cs ** (-j + 0.5) * I / (omega ** (j + 1.5) * r ** (j + 1.5))
              - b2 * cs ** (-j + 1.5) * dd / (omega ** (j + 0.5) * r ** (j + 2.5)))
        p += (1j * b1 * cp ** (-j + 0.5) * I / (omega ** (j + 1.5) * r ** (j + 1.5))
              - b2 * cp ** (-j + 1.5) * dd / (omega ** (j + 0.5) * r ** (j + 2.5)))
    return 0.25j * s * np.exp(1j * cs * omega * r) - 0.25j * p * np.exp(1j * cp * omega * r)


@pytest.mark.parametrize("lam,mu,omega", [(1.0, 1.0, 7.0), (2.0, 0.5, 30.0), (0.0, 3.0, 2.0)])
def test_n2_truncation_matches_closed_form(lam, mu, omega):
    med = ElasticMedium(lam, mu)
    x, z = np.array([1.3, 0.4]), np.array([-0.2, 0.1])
    np.testing.assert_allclose(green_truncated(med, omega, 2, x, z), _closed_form_g2(med, omega, x, z),
                               rtol=1e-12)


def test_truncated_symmetric():
    G = green_truncated(REF, 12.0, 2, np.array([0.3, 1.1]), np.array([-1.0, 0.0]))
    assert np.array_equal(G, G.T)


def test_broadcasting_shape():
    Z = np.random.default_rng(0).uniform(-1, 1, (4, 5, 2))
    G = green_offset(REF, 2.0, Z + 3.0)
    assert G.shape == (4, 5, 2, 2)


def test_decay_slopes_per_entry():
    for (i, j), (full, rem) in green_decay_slopes().items():
        assert abs(full + 0.5) <= 0.1, (i, j, full)
        assert abs(rem + 3.5) <= 0.3, (i, j, rem)


def test_navier_residual_second_order():
    r1 = navier_residual(REF, 5.0, 1e-3)
    r2 = navier_residual(REF, 5.0, 2e-3)
    assert r1 < 1e-3
    assert math.log2(r2 / r1) == pytest.approx(2.0, abs=0.3)


def test_navier_residual_other_medium():
    med = ElasticMedium(3.0, 0.7)
    assert navier_residual(med, 4.0, 1e-3, x=(1.1, -0.3)) < 1e-3
