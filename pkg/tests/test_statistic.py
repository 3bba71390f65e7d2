import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochelastic import lippmann as lp
from stochelastic.config import load_config
from stochelastic.lippmann import polarization_pair
from stochelastic.medium_green import ElasticMedium
from stochelastic.randfield import FieldSpec, GridD
from stochelastic.statistic import (
    EstimateResult, FrequencyBand, SweepDataset, analytic_rhs, arc_receivers, deviation_summary,
    estimate, expected_u1sq, frequency_average, max_distance, oscillatory_leading_order, rhs_constant,
    run_sweep, solver_spacing, t2_coefficient,
)

MED = ElasticMedium(1.0, 1.0)
REFERENCE = Path(__file__).parents[1] / "configs" / "reference.json"


def _bump_grid(h=1 / 24, width=0.15):
    g = GridD.box((-0.5, -0.5), (0.5, 0.5), h)
    P = g.points()
    r = np.hypot(P[..., 0], P[..., 1])
    phi = np.where(r < 0.45, np.exp(-r**2 / (2 * width**2)) * np.exp(1 - 1 / np.maximum(1 - (r / 0.45) ** 2, 1e-300)), 0.0)
    return g, phi


def _dataset(u, omegas, receivers=None):
    receivers = np.array([[2.0, 0.0]] * u.shape[0]) if receivers is None else receivers
    return SweepDataset(receivers, np.asarray(omegas, float), u)


# --- frequency averaging -------------------------------------------------------


@pytest.mark.parametrize("m", [1.8, 2.0])
def test_constant_integrand_averages_to_constant(m):
    band = FrequencyBand(30.0, 59)
    c = 3.7
    u = np.zeros((1, band.count, 2, 2), complex)
    u[0, :, 0, 0] = np.sqrt(c * band.omegas ** -(m + 2))
    assert frequency_average(_dataset(u, band.omegas), m)[0] == pytest.approx(c, rel=1e-13)


def test_zero_field_averages_to_zero():
    band = FrequencyBand(10.0, 11)
    u = np.zeros((3, band.count, 2, 2), complex)
    assert np.all(frequency_average(_dataset(u, band.omegas), 1.8) == 0)


def test_sub_band_must_be_a_node():
    band = FrequencyBand(10.0, 10)
    u = np.ones((1, band.count, 2, 2), complex)
    with pytest.raises(ValueError):
        frequency_average(_dataset(u, band.omegas), 1.8, q=5.5)
    # 1 + k for k = 0..9 contains 5
    band = FrequencyBand(10.0, 10)
    frequency_average(_dataset(u, band.omegas), 1.8, q=5.0)


def test_m_outside_proven_range_warns_but_computes():
    band = FrequencyBand(5.0, 5)
    u = np.ones((1, band.count, 2, 2), complex)
    with pytest.warns(UserWarning):
        val = frequency_average(_dataset(u, band.omegas), 1.5)
    assert np.isfinite(val).all()


def test_missing_records_are_reported():
    band = FrequencyBand(5.0, 5)
    u = np.ones((2, band.count, 2, 2), complex)
    u[1, 2, 0, 1] = np.nan
    with pytest.raises(ValueError, match=r"\(1, 3\.0\)"):
        frequency_average(_dataset(u, band.omegas), 1.8)


# --- analytic limit ------------------------------------------------------------


def test_rhs_constant_value_m2():
    assert rhs_constant(MED, 2.0) == pytest.approx((10 / 9) / (256 * math.pi**2), rel=1e-15)


def test_single_cell_rhs():
    g = GridD.box((-0.5, -0.5), (0.5, 0.5), 0.1)
    phi = np.zeros(g.shape)
    phi[4, 6] = 2.5
    x = np.array([[1.7, -0.4]])
    zeta = g.points()[4, 6]
    expected = rhs_constant(MED, 1.8) * g.cell_area * 2.5 / np.sum((x[0] - zeta) ** 2)
    assert analytic_rhs(phi, g, MED, 1.8, x)[0] == pytest.approx(expected, rel=1e-14)


def test_rhs_refinement_converged():
    x = arc_receivers((0, 0), 2.0, 16)
    g, phi = _bump_grid(1 / 24)
    gf, phif = _bump_grid(1 / 48)
    coarse = analytic_rhs(phi, g, MED, 1.8, x)
    fine = analytic_rhs(phif, gf, MED, 1.8, x)
    assert np.max(np.abs(coarse - fine) / fine) < 1e-3


def test_receiver_in_support_rejected():
    g, phi = _bump_grid()
    with pytest.raises(ValueError):
        analytic_rhs(phi, g, MED, 1.8, [[0.0, 0.0]])


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(1.7, 2.0), st.floats(1.0, 200.0))
def test_pair_sum_of_t2_equals_rhs(alpha, m, omega):
    g, phi = _bump_grid()
    x = np.array([1.3, 0.9])
    pair = polarization_pair(alpha)
    lhs = expected_u1sq(phi, g, MED, m, omega, x, pair)
    rhs = analytic_rhs(phi, g, MED, m, x[None])[0] * omega ** -(m + 2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_t2_point_mass_splits_into_shear_and_pressure_weights():
    med = ElasticMedium(2.0, 0.5)
    g = GridD.box((-0.5, -0.5), (0.5, 0.5), 0.1)
    phi = np.zeros(g.shape)
    phi[5, 5] = 1.0
    zeta = g.points()[5, 5]
    x = zeta + np.array([2.0, 0.0])
    m = 1.8
    scale = g.cell_area * 2.0 ** (-6 - m) / math.pi**2
    # a along the offset: pure pressure; a across it: pure shear
    assert t2_coefficient(phi, g, med, m, x, [1.0, 0.0]) == pytest.approx(scale * med.c_p ** (6 - m) / 4)
    assert t2_coefficient(phi, g, med, m, x, [0.0, 1.0]) == pytest.approx(scale * med.c_s ** (6 - m) / 4)


# --- bands and grids -----------------------------------------------------------


def test_band_validation_and_nodes():
    with pytest.raises(ValueError):
        FrequencyBand(10.0, 1)
    with pytest.raises(ValueError):
        FrequencyBand(1.0, 5)
    with pytest.raises(ValueError):
        FrequencyBand(10.0, 5, omega_min=2.0)
    b = FrequencyBand(100.0, 397)
    assert b.spacing == 0.25
    assert {20.0, 50.0, 100.0} <= set(b.omegas.tolist())


def test_resolved_band_meets_bound():
    g = GridD.box((-0.5, -0.5), (0.5, 0.5), 1 / 24)
    rec = arc_receivers((0, 0), 2.0, 16)
    b = FrequencyBand.resolved(100.0, MED, rec, g)
    bound = math.pi / (4 * MED.c_max * max_distance(rec, g))
    assert b.spacing <= bound
    assert FrequencyBand(100.0, b.count - 1).spacing > bound
    with pytest.raises(ValueError):
        FrequencyBand(100.0, 100).check_resolution(MED, rec, g)


def test_solver_spacing_resolves_backscatter():
    h = solver_spacing(MED, 100.0)
    assert math.pi / h == pytest.approx(1.25 * 2 * MED.c_max * 100.0)


def test_arc_receivers_geometry():
    rec = arc_receivers((1.0, -1.0), 2.0, 5, facing=math.pi / 2)
    np.testing.assert_allclose(np.hypot(rec[:, 0] - 1.0, rec[:, 1] + 1.0), 2.0)
    assert rec.shape == (5, 2)


# --- serialisation -------------------------------------------------------------


def _random_dataset(R=3, F=4, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((R, F, 2, 2)) + 1j * rng.standard_normal((R, F, 2, 2))
    return SweepDataset(rng.uniform(2, 3, (R, 2)), np.linspace(1, 2, F), u * 1e-7, 0.0, 9, "u1_only")


def test_sweep_csv_round_trip_is_exact(tmp_path):
    ds = _random_dataset()
    ds.to_csv(tmp_path / "s.csv")
    back = SweepDataset.from_csv(tmp_path / "s.csv")
    assert back.u_s.tobytes() == ds.u_s.tobytes()
    np.testing.assert_array_equal(back.receivers, ds.receivers)
    np.testing.assert_array_equal(back.omegas, ds.omegas)
    assert (back.seed, back.mode) == (9, "u1_only")
    assert len(ds) == 3 * 4 * 2 == len(list(ds.records()))


def test_estimate_json_round_trip():
    res = EstimateResult(np.array([[2.0, 0.1]]), np.array([1.5e-3]), np.array([1.4e-3]), 100.0, 1.8)
    obj = json.loads(json.dumps(res.to_dict()))
    back = EstimateResult.from_dict(obj)
    np.testing.assert_array_equal(back.s_q, res.s_q)
    assert back.rel_dev[0] == pytest.approx(0.1 / 1.4)
    obj["schema_version"] = 99
    with pytest.raises(ValueError):
        EstimateResult.from_dict(obj)


def test_shape_checked():
    with pytest.raises(ValueError):
        SweepDataset(np.zeros((2, 2)), np.arange(3.0), np.zeros((2, 4, 2, 2)))


# --- sweeps --------------------------------------------------------------------


SMALL = GridD.box((-0.5, -0.5), (0.5, 0.5), 1 / 8)
SMALL_PHI = np.zeros(SMALL.shape)
SMALL_PHI[2:6, 2:6] = 1.0
SMALL_REC = arc_receivers((0, 0), 1.5, 3)


def test_u1_only_zero_potential_gives_zero_dataset():
    spec = FieldSpec(1.8, SMALL_PHI, seed=1)
    ds = run_sweep(spec, SMALL, MED, FrequencyBand(3.0, 5), SMALL_REC, mode="u1_only",
                   rho=np.zeros(SMALL.shape))
    assert not np.any(ds.u_s)
    assert len(ds) == 3 * 5 * 2


def test_direct_and_born_agree_in_contraction_regime():
    spec = FieldSpec(1.8, 0.05 * SMALL_PHI, seed=3)
    band = FrequencyBand(6.0, 6)
    direct = run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="direct", omega_threshold=math.inf)
    born = run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="born_k", born_terms=8)
    err = np.linalg.norm(direct.u_s - born.u_s) / np.linalg.norm(direct.u_s)
    assert err < 1e-6


def test_sweep_is_deterministic_across_workers():
    spec = FieldSpec(1.8, SMALL_PHI, seed=4)
    band = FrequencyBand(4.0, 7)
    a = run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="direct")
    b = run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="direct", workers=3)
    assert a.u_s.tobytes() == b.u_s.tobytes()
    assert a.meta["omega_threshold"] == b.meta["omega_threshold"]


def test_failures_recorded_or_raised(monkeypatch):
    spec = FieldSpec(1.8, SMALL_PHI, seed=4)
    band = FrequencyBand(3.0, 3)
    monkeypatch.setattr(lp, "COND_LIMIT", 1.0)
    with pytest.raises(lp.NearSingularError, match="seed=4"):
        run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="direct", omega_threshold=math.inf)
    ds = run_sweep(spec, SMALL, MED, band, SMALL_REC, mode="direct", omega_threshold=math.inf,
                   on_failure="record")
    assert len(ds.meta["failures"]) == 3
    assert len(ds.missing()) == 3 * 3


def test_unknown_mode_and_receiver_inside():
    spec = FieldSpec(1.8, SMALL_PHI)
    with pytest.raises(ValueError):
        run_sweep(spec, SMALL, MED, FrequencyBand(2.0, 2), SMALL_REC, mode="exact")
    with pytest.raises(ValueError):
        run_sweep(spec, SMALL, MED, FrequencyBand(2.0, 2), [[0.1, 0.1]], mode="u1_only")


def test_band_doubling_changes_statistic_little():
    cfg = load_config(REFERENCE)
    g = cfg.d_grid()
    phi = cfg.phi_on(g)
    spec = FieldSpec(cfg.field.m, phi, seed=2)
    rec = cfg.receivers()
    base = FrequencyBand(20.0, 77)  # production spacing 0.25
    fine = FrequencyBand(20.0, 153)
    s1 = frequency_average(run_sweep(spec, g, cfg.elastic, base, rec, mode="u1_only"), cfg.field.m)
    s2 = frequency_average(run_sweep(spec, g, cfg.elastic, fine, rec, mode="u1_only"), cfg.field.m)
    assert np.max(np.abs(s1 - s2) / s2) < 5e-3


def test_estimate_wraps_average_and_rhs():
    g, phi = _bump_grid(0.1)
    spec = FieldSpec(1.8, phi, seed=1)
    ds = run_sweep(spec, g, MED, FrequencyBand(5.0, 9), SMALL_REC * 2, mode="u1_only")
    res = estimate(ds, phi, g, MED, 1.8)
    np.testing.assert_array_equal(res.s_q, frequency_average(ds, 1.8))
    np.testing.assert_array_equal(res.rhs, analytic_rhs(phi, g, MED, 1.8, ds.receivers))
    assert res.q == 5.0


def test_deviation_summary_logic():
    rhs = np.ones(4)
    per_seed = [{20: rhs * 1.4, 50: rhs * 1.2, 100: rhs * 1.1}, {20: rhs * 0.7, 50: rhs * 0.9, 100: rhs * 1.05}]
    out = deviation_summary(per_seed, rhs)
    assert out["non_increasing"] and out["below_25pct_at_top"]
    assert out["seed_spread"] == pytest.approx(0.05)
    assert out["median_deviation"]["100"] == pytest.approx(0.075)


# --- oscillatory integral ------------------------------------------------------


def _phi_fn(Z):
    r = np.hypot(Z[..., 0], Z[..., 1])
    return np.where(r < 0.3, np.exp(-r**2 / 0.02) * np.exp(1 - 1 / np.maximum(1 - (r / 0.3) ** 2, 1e-300)), 0.0)


def test_equal_speeds_analytic_side_real_positive():
    res = oscillatory_leading_order((1.0, 0.2), 40.0, "2cs", "2cs", (0, 0, 0, 0, 1, 1), _phi_fn, 1.8, MED)
    assert res.analytic.real > 0 and res.analytic.imag == 0


@pytest.mark.parametrize("exps", [(1, 0, 0), (-1, 0, 0, 0, 1, 1), (0.5, 0, 0, 0, 1, 1), (2, 0, 0, 0, 1, 1),
                                  (0, 0, 0, 0, 0.3, 1)])
def test_exponent_family_enforced(exps):
    with pytest.raises(ValueError):
        oscillatory_leading_order((1.0, 0.2), 10.0, "2cs", "2cs", exps, _phi_fn, 1.8, MED)


def test_speed_labels_enforced():
    with pytest.raises(ValueError):
        oscillatory_leading_order((1.0, 0.2), 10.0, "3cs", "2cs", (0, 0, 0, 0, 1, 1), _phi_fn, 1.8, MED)


def test_observation_point_inside_box_rejected():
    with pytest.raises(ValueError):
        oscillatory_leading_order((0.1, 0.2), 10.0, "2cs", "2cs", (0, 0, 0, 0, 1, 1), _phi_fn, 1.8, MED)
