import json

import numpy as np
import pytest

from ksencounter import canonical as cn
from ksencounter import kscore as ks
from ksencounter.errors import DomainError, InversionError, ParameterError
from ksencounter.verify import ball_state, entry_state, ks_sample, planar_spatial_gap, reference_exit

MU, E = 0.01, -1.8
SIGMA = 1e-3


def test_nu_hat_at_collision_is_scaled_momentum(rng):
    nu = rng.normal(size=4)
    nu /= np.linalg.norm(nu)
    got, _, it = cn.nu_hat(np.zeros(4), np.sqrt(8 * MU) * nu, MU, E, 8)
    np.testing.assert_allclose(got, nu, atol=1e-12)
    assert it <= 2


def test_nu_hat_domain_and_convergence_errors():
    with pytest.raises(DomainError):
        cn.nu_hat(np.array([0.2, 0, 0, 0]), np.ones(4), MU, E, 6)
    with pytest.raises(InversionError) as exc:
        cn.nu_hat(np.array([0.01, 0.02, 0, 0]), np.array([0.3, 0.1, 0.2, 0.0]), MU, E, 6, maxiter=0)
    assert exc.value.residual > 0


def test_chi4_round_trip_on_zero_level(rng):
    for _ in range(3):
        z = ks_sample(rng, MU, E, 1e-4, 1e-3)
        n, nu = cn.chi4(z, MU, E, 12)
        assert np.linalg.norm(nu) == pytest.approx(1.0, abs=1e-9)
        assert abs(ks.bilinear(n, nu)) <= 1e-11
        back = np.asarray(cn.chi4_inverse(n, nu, MU, E, 12))
        np.testing.assert_allclose(back, z, atol=1e-9 * np.max(np.abs(z)))


def test_n_hat_matches_chi4(rng):
    z = ks_sample(rng, MU, E, 1e-4, 1e-3)
    n, nu = cn.chi4(z, MU, E, 10)
    np.testing.assert_allclose(cn.n_hat(z[:4], nu, MU, E, 10), n, atol=1e-15)


def test_map_preserves_symplectic_form(rng):
    z = ks_sample(rng, 0.1, E, 1e-3, 3e-3)
    assert cn.symplectic_defect(z, 0.1, E, 10) <= 1e-6


def test_encounter_matches_direct_integration(rng):
    x = entry_state(rng, SIGMA, MU, E)
    res = cn.encounter_map(x, SIGMA, MU, E, 12)
    ref = reference_exit(x, SIGMA, MU)
    assert res.status == "transit"
    np.testing.assert_allclose(np.asarray(res.exit), ref, atol=1e-6 * np.max(np.abs(ref)))
    assert np.linalg.norm(np.asarray(res.exit)[:3]) == pytest.approx(SIGMA, rel=1e-10)
    assert res.t_exit > 0 and res.s_exit > 0
    assert res.diagnostics["nu_drift"] <= 1e-9
    assert res.diagnostics["energy_drift"] <= 1e-8

    back = cn.encounter_map(res.exit, SIGMA, MU, E, 12, direction=-1)
    np.testing.assert_allclose(np.asarray(back.exit), x, atol=1e-8 * np.max(np.abs(x)))

    doc = json.loads(res.to_json())
    assert set(doc) == {"entry", "exit", "nu0", "n0", "s_exit", "t_exit", "diagnostics", "status"}
    assert set(doc["diagnostics"]) == {"nu_drift", "energy_drift", "bilinear", "newton_iters_max"}


def test_encounter_independent_of_chart(rng):
    x = entry_state(rng, SIGMA, MU, E)
    a = cn.encounter_map(x, SIGMA, MU, E, 10, chart=ks.Chart.PlusX)
    b = cn.encounter_map(x, SIGMA, MU, E, 10, chart=ks.Chart.MinusX)
    np.testing.assert_allclose(np.asarray(a.exit), np.asarray(b.exit), atol=1e-12 * np.max(np.abs(x)))


def test_encounter_input_validation(rng):
    x = entry_state(rng, SIGMA, MU, E)
    with pytest.raises(ParameterError):
        cn.encounter_map(x, 2 * SIGMA, MU, E)
    with pytest.raises(ParameterError):
        cn.encounter_map(x, SIGMA, MU, E + 0.1)
    with pytest.raises(ParameterError):
        cn.encounter_map(x, SIGMA, MU, E, direction=0)
    far = np.array([0.04, 0.0, 0.0, -1.0, 0.5, 0.0])
    with pytest.raises(DomainError):
        cn.encounter_map(far, 0.04, MU)


def test_planar_pipeline_matches_spatial(rng):
    x = entry_state(rng, SIGMA, MU, E, planar=True)
    assert planar_spatial_gap(x, SIGMA, MU, E, 10) <= 1e-7


def test_first_integrals_on_both_charts(rng):
    x = ball_state(rng, MU, E, 1e-5, 1e-3)
    trip = cn.cartesian_integrals(x, MU, E, 8)
    assert trip.H == pytest.approx(ks.ham_planeto(x, MU), rel=1e-14)
    assert trip.chart_discrepancy is not None
    assert trip.chart_discrepancy <= 1e-9
    assert trip.N2 == pytest.approx(trip.components @ trip.components)
    assert trip.NZ == trip.components[2]


def test_integral_components_formula(rng):
    n, nu = rng.normal(size=4), rng.normal(size=4)
    c = cn.first_integrals_nnu(n, nu)
    assert c.shape == (3,)
    # rotating both n and nu by a common fibre rotation leaves the triple unchanged
    S0 = ks.s0_alpha(1.1)
    np.testing.assert_allclose(cn.first_integrals_nnu(S0 @ n, S0 @ nu), c, atol=1e-13)


def test_canonical_brackets_in_cartesian_space(rng):
    x = rng.normal(size=6)
    for i in range(3):
        for j in range(3):
            qi = lambda y, i=i: y[i]
            pj = lambda y, j=j: y[3 + j]
            assert cn.poisson_bracket(qi, pj, x, 6) == pytest.approx(float(i == j), abs=1e-9)
    with pytest.raises(ParameterError):
        cn.poisson_bracket(lambda y: y[0], lambda y: y[1], x, 5)


def test_rank_helpers(rng):
    e = np.eye(6)
    assert cn.gradient_rank(e[0], e[1], e[2]) == 3
    assert cn.gradient_rank(e[0], 2 * e[0], e[2]) == 2
    assert cn.collision_manifold_rank(MU, E, [0.5, 0.5, 0.5, 0.5]) == 5


def test_completeness_on_small_sample(rng):
    states = [ball_state(rng, MU, E, 1e-5, 1e-3) for _ in range(3)]
    rep = cn.completeness_check(states, MU, E, 4)
    assert rep["samples"] == 3
    assert rep["rank3_fraction"] == 1.0
