import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksencounter import kscore as ks
from ksencounter.errors import ChartDomainError, CollisionError, DomainError, ParameterError
from ksencounter.verify import kscore_identities

MU, E = 0.01, -1.8


def test_matrix_examples():
    A = ks.ks_matrix([1, 0, 0, 0])
    np.testing.assert_array_equal(A, np.diag([1.0, 1.0, 1.0, -1.0]))
    u = np.array([1.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(ks.ks_matrix(u) @ ks.ks_matrix(u).T, 2 * np.eye(4))
    v = np.array([0.3, -1.2, 0.5, 2.0])
    np.testing.assert_allclose(ks.ks_matrix(2 * v), 2 * ks.ks_matrix(v))


def test_projection_examples():
    np.testing.assert_allclose(ks.ks_project([1, 0, 0, 0]), [1, 0, 0])
    np.testing.assert_allclose(ks.ks_project([1, 1, 0, 0]), [0, 2, 0])
    u = np.array([0.3, -1.2, 0.5, 2.0])
    full = ks.ks_matrix(u) @ u
    assert full[3] == 0.0
    np.testing.assert_allclose(full[:3], ks.ks_project(u))
    np.testing.assert_allclose(ks.projection_jacobian(u) @ np.array([1e-7, 0, 0, 0]),
                               ks.ks_project(u + [1e-7, 0, 0, 0]) - ks.ks_project(u), atol=1e-13)


def test_bilinear_examples(rng):
    assert ks.bilinear([1, 0, 0, 0], [0, 0, 0, 1]) == -1.0
    u, U = rng.normal(size=4), rng.normal(size=4)
    assert ks.bilinear(u, U) == pytest.approx(-ks.bilinear(U, u))
    assert ks.bilinear(u, ks.vector_potential(u, rng.normal(size=3))) == pytest.approx(0.0, abs=1e-14)
    assert ks.bilinear(u, U) == pytest.approx(u @ ks.OMEGA @ U)


def test_vector_potential_examples(rng):
    np.testing.assert_allclose(ks.vector_potential([1, 0, 0, 0], [0, 0, 1]), [0, 2, 0, 0])
    u, w = rng.normal(size=4), rng.normal(size=3)
    assert np.all(ks.vector_potential(u, np.zeros(3)) == 0)
    np.testing.assert_allclose(ks.vector_potential(u, 2 * w), 2 * ks.vector_potential(u, w))
    lam = ks.lambda_omega(w)
    np.testing.assert_allclose(ks.vector_potential(u, w),
                               2 * ks.ks_matrix(u).T @ lam @ ks.ks_matrix(u) @ u, atol=1e-13)


def test_snu_examples():
    S, R, Pi = ks.snu_matrix([1, 0, 0, 0])
    np.testing.assert_array_equal(S, np.eye(4))
    np.testing.assert_array_equal(R, np.eye(3))
    _, _, Pi = ks.snu_matrix([0, 1, 0, 0])
    np.testing.assert_allclose(Pi, np.diag([-1.0, -1.0, 1.0]))
    with pytest.raises(DomainError):
        ks.snu_matrix(np.zeros(4))


def test_snu_is_rotation(rng):
    for _ in range(20):
        _, R, Pi = ks.snu_matrix(rng.normal(size=4))
        np.testing.assert_allclose(Pi @ Pi.T, np.eye(3), atol=1e-14)
        assert np.linalg.det(Pi) == pytest.approx(1.0)


def test_fibre_rotation(rng):
    np.testing.assert_array_equal(ks.s0_alpha(0.0), np.eye(4))
    a, b = rng.uniform(-3, 3, 2)
    np.testing.assert_allclose(ks.s0_alpha(a) @ ks.s0_alpha(b), ks.s0_alpha(a + b), atol=1e-15)
    np.testing.assert_allclose(ks.s0_alpha(a) @ ks.s0_alpha(-a), np.eye(4), atol=1e-15)
    u, U = rng.normal(size=4), rng.normal(size=4)
    S0 = ks.s0_alpha(a)
    np.testing.assert_allclose(ks.ks_project(S0 @ u), ks.ks_project(u), atol=1e-14)
    assert ks.bilinear(S0 @ u, S0 @ U) == pytest.approx(ks.bilinear(u, U), abs=1e-14)
    assert np.linalg.det(S0) == pytest.approx(1.0)


def test_identity_suite_small_sample(rng):
    vals = kscore_identities(rng, 2000)
    assert vals["AAT"] <= 1e-13
    assert vals["pi_norm"] <= 1e-13
    assert vals["fourth_component"] <= 1e-14
    for key in ("pi_S_equals_R_pi", "SST", "RRT", "l_scaling", "l_fibre_invariance",
                "commuting_diagram"):
        assert vals[key] <= 1e-11, key


def test_row_hamiltonian_matches_scalar(rng):
    u, U, nu = rng.normal(size=(3, 5, 4))
    S, R, nn = ks.snu_batched(nu.T)
    R = np.moveaxis(R, -1, 0) / nn[:, None, None]
    rows = ks.ham_ks_rows(0.1 * u, U, MU, E, nn, R)
    for i in range(5):
        assert rows[i] == pytest.approx(ks.ham_ks_general(0.1 * u[i], U[i], MU, E, nn[i], R[i]))


def test_collision_level():
    nu = np.array([0.5, 0.5, -0.5, 0.5])
    U = np.sqrt(8 * MU) * nu
    assert ks.ham_ks_identity(np.zeros(4), U, MU, E) == pytest.approx(0.0, abs=1e-16)
    assert ks.ham_ks_identity(np.zeros(4), 2 * U, MU, E) == pytest.approx(4 * MU - MU)


def test_ks_hamiltonian_is_rescaled_energy(rng):
    for _ in range(20):
        x = np.r_[rng.uniform(-0.05, 0.05, 3), rng.normal(size=3)]
        lift = ks.chart_lift(x)
        K = ks.ham_ks_identity(lift.u, lift.U, MU, E)
        r = np.linalg.norm(x[:3])
        assert K == pytest.approx(r * (ks.ham_planeto(x, MU) - E), rel=1e-12, abs=1e-14)


def test_translation_between_frames(rng):
    for body in (1, 2):
        for _ in range(20):
            x = np.r_[rng.uniform(-0.5, 0.5, 3), rng.normal(size=3)]
            bary = ks.from_planeto(x, MU, body)
            assert ks.ham_bary(bary, MU) == pytest.approx(ks.ham_planeto(x, MU if body == 2 else 1 - MU), rel=1e-12)
            np.testing.assert_allclose(np.asarray(ks.to_planeto(bary, MU, body)), x, atol=1e-15)


def test_planar_restriction_matches_lc(rng):
    for _ in range(20):
        u2, U2 = rng.normal(size=2) * 0.2, rng.normal(size=2)
        u4 = np.array([u2[0], u2[1], 0.0, 0.0])
        U4 = np.array([U2[0], U2[1], 0.0, 0.0])
        assert ks.ham_lc(u2, U2, MU, E) == pytest.approx(ks.ham_ks_identity(u4, U4, MU, E), rel=1e-12)


def test_singular_configurations():
    with pytest.raises(CollisionError):
        ks.ham_planeto(np.zeros(6), MU)
    with pytest.raises(CollisionError):
        ks.ham_bary([0.75, 0, 0, 0, 0, 0], 0.25)
    with pytest.raises(CollisionError):
        ks.ham_planeto([-1, 0, 0, 0, 0, 0], MU)
    with pytest.raises(CollisionError):
        ks.phase_project(np.r_[np.zeros(4), np.ones(4)])


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        d1 = (f(x + e) - f(x - e)) / (2 * h)
        d2 = (f(x + 2 * e) - f(x - 2 * e)) / (4 * h)
        g[i] = (4 * d1 - d2) / 3
    return g


def test_gradients_against_differences(rng):
    for _ in range(10):
        x = np.r_[rng.uniform(-0.3, 0.3, 3), rng.normal(size=3)]
        np.testing.assert_allclose(ks.grad_planeto(x, MU), fd_gradient(lambda y: ks.ham_planeto(y, MU), x),
                                   rtol=1e-8, atol=1e-8)
        b = np.r_[rng.uniform(-0.3, 0.3, 3), rng.normal(size=3)]
        np.testing.assert_allclose(ks.grad_bary(b, MU), fd_gradient(lambda y: ks.ham_bary(y, MU), b),
                                   rtol=1e-8, atol=1e-8)
        z = np.r_[rng.normal(size=4) * 0.3, rng.normal(size=4)]
        nu = rng.normal(size=4)
        _, _, Pi = ks.snu_matrix(nu)
        lam = nu @ nu
        f = lambda y: ks.ham_ks_general(y[:4], y[4:], MU, E, lam, Pi)
        np.testing.assert_allclose(ks.grad_ks_general(z[:4], z[4:], MU, E, lam, Pi), fd_gradient(f, z),
                                   rtol=1e-8, atol=1e-8)
        w = np.r_[rng.normal(size=2) * 0.3, rng.normal(size=2)]
        f2 = lambda y: ks.ham_lc(y[:2], y[2:], MU, E)
        np.testing.assert_allclose(ks.grad_lc(w[:2], w[2:], MU, E), fd_gradient(f2, w), rtol=1e-8, atol=1e-8)


def test_chart_examples():
    np.testing.assert_allclose(ks.chart_inverse([1, 0, 0], ks.Chart.PlusX), [1, 0, 0, 0])
    u = ks.chart_inverse([-1, 0, 0], ks.Chart.MinusX)
    np.testing.assert_allclose(u, [0, 1, 0, 0])
    np.testing.assert_allclose(ks.ks_project(u), [-1, 0, 0])
    with pytest.raises(ChartDomainError):
        ks.chart_inverse([-1, 0, 0], ks.Chart.PlusX)
    with pytest.raises(ChartDomainError):
        ks.chart_inverse([2, 0, 0], ks.Chart.MinusX)
    with pytest.raises(CollisionError):
        ks.select_chart([0, 0, 0])


def test_chart_selection_rule():
    assert ks.select_chart([0.1, -1, 0]) is ks.Chart.PlusX
    assert ks.select_chart([-0.1, 1, 0]) is ks.Chart.MinusX
    assert ks.select_chart([0.0, 1, 0]) is ks.Chart.PlusX


def test_charts_related_by_fibre_rotation(rng):
    for _ in range(50):
        x = np.r_[rng.normal(size=3), rng.normal(size=3)]
        up = ks.chart_lift(x, ks.Chart.PlusX)
        um = ks.chart_lift(x, ks.Chart.MinusX)
        a = ks.transition_angle(up.u, um.u)
        S0 = ks.s0_alpha(a)
        np.testing.assert_allclose(S0 @ um.u, up.u, atol=1e-13)
        np.testing.assert_allclose(S0 @ um.U, up.U, atol=1e-12)


def test_phase_projection_examples(rng):
    got = ks.phase_project(np.array([1.0, 0, 0, 0, 2.0, 0, 0, 0]))
    np.testing.assert_allclose(got.q, [1, 0, 0])
    np.testing.assert_allclose(got.p, [1, 0, 0])
    for _ in range(100):
        x = np.r_[rng.normal(size=3), rng.normal(size=3)]
        lift = ks.chart_lift(x)
        np.testing.assert_allclose(np.asarray(ks.phase_project(lift)), x, rtol=1e-12, atol=1e-13)
        assert abs(ks.bilinear(lift.u, lift.U)) <= 1e-14 * (np.linalg.norm(lift.u) * np.linalg.norm(lift.U) + 1)
        S0 = ks.s0_alpha(rng.uniform(0, 6))
        np.testing.assert_allclose(np.asarray(ks.phase_project(np.r_[S0 @ lift.u, S0 @ lift.U])), x,
                                   rtol=1e-12, atol=1e-13)


def test_planar_lift_examples(rng):
    u, _ = ks.lc_lift([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(u, [1, 0])
    u, _ = ks.lc_lift([-1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(u, [0, 1], atol=1e-16)
    for _ in range(50):
        x = rng.normal(size=4)
        u, U = ks.lc_lift(x)
        np.testing.assert_allclose(ks.lc_project(u, U), x, rtol=1e-12, atol=1e-13)
        K = ks.ham_lc(u, U, MU, E)
        full = np.array([x[0], x[1], 0, x[2], x[3], 0])
        assert K == pytest.approx((u @ u) * (ks.ham_planeto(full, MU) - E), rel=1e-11, abs=1e-13)
    with pytest.raises(CollisionError):
        ks.lc_lift([0, 0, 1, 1])


def test_params_validation():
    p = ks.Params(mu=0.01, E=-1.8)
    assert p.E_mu == pytest.approx(-1.8 + 0.99 + 0.5 * 0.99**2)
    assert ks.Params(mu=0.01, E=-1.8, body=1).mass == pytest.approx(0.99)
    with pytest.raises(ParameterError):
        ks.Params(mu=0.0, E=-1.8)
    with pytest.raises(ParameterError):
        ks.Params(mu=0.01, E=-1.8, lam=-1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_commuting_diagram_property(u, nu):
    u = 0.1 * np.array(u)
    nu = np.array(nu)
    if np.linalg.norm(nu) < 0.5:
        nu = nu + np.array([1.0, 0, 0, 0])
    U = np.array([0.3, -0.2, 0.1, 0.25])
    S, R, Pi = ks.snu_matrix(nu)
    lam = nu @ nu
    lhs = ks.ham_ks_identity(S @ u, S @ U / lam, MU, E)
    rhs = lam * ks.ham_ks_general(u, U, MU, E, lam, Pi)
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)
