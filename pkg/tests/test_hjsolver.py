import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from ksencounter import hjsolver as hj
from ksencounter.algebra import MultiSeries, get_ring
from ksencounter.errors import DomainError, ParameterError
from ksencounter.kscore import Params, shifted_energy, snu_matrix

MU, E = hj.MU_STAR, hj.E_STAR


def _ks_project_sym(u):
    u1, u2, u3, u4 = u
    return [u1**2 - u2**2 - u3**2 + u4**2, 2 * (u1 * u2 - u3 * u4), 2 * (u1 * u3 + u2 * u4)]


def _ks_matrix_sym(u):
    u1, u2, u3, u4 = u
    return sp.Matrix([[u1, -u2, -u3, u4], [u2, u1, -u4, -u3],
                      [u3, u4, u1, u2], [u4, -u3, u2, -u1]])


def _oracle_p1(params, lam, Pi, v, p_rest, N):
    """Taylor coefficients in t of dW/du1 along u = t v, straight from K = kappa/lam."""
    t, P1 = sp.symbols("t P1")
    u = [t * sp.Float(x, 30) for x in v]
    q = _ks_project_sym(u)
    omega = [sp.Float(x, 30) for x in Pi[2]]
    e = [sp.Float(x, 30) for x in Pi[0]]
    w = sp.Matrix(omega).cross(sp.Matrix(q))
    b = 2 * _ks_matrix_sym(u).T * sp.Matrix([w[0], w[1], w[2], 0])
    rho = sum(x**2 for x in u)
    p = [P1] + p_rest
    d = [p[j] - lam**2 * b[j] for j in range(4)]
    m1 = 1 - params.mu
    s = [lam * q[k] + e[k] for k in range(3)]
    K = sum(x**2 for x in d) / (8 * lam**2) - lam**2 * rho * (w.dot(w)) / 2 - params.mu / lam \
        - rho * shifted_energy(params.E, params.mu) \
        - m1 * rho * (1 / sp.sqrt(sum(x**2 for x in s)) - 1 + lam * sum(q[k] * e[k] for k in range(3)))
    # K is quadratic in P1 with leading coefficient 1/(8 lam^2); take the + root
    a0 = K.subs(P1, 0) - params.kappa / lam
    a1 = sp.diff(K, P1).subs(P1, 0)
    a2 = sp.Rational(1, 8) / lam**2
    root = (-a1 + sp.sqrt(a1**2 - 4 * a2 * a0)) / (2 * a2)
    ser = sp.series(root, t, 0, N + 1).removeO()
    return [float(ser.coeff(t, k)) for k in range(N + 1)]


def test_rhs_matches_symbolic_oracle(rng):
    N = 4
    nu = np.array([0.9, -0.3, 0.4, 0.2])
    lam = float(nu @ nu)
    _, _, Pi = snu_matrix(nu)
    params = Params(mu=0.1, E=E, kappa=0.1 * (lam - 1.0), nu=tuple(nu))
    ring = get_ring(4, N)
    rest = [MultiSeries(4, N, 0.2 * rng.normal(size=ring.size)) for _ in range(3)]
    got = hj.build_rhs(params, *rest)
    for _ in range(3):
        v = rng.normal(size=4)
        # restricting each series to the ray gives exact polynomials in t
        t = sp.Symbol("t")
        p_rest = []
        for s in rest:
            poly = 0
            for d in range(N + 1):
                poly += s.homogeneous_part(d)(v) * t**d
            p_rest.append(poly)
        want = _oracle_p1(params, lam, Pi, v, p_rest, N)
        for d in range(N + 1):
            assert got.homogeneous_part(d)(v) == pytest.approx(want[d], rel=1e-10, abs=1e-12)


def test_graded_and_picard_agree(rng):
    nu = rng.normal(size=4)
    p = Params(mu=0.1, E=E, kappa=0.1 * (nu @ nu - 1), nu=tuple(nu))
    a = hj.solve_wtilde(p, 6, "graded")
    b = hj.solve_wtilde(p, 6, "picard")
    scale = a.wtilde.max_abs()
    assert np.max(np.abs(a.wtilde.coeffs - b.wtilde.coeffs)) <= 1e-12 * scale
    assert b.passes <= 8


def test_boundary_condition_and_constant():
    sol = hj.solve_wtilde(Params(mu=MU, E=E), 6)
    ring = sol.wtilde.ring
    on_plane = ring.exps[:, 0] == 0
    assert np.all(sol.wtilde.coeffs[on_plane] == 0)


def test_assembly_rejects_wrong_level():
    nu = (1.1, 0.0, 0.2, 0.0)
    sol = hj.solve_wtilde(Params(mu=MU, E=E, kappa=0.0, nu=nu), 4)
    with pytest.raises(ParameterError):
        hj.assemble_W(sol)


def test_invalid_inputs():
    with pytest.raises(ParameterError):
        hj.solve_wtilde(Params(mu=MU, E=E), 0)
    with pytest.raises(ParameterError):
        hj.solve_wtilde(Params(mu=MU, E=E), 17)
    with pytest.raises(DomainError):
        hj.solve_wtilde(Params(mu=MU, E=E, nu=(0, 0, 0, 0)), 4)
    with pytest.raises(DomainError):
        hj.solve_wtilde(Params(mu=MU, E=E, kappa=-MU), 4)
    with pytest.raises(ParameterError):
        hj.solve_wtilde(Params(mu=MU, E=E), 4, method="newton")
    with pytest.raises(DomainError):
        hj.solve_planar(0.0, -1.0, E, MU, 4)


def test_residual_vanishes_below_order(rng):
    for mu in (0.01, 0.5):
        nu = rng.normal(size=4)
        nu /= np.linalg.norm(nu)
        rep = hj.residual_report(hj.complete_integral(mu, E, 1.2 * nu, 8))
        for d in range(8):
            assert rep[d] <= 1e-10 * np.sqrt(8 * mu), d


def test_pointwise_residual_shrinks_with_radius(rng):
    ci = hj.complete_integral(0.1, E, [0.6, 0.2, -0.7, 0.3], 10)
    v = rng.normal(size=(5, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r1 = np.max(np.abs(hj.residual_pointwise(ci, 0.02 * v)))
    r2 = np.max(np.abs(hj.residual_pointwise(ci, 0.01 * v)))
    assert r1 < 1e-12
    assert r2 < r1 / 100 or r2 < 1e-15


def test_leading_terms():
    nu = np.array([0.5, -0.5, 0.5, 0.5]) * 1.3
    ci = hj.complete_integral(MU, E, nu, 4)
    lin = [ci.w.coefficient(tuple(e)) for e in np.eye(4, dtype=int)]
    np.testing.assert_allclose(lin, np.sqrt(8 * MU) * nu, atol=1e-13)
    assert ci.w.coefficient((0, 0, 0, 0)) == 0.0


def test_unit_nu_gives_identity_frame():
    ci = hj.complete_integral(MU, E, [1, 0, 0, 0], 6)
    np.testing.assert_allclose(ci.w.coeffs, ci.source.wtilde.coeffs, atol=1e-15)
    assert ci.level == 0.0


def test_fibre_equivariance(rng):
    from ksencounter.kscore import s0_alpha
    nu = rng.normal(size=4)
    a = 0.7
    S0 = s0_alpha(a)
    w1 = hj.complete_integral(MU, E, nu, 6).w
    w2 = hj.complete_integral(MU, E, S0 @ nu, 6).w
    for u in 0.05 * rng.normal(size=(5, 4)):
        assert w2(S0 @ u) == pytest.approx(w1(u), rel=1e-11, abs=1e-15)


def test_cubic_coefficient_closed_form():
    rep = hj.cubic_coefficient_report(hj.solve_wtilde(Params(mu=MU, E=E), 4))
    assert rep["max_rel_diff"] <= 1e-12
    assert rep["other_cubic_max"] <= 1e-12
    assert rep["agrees"]


def test_parameter_jacobian_determinants(rng):
    for mu in (0.01, 0.3):
        nu = rng.normal(size=4)
        nu /= np.linalg.norm(nu)
        assert hj.j4(mu, E, nu) == pytest.approx(64 * mu**2, rel=1e-9)
    for alpha in (0.0, 0.4, 2.5):
        assert abs(hj.j2(alpha, 0.0, E, MU)) == pytest.approx(4.0, abs=1e-10)


def test_derivative_paths_agree():
    assert hj.derivative_agreement(MU, E, [0.7, 0.1, -0.6, 0.3], 6) <= 1e-6
    with pytest.raises(ParameterError):
        hj.param_derivative(MU, E, [1, 0, 0, 0], 4, 4)


def test_planar_agrees_with_spatial_slice():
    # alpha = 0 with kappa = 0 is the spatial problem at nu = e1 restricted to u3 = u4 = 0
    N = 8
    pl = hj.solve_planar(0.0, 0.0, E, MU, N)
    sp4 = hj.solve_wtilde(Params(mu=MU, E=E), N)
    for e, val in sp4.wtilde.to_dict().items():
        if e[2] == 0 and e[3] == 0:
            assert pl.wtilde.coefficient(e[:2]) == pytest.approx(val, rel=1e-12, abs=1e-15)


def test_json_round_trip():
    nu = (0.8, 0.1, 0.2, -0.3)
    ci = hj.complete_integral(MU, E, nu, 6)
    text = hj.series_to_json(ci.w, ci.params)
    back, params = hj.series_from_json(text)
    assert back == ci.w
    assert params.nu == ci.params.nu
    assert hj.series_to_json(back, params) == text


def test_convergence_radius_estimate():
    ci = hj.complete_integral(0.1, E, [1, 0, 0, 0], 12)
    r = hj.convergence_radius(ci.w)
    assert 0.1 < r < 10


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 6.28), st.floats(-0.005, 0.05))
def test_planar_boundary_condition(alpha, kappa):
    pl = hj.solve_planar(alpha, kappa, E, MU, 5)
    ring = pl.wtilde.ring
    assert np.all(pl.wtilde.coeffs[ring.exps[:, 0] == 0] == 0)
    lin = pl.w2.coefficient((1, 0)), pl.w2.coefficient((0, 1))
    np.testing.assert_allclose(lin, np.sqrt(8 * (MU + kappa)) * np.array([np.cos(alpha), np.sin(alpha)]),
                               atol=1e-13)
