import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksencounter.algebra import MultiSeries, arith, get_ring, pow_real
from ksencounter.errors import DimensionError, DomainError
from ksencounter.kscore import s0_alpha


def u(v, N=4, nvars=4):
    return MultiSeries.variable(nvars, N, v)


def one(N=4, nvars=4):
    return MultiSeries.constant(nvars, N, 1.0)


def series_from_seed(seed, N=5, const=0.0, scale=0.1):
    r = np.random.default_rng(seed)
    ring = get_ring(4, N)
    c = r.uniform(-scale, scale, ring.size)
    c[0] = const if const else c[0]
    return MultiSeries(4, N, c)


def test_product_of_conjugates():
    got = (one(2) + u(0, 2)) * (one(2) - u(0, 2))
    assert got.to_dict() == {(0, 0, 0, 0): 1.0, (2, 0, 0, 0): -1.0}


def test_truncation_drops_high_degree():
    s = u(0, 1) + u(1, 1)
    assert (s * s).max_abs() == 0.0


def test_add_zero_and_scaled_arith():
    a = series_from_seed(1)
    assert a + MultiSeries(4, 5) == a
    np.testing.assert_allclose(arith(a, a, "add", 0.5).coeffs, a.coeffs)


def test_mismatched_rings_raise():
    with pytest.raises(DimensionError):
        u(0, 3) + u(0, 4)
    with pytest.raises(DimensionError):
        MultiSeries.variable(2, 3, 0) * MultiSeries.variable(4, 3, 0)
    with pytest.raises(DimensionError):
        MultiSeries(3, 2)


def test_binomial_square_root():
    got = (one(2) + 2 * u(0, 2)) ** 0.5
    assert got.to_dict() == pytest.approx({(0, 0, 0, 0): 1.0, (1, 0, 0, 0): 1.0,
                                           (2, 0, 0, 0): -0.5})


def test_power_edge_cases():
    a = series_from_seed(2, const=1.3)
    assert (a ** 0).to_dict() == {(0, 0, 0, 0): 1.0}
    assert (MultiSeries.constant(4, 3, 4.0) ** 0.5).coefficient((0, 0, 0, 0)) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        pow_real(u(0) - 0.5, 0.5)
    with pytest.raises(DomainError):
        pow_real(MultiSeries(4, 3), 0.5)


def test_partial_examples():
    x = u(0, 4) * u(0, 4) * u(1, 4)
    assert x.partial(0).to_dict() == {(1, 1, 0, 0): 2.0}
    assert MultiSeries.constant(4, 4, 3.0).partial(0).max_abs() == 0.0
    nu = np.array([0.5, -0.5, 0.5, 0.5])
    lin = sum((np.sqrt(0.08) * nu[j] * u(j) for j in range(4)), MultiSeries(4, 4))
    assert lin.partial(1).coefficient((0, 0, 0, 0)) == pytest.approx(np.sqrt(0.08) * nu[1])


def test_antiderivative_examples_and_flag():
    assert one(3).antiderivative(0).to_dict() == {(1, 0, 0, 0): 1.0}
    two = 2 * u(0, 3) * u(1, 3)
    assert two.antiderivative(0).to_dict() == {(2, 1, 0, 0): 1.0}
    assert not two.antiderivative(0).truncated
    top = u(0, 3) * u(1, 3) * u(2, 3)
    assert top.antiderivative(0).truncated
    a = series_from_seed(3)
    assert a.antiderivative(0)(np.array([0.0, 0.3, -0.2, 0.1])) == pytest.approx(0.0, abs=1e-17)


def test_evaluation_examples():
    s = one(2) - u(0, 2) * u(0, 2)
    assert s(np.array([0.5, 0.0, 0.0, 0.0])) == pytest.approx(0.75)
    a = series_from_seed(4)
    assert a(np.zeros(4)) == a.coefficient((0, 0, 0, 0))
    with pytest.raises(DimensionError):
        a(np.zeros(3))


def test_substitution_examples():
    a = series_from_seed(5)
    assert a.linear_substitute(np.eye(4)) == a
    alpha = 0.7
    got = u(0).linear_substitute(s0_alpha(alpha))
    want = np.cos(alpha) * u(0) + np.sin(alpha) * u(3)
    np.testing.assert_allclose(got.coeffs, want.coeffs, atol=1e-15)


def test_substitution_preserves_degree_filtration():
    a = series_from_seed(6).homogeneous_part(3)
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))
    b = a.linear_substitute(Q, 1.7)
    ring = b.ring
    mask = np.ones(ring.size, bool)
    mask[ring.band(3)] = False
    assert np.max(np.abs(b.coeffs[mask])) == 0.0


def test_from_dict_round_trip():
    a = series_from_seed(7)
    assert MultiSeries.from_dict(4, 5, a.to_dict()) == a


def test_subnormal_flush_and_finite_guard():
    c = np.zeros(get_ring(2, 2).size)
    c[1] = 1e-310
    assert MultiSeries(2, 2, c).max_abs() == 0.0
    c[1] = np.nan
    with pytest.raises(DomainError):
        MultiSeries(2, 2, c)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds, seeds, seeds)
def test_ring_axioms(s1, s2, s3):
    a, b, c = (series_from_seed(s, N=6, scale=1.0) for s in (s1, s2, s3))
    assert ((a * b) * c - a * (b * c)).max_abs() <= 1e-13 * 50
    assert (a * (b + c) - (a * b + a * c)).max_abs() <= 1e-13 * 10
    assert (a * b - b * a).max_abs() <= 1e-13


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.5, 2.0))
def test_sqrt_squared(seed, a0):
    a = series_from_seed(seed, N=6, const=a0)
    r = a ** 0.5
    assert (r * r - a).max_abs() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(0, 3))
def test_partial_inverts_antiderivative(seed, v):
    a = series_from_seed(seed, N=6)
    low = sum((a.homogeneous_part(d) for d in range(6)), MultiSeries(4, 6))
    assert (low.antiderivative(v).partial(v) - low).max_abs() <= 1e-15


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_evaluation_respects_products(seed):
    r = np.random.default_rng(seed)
    ring = get_ring(4, 4)
    ca, cb = np.zeros(ring.size), np.zeros(ring.size)
    n2 = ring.band_start[3]
    ca[:n2] = r.normal(size=n2)
    cb[:n2] = r.normal(size=n2)
    a, b = MultiSeries(4, 4, ca), MultiSeries(4, 4, cb)
    p = r.uniform(-0.1, 0.1, 4)
    assert (a * b)(p) == pytest.approx(a(p) * b(p), rel=1e-12, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_evaluation_commutes_with_substitution(seed):
    r = np.random.default_rng(seed)
    a = series_from_seed(seed, N=5, scale=1.0)
    M = r.normal(size=(4, 4))
    p = r.uniform(-0.3, 0.3, 4)
    assert a.linear_substitute(M, 0.6)(p) == pytest.approx(a(0.6 * M.T @ p), rel=1e-11, abs=1e-13)


def test_gradient_matches_partials(rng):
    from ksencounter.algebra import gradient
    a = series_from_seed(8, N=5, scale=1.0)
    p = rng.uniform(-0.2, 0.2, 4)
    g = gradient(a, p)
    np.testing.assert_allclose(g, [a.partial(v)(p) for v in range(4)], rtol=1e-12, atol=1e-14)
