"""Hamilton-Jacobi series near collision, built degree by degree.

The regularized HJ equation is solved for ``dW/du1`` on the branch with the
positive square root,

    dW/du1 = B1 + sign * pref * sqrt(Q0 - c * sum_{j>1} (dW/duj - Bj)**2),

with ``W = 0`` on ``u1 = 0``.  Because the right-hand side in degree ``d``
only involves ``W`` through degree ``d``, integrating in ``u1`` fixes one new
homogeneous band per pass.  The same routine serves the spatial problem (4
variables, parameters ``nu``) and the planar Levi-Civita one (2 variables,
parameters ``alpha, kappa``).

All internal arrays carry optional trailing batch axes, which is how several
parameter values (complex-step or finite-difference columns) are processed in
one sweep.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .algebra import MultiSeries, get_ring
from .errors import AccuracyError, ConsistencyError, DomainError, ParameterError
from .kscore import Params, shifted_energy, snu_batched

DEFAULT_ORDER = 10
E_STAR = -1.8
MU_STAR = 0.01
COMPLEX_STEP = 1e-20


def _bc(a: np.ndarray, batch: tuple) -> np.ndarray:
    """Reshape a ``(size,)`` array so it broadcasts against ``(size,) + batch``."""
    return a.reshape(a.shape + (1,) * len(batch))


# ---------------------------------------------------------------- ingredients

@functools.lru_cache(maxsize=None)
def _spatial_geometry(N: int) -> dict:
    """Parameter-free polynomial pieces of the regularized Hamiltonian."""
    ring = get_ring(4, N)
    x = [ring.variable(v) for v in range(4)]
    mul = ring.mul
    sq = [mul(xi, xi) for xi in x]
    rho = sq[0] + sq[1] + sq[2] + sq[3]
    P = np.array([
        sq[0] - sq[1] - sq[2] + sq[3],
        2.0 * (mul(x[0], x[1]) - mul(x[2], x[3])),
        2.0 * (mul(x[0], x[2]) + mul(x[1], x[3])),
    ])
    # A(u) entries as linear series
    A = np.zeros((4, 4, ring.size))
    basis = [
        [(0, 1), (1, -1), (2, -1), (3, 1)],
        [(1, 1), (0, 1), (3, -1), (2, -1)],
        [(2, 1), (3, 1), (0, 1), (1, 1)],
        [(3, 1), (2, -1), (1, 1), (0, -1)],
    ]
    for i, row in enumerate(basis):
        for j, (v, sgn) in enumerate(row):
            A[i, j] = sgn * x[v]
    # b_{e_k}(u) = 2 A(u)^T (e_k x pi(u), 0)
    cross = np.zeros((3, 3, ring.size))
    for k in range(3):
        ek = np.eye(3)[k]
        for i in range(3):
            for m in range(3):
                c = np.cross(ek, np.eye(3)[m])[i]
                if c:
                    cross[k, i] += c * P[m]
    B = np.zeros((3, 4, ring.size))
    for k in range(3):
        for j in range(4):
            B[k, j] = 2.0 * sum(mul(A[i, j], cross[k, i]) for i in range(3))
    rho2 = mul(rho, rho)
    rho3 = mul(rho, rho2)
    RP = np.array([mul(rho, p) for p in P])
    RPP = np.array([[mul(RP[k], P[l]) for l in range(3)] for k in range(3)])
    return dict(rho=rho, rho2=rho2, rho3=rho3, P=P, B=B, RP=RP, RPP=RPP)


def spatial_problem(N: int, mu, E, kappa, nu, sign: int = 1):
    """Coefficients ``(Q0, B, c, pref)`` of the spatial HJ right-hand side.

    ``nu`` has shape ``(4,) + batch`` and ``kappa`` broadcasts to ``batch``.
    """
    ring = get_ring(4, N)
    geo = _spatial_geometry(N)
    nu = np.asarray(nu)
    batch = nu.shape[1:]
    _, R, lam = snu_batched(nu)
    Pi = R / lam
    omega = Pi[2]
    e = Pi[0]
    kappa = np.broadcast_to(np.asarray(kappa), batch)
    E_mu = shifted_energy(E, mu)

    def comb(coef, series):  # sum_k coef[k] * series[k]
        return np.einsum("k...,ks->s...", coef, series)

    ww = np.einsum("k...,k...->...", omega, omega)
    rho_wcross2 = _bc(geo["rho3"], batch) * ww \
        - np.einsum("k...,l...,kls->s...", omega, omega, geo["RPP"])
    pe = comb(e, geo["P"])
    base = 2.0 * lam * pe + _bc(geo["rho2"], batch) * lam**2
    base[0] += 1.0
    inv = ring.pow(base, -0.5)
    rho_b = _bc(geo["rho"], batch)
    Q0 = 0.5 * lam**3 * rho_wcross2 + lam * E_mu * rho_b \
        + (1.0 - mu) * lam * (ring.mul(rho_b, inv) - rho_b + lam * comb(e, geo["RP"]))
    Q0[0] += mu + kappa
    B = lam**2 * np.einsum("k...,kjs->js...", omega, geo["B"])
    c = 1.0 / (8.0 * lam)
    pref = np.sqrt(8.0 * lam)
    return Q0, B, c, sign * pref


@functools.lru_cache(maxsize=None)
def _planar_geometry(N: int) -> dict:
    ring = get_ring(2, N)
    x = [ring.variable(v) for v in range(2)]
    mul = ring.mul
    a = mul(x[0], x[0])
    b = mul(x[1], x[1])
    rho = a + b
    rho2 = mul(rho, rho)
    return dict(
        rho=rho, rho2=rho2, rho3=mul(rho, rho2),
        diff=a - b, prod=2.0 * mul(x[0], x[1]),
        B=np.array([-2.0 * mul(rho, x[1]), 2.0 * mul(rho, x[0])]),
    )


def planar_problem(N: int, mu, E, kappa, alpha, sign: int = 1):
    """Planar HJ right-hand side in the frame rotated by ``alpha``."""
    ring = get_ring(2, N)
    geo = _planar_geometry(N)
    alpha = np.asarray(alpha)
    kappa = np.asarray(kappa)
    batch = np.broadcast_shapes(alpha.shape, kappa.shape)
    alpha = np.broadcast_to(alpha, batch)
    kappa = np.broadcast_to(kappa, batch)
    E_mu = shifted_energy(E, mu)
    X = _bc(geo["diff"], batch) * np.cos(2 * alpha) - _bc(geo["prod"], batch) * np.sin(2 * alpha)
    D = 2.0 * X + _bc(geo["rho2"], batch)
    D[0] += 1.0
    G = ring.pow(D, -0.5) + X
    G[0] -= 1.0
    rho_b = _bc(geo["rho"], batch)
    Q0 = 0.5 * _bc(geo["rho3"], batch) + E_mu * rho_b + (1.0 - mu) * ring.mul(rho_b, G)
    Q0 = Q0 + np.zeros(batch)
    Q0[0] += mu + kappa
    B = geo["B"].reshape((2, ring.size) + (1,) * len(batch)) + np.zeros(batch)
    return Q0, B, 1.0 / 8.0, sign * np.sqrt(8.0)


# ---------------------------------------------------------------- the recursion

def _check_root(Q0) -> None:
    q = np.real(Q0[0])
    if np.any(q <= 0):
        raise DomainError(
            f"square-root argument has nonpositive constant term {np.min(q)}; "
            "mu + kappa must be positive")


def rhs_series(ring, Q0, B, c, pref, W) -> np.ndarray:
    """Right-hand side for ``dW/du1`` evaluated on the full series ``W``."""
    Q = Q0.copy()
    for j in range(1, ring.nvars):
        d = ring.deriv(W, j) - B[j]
        Q = Q - c * ring.mul(d, d)
    _check_root(Q)
    return B[0] + pref * ring.pow(Q, 0.5)


def solve_graded(ring, Q0, B, c, pref):
    """One homogeneous band of ``W`` per pass; returns ``(W, passes)``."""
    _check_root(Q0)
    N = ring.max_degree
    dtype = np.result_type(Q0, B, float)
    W = np.zeros(Q0.shape, dtype=dtype)
    Q = np.zeros(Q0.shape, dtype=dtype)
    g = np.zeros(Q0.shape, dtype=dtype)
    up = ring.up[0]
    for d in range(N):
        sl = ring.band(d)
        diffs = [ring.deriv(W, j) - B[j] for j in range(1, ring.nvars)]
        sq = sum(ring.mul_band(x, x, d) for x in diffs)
        Q[sl] = Q0[sl] - c * sq
        if d == 0:
            g[0] = Q[0] ** 0.5
        else:
            g[sl] = ring.pow_band(Q, g, 0.5, d)
        F = B[0][sl] + pref * g[sl]
        src = np.arange(sl.start, sl.stop)
        fac = 1.0 / (ring.exps[src, 0] + 1.0)
        W[up[src]] = F * fac.reshape((-1,) + (1,) * (F.ndim - 1))
    return W, N


def solve_picard(ring, Q0, B, c, pref):
    """Full Picard passes ``W <- int_u1 F(W)`` until two passes coincide."""
    _check_root(Q0)
    N = ring.max_degree
    W = np.zeros(Q0.shape, dtype=np.result_type(Q0, B, float))
    for passes in range(1, N + 3):
        F = rhs_series(ring, Q0, B, c, pref, W)
        Wn, _ = ring.integ(F, 0)
        if np.array_equal(Wn, W):
            return W, passes - 1
        W = Wn
    raise ConsistencyError(f"Picard passes failed to settle within {N + 2} passes")


_SOLVERS = {"graded": solve_graded, "picard": solve_picard}


def _solve(ring, problem, method: str):
    try:
        solver = _SOLVERS[method]
    except KeyError:
        raise ParameterError(f"unknown method {method!r}") from None
    return solver(ring, *problem)


# ---------------------------------------------------------------- spatial API

@dataclass(frozen=True)
class HJSolution:
    """Particular solution vanishing on ``u1 = 0`` for fixed ``(E, mu, kappa, nu)``."""

    params: Params
    order: int
    wtilde: MultiSeries
    omega: np.ndarray
    e_vec: np.ndarray
    passes: int
    method: str = "graded"
    sign: int = 1
    truncation: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CompleteIntegral:
    """``W(u; nu)`` solving ``K_I(u, dW/du) = mu (|nu|^2 - 1)``."""

    params: Params
    order: int
    w: MultiSeries
    source: HJSolution

    @property
    def level(self) -> float:
        nu = self.params.nu_array
        return self.params.mu * (nu @ nu - 1.0)


def build_rhs(params: Params, p2: MultiSeries, p3: MultiSeries, p4: MultiSeries,
              sign: int = 1) -> MultiSeries:
    """Series of ``dW/du1`` given the series of ``dW/du2..dW/du4``."""
    N = p2.max_degree
    ring = get_ring(4, N)
    Q0, B, c, pref = spatial_problem(N, params.mass, params.E, params.kappa,
                                     params.nu_array, sign)
    Q = Q0.copy()
    for j, p in zip((1, 2, 3), (p2, p3, p4)):
        p2._check(p)
        d = p.coeffs - B[j]
        Q = Q - c * ring.mul(d, d)
    _check_root(Q)
    return MultiSeries(4, N, B[0] + pref * ring.pow(Q, 0.5))


def solve_wtilde(params: Params, N: int = DEFAULT_ORDER, method: str = "graded",
                 sign: int = 1) -> HJSolution:
    if not 1 <= N <= 16:
        raise ParameterError(f"order must lie in 1..16, got {N}")
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    nu = params.nu_array
    if nu @ nu == 0:
        raise DomainError("nu must be nonzero")
    ring = get_ring(4, N)
    Q0, B, c, pref = spatial_problem(N, params.mass, params.E, params.kappa, nu, sign)
    W, passes = _solve(ring, (Q0, B, c, pref), method)
    _, R, lam = snu_batched(nu)
    Pi = R / lam
    return HJSolution(
        params=params, order=N, wtilde=MultiSeries(4, N, W), omega=Pi[2].copy(),
        e_vec=Pi[0].copy(), passes=passes, method=method, sign=sign,
        truncation={"effective_order": N, "rhs_top_band_dropped": True},
    )


def kappa_for(mu: float, nu) -> float:
    nu = np.asarray(nu, dtype=float)
    return mu * (nu @ nu - 1.0)


def assemble_W(sol: HJSolution) -> CompleteIntegral:
    p = sol.params
    nu = p.nu_array
    expected = kappa_for(p.mass, nu)
    if not np.isclose(p.kappa, expected, rtol=1e-12, atol=1e-15):
        raise ParameterError(
            f"complete integral needs kappa = mu(|nu|^2-1) = {expected}, got {p.kappa}")
    S, _, lam = snu_batched(nu)
    w = sol.wtilde.linear_substitute(S, 1.0 / lam)
    return CompleteIntegral(params=p, order=sol.order, w=w, source=sol)


def complete_integral(mu: float, E: float, nu, N: int = DEFAULT_ORDER,
                      method: str = "graded", body: int = 2) -> CompleteIntegral:
    nu = np.asarray(nu, dtype=float)
    m = mu if body == 2 else 1.0 - mu
    params = Params(mu=mu, E=E, kappa=kappa_for(m, nu), nu=tuple(nu), body=body)
    return assemble_W(solve_wtilde(params, N, method))


def hamiltonian_series(N: int, mu: float, E: float, U: np.ndarray) -> np.ndarray:
    """Series of ``K_I(u, U(u))`` for momentum series ``U`` (shape ``(4, size)``)."""
    ring = get_ring(4, N)
    Q0, B, c, _ = spatial_problem(N, mu, E, 0.0, np.array([1.0, 0.0, 0.0, 0.0]))
    out = -Q0.copy()
    for j in range(4):
        d = U[j] - B[j]
        out += c * ring.mul(d, d)
    return out


def residual(ci: CompleteIntegral) -> MultiSeries:
    """Series of ``K_I(u, dW/du) - mu (|nu|^2 - 1)``."""
    p = ci.params
    U = np.array([ci.w.partial(j).coeffs for j in range(4)])
    out = hamiltonian_series(ci.order, p.mass, p.E, U)
    out[0] -= ci.level
    return MultiSeries(4, ci.order, out)


def residual_report(ci: CompleteIntegral) -> dict:
    """Largest residual coefficient per degree."""
    r = residual(ci)
    ring = r.ring
    return {d: float(np.max(np.abs(r.coeffs[ring.band(d)]))) for d in range(ci.order + 1)}


def residual_pointwise(ci: CompleteIntegral, points) -> np.ndarray:
    """``K_I(u, grad W(u)) - level`` evaluated directly at sample points."""
    from .kscore import ham_ks_identity
    from .algebra import gradient
    p = ci.params
    out = []
    for u in np.atleast_2d(points):
        U = gradient(ci.w, u)
        out.append(ham_ks_identity(u, U, p.mass, p.E) - ci.level)
    return np.array(out)


def cubic_coefficient_report(sol: HJSolution) -> dict:
    """Compare the computed cubic coefficients of ``W~`` with the closed form

    ``sqrt(2) E_mu |nu|^3 / sqrt(mu+kappa) * u1 (u1^2/3 + u2^2 + u3^2 + u4^2)``.
    """
    p = sol.params
    nu = p.nu_array
    k = np.sqrt(2.0) * p.E_mu * (nu @ nu) ** 1.5 / np.sqrt(p.mass + p.kappa)
    expected = {(3, 0, 0, 0): k / 3.0, (1, 2, 0, 0): k, (1, 0, 2, 0): k, (1, 0, 0, 2): k}
    rows = {}
    worst = 0.0
    for exp, val in expected.items():
        got = float(np.real(sol.wtilde.coefficient(exp)))
        rel = abs(got - val) / abs(val)
        worst = max(worst, rel)
        rows[str(list(exp))] = {"computed": got, "closed_form": val, "rel_diff": rel}
    ring = sol.wtilde.ring
    band = sol.wtilde.coeffs[ring.band(3)] if sol.order >= 3 else np.zeros(0)
    others = [float(abs(band[i])) for i, e in enumerate(ring.exps[ring.band(3)])
              if tuple(e) not in expected] if len(band) else []
    return {"terms": rows, "max_rel_diff": worst,
            "other_cubic_max": max(others) if others else 0.0,
            "agrees": worst < 1e-12 and (max(others) if others else 0.0) < 1e-12 * abs(k)}


# ---------------------------------------------------------------- parameter derivatives

def _batched_spatial(mu, E, nus: np.ndarray, N: int, method: str = "graded") -> np.ndarray:
    """``W~`` coefficients for columns of ``nus`` (shape ``(4, m)``), each at its own kappa."""
    kap = mu * np.sum(nus * nus, axis=0) - mu
    ring = get_ring(4, N)
    W, _ = _solve(ring, spatial_problem(N, mu, E, kap, nus), method)
    return W


def _assemble_columns(ring, Wt: np.ndarray, nus: np.ndarray) -> np.ndarray:
    S, _, lam = snu_batched(nus)
    out = np.empty_like(Wt)
    for k in range(Wt.shape[1]):
        out[:, k] = ring.substitute(Wt[:, k], S[..., k].T / lam[k])
    return out


def param_derivatives(mu: float, E: float, nu, N: int = DEFAULT_ORDER,
                      method: str = "complex", h: float | None = None) -> np.ndarray:
    """Coefficients of ``dW/dnu_l`` for ``l = 0..3`` as a ``(size, 4)`` array.

    ``complex`` pushes a first-order perturbation through the whole build by
    complex-step; ``richardson`` extrapolates central differences of the
    assembled real coefficients.
    """
    nu = np.asarray(nu, dtype=float)
    ring = get_ring(4, N)
    if method == "complex":
        h = COMPLEX_STEP if h is None else h
        nus = nu[:, None] + 1j * h * np.eye(4)
        W = _assemble_columns(ring, _batched_spatial(mu, E, nus, N), nus)
        return W.imag / h
    if method == "richardson":
        h = 1e-3 if h is None else h
        steps = np.array([h, -h, h / 2, -h / 2])
        nus = (nu[:, None, None] + np.eye(4)[:, :, None] * steps[None, None, :]).reshape(4, 16)
        W = _assemble_columns(ring, _batched_spatial(mu, E, nus, N), nus).reshape(-1, 4, 4)
        D1 = (W[:, :, 0] - W[:, :, 1]) / (2 * h)
        D2 = (W[:, :, 2] - W[:, :, 3]) / h
        est = (4.0 * D2 - D1) / 3.0
        if not np.all(np.isfinite(est)):
            raise AccuracyError("difference quotient is not finite")
        scale = np.array([np.max(np.abs(est[ring.band(d)])) for d in range(N + 1)])
        for d in range(N + 1):
            gap = np.max(np.abs(est[ring.band(d)] - D2[ring.band(d)]))
            if scale[d] > 0 and gap > 1e-3 * scale[d]:
                raise AccuracyError(
                    f"difference step h={h} outside the asymptotic regime in degree {d}: "
                    f"Richardson correction {gap:.3e} vs scale {scale[d]:.3e}")
        return est
    raise ParameterError(f"unknown derivative method {method!r}")


def param_derivative(mu: float, E: float, nu, N: int, direction: int,
                     method: str = "complex", h: float | None = None) -> MultiSeries:
    if direction not in range(4):
        raise ParameterError(f"direction must be 0..3, got {direction}")
    D = param_derivatives(mu, E, nu, N, method, h)
    return MultiSeries(4, N, D[:, direction])


def derivative_agreement(mu: float, E: float, nu, N: int) -> float:
    """Largest band-normalised gap between the two derivative paths."""
    ring = get_ring(4, N)
    a = param_derivatives(mu, E, nu, N, "complex")
    b = param_derivatives(mu, E, nu, N, "richardson")
    worst = 0.0
    for d in range(1, N + 1):
        sl = ring.band(d)
        scale = np.max(np.abs(a[sl]))
        if scale > 0:
            worst = max(worst, float(np.max(np.abs(a[sl] - b[sl])) / scale))
    return worst


def j4(mu: float, E: float, nu, N: int = 4) -> float:
    """``det d^2 W / du dnu`` at ``u = 0``."""
    D = param_derivatives(mu, E, nu, N, "complex")
    return float(np.linalg.det(D[1:5, :]))


# ---------------------------------------------------------------- planar path

@dataclass(frozen=True)
class PlanarHJSolution:
    alpha: float
    kappa: float
    E: float
    mu: float
    order: int
    wtilde: MultiSeries
    w2: MultiSeries
    passes: int


def solve_planar(alpha: float, kappa: float, E: float, mu: float,
                 N: int = DEFAULT_ORDER, method: str = "graded", sign: int = 1) -> PlanarHJSolution:
    if not 1 <= N <= 16:
        raise ParameterError(f"order must lie in 1..16, got {N}")
    if not mu + kappa > 0:
        raise DomainError("mu + kappa must be positive")
    ring = get_ring(2, N)
    Wt, passes = _solve(ring, planar_problem(N, mu, E, kappa, alpha, sign), method)
    c, s = np.cos(alpha), np.sin(alpha)
    Rot = np.array([[c, -s], [s, c]])
    wt = MultiSeries(2, N, Wt)
    return PlanarHJSolution(alpha=alpha, kappa=kappa, E=E, mu=mu, order=N,
                            wtilde=wt, w2=wt.linear_substitute(Rot, 1.0), passes=passes)


def planar_columns(mu: float, E: float, alphas, kappas, N: int, method: str = "graded") -> np.ndarray:
    """Assembled planar ``W`` for paired columns of ``(alpha, kappa)``."""
    alphas = np.asarray(alphas)
    kappas = np.asarray(kappas)
    ring = get_ring(2, N)
    Wt, _ = _solve(ring, planar_problem(N, mu, E, kappas, alphas), method)
    out = np.empty_like(Wt)
    for k in range(Wt.shape[1]):
        c, s = np.cos(alphas[k]), np.sin(alphas[k])
        out[:, k] = ring.substitute(Wt[:, k], np.array([[c, s], [-s, c]]))
    return out


def j2(alpha: float, kappa: float, E: float, mu: float, N: int = 4) -> float:
    """``det [d^2W/du_i dalpha, d^2W/du_i dkappa]`` at ``u = 0`` by complex step."""
    h = COMPLEX_STEP
    W = planar_columns(mu, E, np.array([alpha + 1j * h, alpha]),
                       np.array([kappa, kappa + 1j * h]), N)
    D = W.imag / h
    return float(np.linalg.det(D[1:3, :]))


# ---------------------------------------------------------------- diagnostics and export

def band_norms(series: MultiSeries) -> np.ndarray:
    ring = series.ring
    return np.array([np.max(np.abs(series.coeffs[ring.band(d)]))
                     for d in range(series.max_degree + 1)])


def convergence_radius(series: MultiSeries, start: int | None = None) -> float:
    """Radius from the geometric growth of per-degree coefficient maxima.

    The fit uses the upper half of the degrees by default, where the growth
    rate has settled.
    """
    a = band_norms(series)
    if start is None:
        start = max(2, series.max_degree // 2)
    d = np.arange(len(a))
    keep = (d >= start) & (a > 0)
    if keep.sum() < 2:
        return float("inf")
    slope = np.polyfit(d[keep], np.log(a[keep]), 1)[0]
    return float(np.exp(-slope))


def series_to_json(series: MultiSeries, params: Params, order: int | None = None) -> str:
    ring = series.ring
    coeffs = [{"exp": [int(x) for x in ring.exps[i]], "val": float(np.real(series.coeffs[i]))}
              for i in np.nonzero(series.coeffs)[0]]
    doc = {
        "params": {"mu": params.mu, "E": params.E, "kappa": params.kappa,
                   "nu": [float(x) for x in params.nu]},
        "order": series.max_degree if order is None else order,
        "coeffs": coeffs,
    }
    return jsonio.dumps(doc)


def series_from_json(text: str) -> tuple[MultiSeries, Params]:
    doc = jsonio.loads(text)
    p = doc["params"]
    params = Params(mu=p["mu"], E=p["E"], kappa=p["kappa"], nu=tuple(p["nu"]))
    N = int(doc["order"])
    nvars = len(doc["coeffs"][0]["exp"]) if doc["coeffs"] else 4
    terms = {tuple(c["exp"]): c["val"] for c in doc["coeffs"]}
    return MultiSeries.from_dict(nvars, N, terms), params
