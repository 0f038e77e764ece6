"""Seeded verification suites behind ``ksencounter verify``.

Each suite returns a list of :class:`Check` records (worst deviation against a
bound).  Reports contain no timings so that equal seeds give equal bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import canonical as cn
from . import dynamics as dy
from . import hjsolver as hj
from . import kscore as ks
from .algebra import MultiSeries
from .errors import ParameterError

SUITES = ("algebra", "kscore", "hj", "canonical", "dynamics")


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def to_dict(self) -> dict:
        return {"value": float(self.value), "tol": self.tol, "pass": self.passed}


# ---------------------------------------------------------------- samplers

def random_unit(rng, n: int = 4, size=None) -> np.ndarray:
    shape = (n,) if size is None else (size, n)
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def momentum_for_energy(q, d, mu: float, E: float) -> float:
    """Positive ``|P|`` along unit ``d`` so that ``H(q, |P| d) = E``."""
    w = np.array([q[1], -q[0], 0.0])
    V = ks.ham_planeto(np.r_[q, 0.0, 0.0, 0.0], mu)
    a = d @ w
    disc = a * a - 2.0 * (V - E)
    if disc < 0:
        raise ParameterError("energy level not reachable at this position")
    return -a + np.sqrt(disc)


def entry_state(rng, sigma: float, mu: float, E: float, planar: bool = False,
                impact=(0.2, 0.8)) -> np.ndarray:
    """State on ``|q| = sigma`` heading inward with a random impact parameter."""
    q = rng.normal(size=3)
    t = rng.normal(size=3)
    if planar:
        q[2] = 0.0
        t[2] = 0.0
    q *= sigma / np.linalg.norm(q)
    rhat = q / sigma
    t -= (t @ rhat) * rhat
    t /= np.linalg.norm(t)
    b = rng.uniform(*impact)
    d = -np.sqrt(1.0 - b * b) * rhat + b * t
    return np.r_[q, momentum_for_energy(q, d, mu, E) * d]


def ball_state(rng, mu: float, E: float, r_lo: float, r_hi: float) -> np.ndarray:
    """Position at log-uniform radius, random momentum direction, energy ``E``."""
    r = np.exp(rng.uniform(np.log(r_lo), np.log(r_hi)))
    q = random_unit(rng, 3) * r
    d = random_unit(rng, 3)
    return np.r_[q, momentum_for_energy(q, d, mu, E) * d]


def ks_generic(rng, scale: float = 1.0) -> np.ndarray:
    """Gaussian ``(u, U)`` with ``U`` projected onto ``l(u, U) = 0``."""
    u = rng.normal(size=4) * scale
    U = rng.normal(size=4)
    g = ks.OMEGA.T @ u
    return np.r_[u, U - (u @ ks.OMEGA @ U) / (g @ g) * g]


def ks_sample(rng, mu: float, E: float, r_lo: float, r_hi: float) -> np.ndarray:
    """Lifted physical state: ``K_I = 0`` and ``l = 0``."""
    return np.asarray(ks.chart_lift(ball_state(rng, mu, E, r_lo, r_hi)))


# ---------------------------------------------------------------- algebra

def _random_series(rng, N: int, const: float = 0.0) -> MultiSeries:
    s = MultiSeries(4, N)
    c = rng.normal(size=s.ring.size) / (1.0 + s.ring.deg) ** 2
    if const:
        c[0] = const + 0.1 * abs(c[0])
    return MultiSeries(4, N, c)


def suite_algebra(rng, samples: int) -> list[Check]:
    N = 6
    k = max(1, min(samples, 30))
    worst = dict.fromkeys(["commutative", "associative", "distributive", "sqrt_square",
                           "power_inverse", "partial_antiderivative", "evaluation_product",
                           "substitution"], 0.0)
    for _ in range(k):
        a, b, c = (_random_series(rng, N) for _ in range(3))
        worst["commutative"] = max(worst["commutative"], (a * b - b * a).max_abs())
        worst["associative"] = max(worst["associative"], ((a * b) * c - a * (b * c)).max_abs())
        worst["distributive"] = max(worst["distributive"], (a * (b + c) - (a * b + a * c)).max_abs())
        p = _random_series(rng, N, const=2.0)
        worst["sqrt_square"] = max(worst["sqrt_square"], ((p ** 0.5) * (p ** 0.5) - p).max_abs())
        worst["power_inverse"] = max(worst["power_inverse"],
                                     ((p ** 0.7) * (p ** -0.7) - MultiSeries.constant(4, N, 1.0)).max_abs())
        v = int(rng.integers(4))
        worst["partial_antiderivative"] = max(worst["partial_antiderivative"],
                                              (a.antiderivative(v).partial(v) - a).max_abs(N - 1))
        lo_a = sum((a.homogeneous_part(d) for d in range(4)), MultiSeries(4, N))
        lo_b = sum((b.homogeneous_part(d) for d in range(3)), MultiSeries(4, N))
        x = rng.uniform(-0.5, 0.5, size=4)
        worst["evaluation_product"] = max(worst["evaluation_product"],
                                          abs((lo_a * lo_b)(x) - lo_a(x) * lo_b(x)))
        M = rng.normal(size=(4, 4))
        worst["substitution"] = max(worst["substitution"],
                                    abs(a.linear_substitute(M, 0.5)(x) - a(0.5 * M.T @ x)))
    return [Check(f"algebra.{key}", val, 1e-12) for key, val in worst.items()]


# ---------------------------------------------------------------- kscore

def kscore_identities(rng, samples: int, mu: float = hj.MU_STAR,
                      E: float = hj.E_STAR) -> dict[str, float]:
    """Worst relative deviation of each closed-form identity over ``samples`` draws."""
    n = samples
    u = rng.normal(size=(n, 4)) * rng.uniform(0.01, 10.0, size=(n, 1)) / 2.0
    U = rng.normal(size=(n, 4))
    nu = rng.normal(size=(n, 4))
    nu *= rng.uniform(0.9, 1.1, size=(n, 1)) / np.linalg.norm(nu, axis=1, keepdims=True)
    rho = np.sum(u * u, axis=1)
    A = ks.ks_matrix_rows(u)
    out = {}
    AAt = A @ np.transpose(A, (0, 2, 1))
    out["AAT"] = float(np.max(np.abs(AAt - rho[:, None, None] * np.eye(4)) / rho[:, None, None]))
    Au = np.einsum("nij,nj->ni", A, u)
    q = Au[:, :3]
    out["pi_norm"] = float(np.max(np.abs(np.linalg.norm(q, axis=1) - rho) / rho))
    out["fourth_component"] = float(np.max(np.abs(Au[:, 3]) / rho))
    S, R, nn = ks.snu_batched(nu.T)
    S = np.moveaxis(S, -1, 0)
    R = np.moveaxis(R, -1, 0)
    Su = np.einsum("nij,nj->ni", S, u)
    qS = np.einsum("nij,nj->ni", ks.ks_matrix_rows(Su), Su)[:, :3]
    Rq = np.einsum("nij,nj->ni", R, q)
    out["pi_S_equals_R_pi"] = float(np.max(np.linalg.norm(qS - Rq, axis=1) / (nn * rho)))
    SSt = S @ np.transpose(S, (0, 2, 1))
    out["SST"] = float(np.max(np.abs(SSt - nn[:, None, None] * np.eye(4)) / nn[:, None, None]))
    RRt = R @ np.transpose(R, (0, 2, 1))
    out["RRT"] = float(np.max(np.abs(RRt - (nn**2)[:, None, None] * np.eye(3)) / (nn**2)[:, None, None]))

    def lform(a, b):
        return a[:, 3] * b[:, 0] - a[:, 2] * b[:, 1] + a[:, 1] * b[:, 2] - a[:, 0] * b[:, 3]

    SU = np.einsum("nij,nj->ni", S, U)
    scale = np.linalg.norm(u, axis=1) * np.linalg.norm(U, axis=1) * nn
    out["l_scaling"] = float(np.max(np.abs(lform(Su, SU) - nn * lform(u, U)) / scale))
    alpha = rng.uniform(0, 2 * np.pi, size=n)
    S0 = np.array([ks.s0_alpha(a) for a in alpha[: min(n, 1000)]])
    m = len(S0)
    S0u = np.einsum("nij,nj->ni", S0, u[:m])
    S0U = np.einsum("nij,nj->ni", S0, U[:m])
    out["l_fibre_invariance"] = float(np.max(np.abs(lform(S0u, S0U) - lform(u[:m], U[:m]))
                                             / scale[:m] * nn[:m]))
    # K_I(S u, S^{-T} U) = |nu|^2 K_{|nu|^2 Pi}(u, U) on a ball |u| <= 0.3
    uu = rng.normal(size=(n, 4))
    uu *= rng.uniform(0.0, 0.3, size=(n, 1)) / np.linalg.norm(uu, axis=1, keepdims=True)
    UU = rng.normal(size=(n, 4))
    Suu = np.einsum("nij,nj->ni", S, uu)
    SinvT = np.einsum("nij,nj->ni", S, UU) / nn[:, None]
    lhs = ks.ham_ks_rows(Suu, SinvT, mu, E, np.ones(n), np.broadcast_to(np.eye(3), (n, 3, 3)))
    rhs = nn * ks.ham_ks_rows(uu, UU, mu, E, nn, R / nn[:, None, None])
    out["commuting_diagram"] = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))
    return out


def suite_kscore(rng, samples: int) -> list[Check]:
    vals = kscore_identities(rng, max(samples, 1))
    tols = {"AAT": 1e-13, "pi_norm": 1e-13, "fourth_component": 1e-14}
    checks = [Check(f"kscore.{k}", v, tols.get(k, 1e-11)) for k, v in vals.items()]
    mu = hj.MU_STAR
    worst_h, worst_round, worst_l, worst_grad = 0.0, 0.0, 0.0, 0.0
    for _ in range(min(samples, 1000)):
        x = np.r_[rng.uniform(-0.5, 0.5, size=3), rng.normal(size=3)]
        bary = ks.from_planeto(x, mu)
        h = ks.ham_bary(bary, mu)
        worst_h = max(worst_h, abs(h - ks.ham_planeto(x, mu)) / max(1.0, abs(h)))
        lift = ks.chart_lift(x)
        back = np.asarray(ks.phase_project(lift))
        worst_round = max(worst_round, np.max(np.abs(back - x)) / np.max(np.abs(x)))
        worst_l = max(worst_l, abs(ks.bilinear(lift.u, lift.U))
                      / (np.linalg.norm(lift.u) * np.linalg.norm(lift.U) + 1.0))
    for _ in range(min(samples, 20)):
        u, U = rng.normal(size=4) * 0.2, rng.normal(size=4)
        g = ks.grad_ks_identity(u, U, mu, hj.E_STAR)
        z = np.r_[u, U]
        f = lambda y: ks.ham_ks_identity(y[:4], y[4:], mu, hj.E_STAR)
        fd, _ = cn.gradient_fd(f, z, np.ones(8), 1e-3)
        worst_grad = max(worst_grad, np.max(np.abs(fd - g)) / np.max(np.abs(g)))
    checks += [Check("kscore.translation_h_equals_H", worst_h, 1e-12),
               Check("kscore.chart_round_trip", worst_round, 1e-12),
               Check("kscore.lift_bilinear", worst_l, 1e-14),
               Check("kscore.gradient_vs_differences", worst_grad, 1e-8)]
    return checks


# ---------------------------------------------------------------- hj

def hj_residual_worst(rng, n_nu: int, mus=(0.01, 0.1, 0.5), N: int = 8) -> float:
    """Largest ``|coeff| / sqrt(8 mu)`` of the residual below degree ``N``."""
    worst = 0.0
    for mu in mus:
        for E in (hj.E_STAR - 0.05, hj.E_STAR + 0.05):
            for nu in random_unit(rng, 4, n_nu):
                rep = hj.residual_report(hj.complete_integral(mu, E, nu, N))
                worst = max(worst, max(rep[d] for d in range(N)) / np.sqrt(8 * mu))
    return worst


def leading_terms_worst(rng, n_nu: int, mu: float = hj.MU_STAR, E: float = hj.E_STAR,
                        N: int = 6) -> tuple[float, float]:
    w_lin, wt_lin = 0.0, 0.0
    for nu in rng.normal(size=(n_nu, 4)) * 0.05 + random_unit(rng, 4, n_nu):
        ci = hj.complete_integral(mu, E, nu, N)
        lin = np.array([ci.w.coefficient(e) for e in np.eye(4, dtype=int)])
        w_lin = max(w_lin, np.max(np.abs(lin - np.sqrt(8 * mu) * nu)))
        p = ci.params
        expect = np.sqrt(8 * (mu + p.kappa) * (nu @ nu))
        wt_lin = max(wt_lin, abs(ci.source.wtilde.coefficient((1, 0, 0, 0)) - expect))
    return w_lin, wt_lin


def suite_hj(rng, samples: int) -> list[Check]:
    n_nu = max(1, min(samples, 5))
    checks = [Check("hj.residual_below_order", hj_residual_worst(rng, n_nu), 1e-9)]
    w_lin, wt_lin = leading_terms_worst(rng, n_nu)
    checks += [Check("hj.linear_coefficients", w_lin, 1e-12),
               Check("hj.tilde_u1_coefficient", wt_lin, 1e-12)]
    worst = 0.0
    for mu in (0.01, 0.1):
        for nu in random_unit(rng, 4, n_nu):
            worst = max(worst, abs(hj.j4(mu, hj.E_STAR, nu) - 64 * mu**2) / (64 * mu**2))
    checks.append(Check("hj.j4_relative", worst, 1e-9))
    worst = 0.0
    for alpha in np.linspace(0.0, 2 * np.pi, 32, endpoint=False):
        worst = max(worst, abs(abs(hj.j2(alpha, 0.0, hj.E_STAR, hj.MU_STAR)) - 4.0))
    checks.append(Check("hj.j2_abs_minus_4", worst, 1e-10))
    sol = hj.solve_wtilde(ks.Params(mu=hj.MU_STAR, E=hj.E_STAR), 4)
    rep = hj.cubic_coefficient_report(sol)
    checks.append(Check("hj.cubic_coefficient", max(rep["max_rel_diff"], rep["other_cubic_max"]), 1e-12))
    worst = 0.0
    for nu in random_unit(rng, 4, min(n_nu, 2)):
        worst = max(worst, hj.derivative_agreement(hj.MU_STAR, hj.E_STAR, nu, 6))
    checks.append(Check("hj.derivative_paths", worst, 1e-6))
    return checks


# ---------------------------------------------------------------- canonical

def suite_canonical(rng, samples: int) -> list[Check]:
    mu, E = hj.MU_STAR, hj.E_STAR
    k = max(1, min(samples, 4))
    checks = []
    worst = 0.0
    for nu in random_unit(rng, 4, k):
        got, _, _ = cn.nu_hat(np.zeros(4), np.sqrt(8 * mu) * nu, mu, E, 8)
        worst = max(worst, np.max(np.abs(got - nu)))
    checks.append(Check("canonical.nu_hat_at_origin", worst, 1e-11))
    worst_rt, worst_norm, worst_l = 0.0, 0.0, 0.0
    for _ in range(k):
        z = ks_sample(rng, mu, E, 1e-4, 1e-3)
        n, nu = cn.chi4(z, mu, E, 12)
        back = np.asarray(cn.chi4_inverse(n, nu, mu, E, 12))
        worst_rt = max(worst_rt, np.max(np.abs(back - z)) / np.max(np.abs(z)))
        worst_norm = max(worst_norm, abs(np.linalg.norm(nu) - 1.0))
        worst_l = max(worst_l, abs(ks.bilinear(n, nu)))
    checks += [Check("canonical.chi4_round_trip", worst_rt, 1e-9),
               Check("canonical.nu_norm_on_zero_level", worst_norm, 1e-9),
               Check("canonical.bilinear_n_nu", worst_l, 1e-11)]
    sigma = 1e-3
    worst_or, worst_rev = 0.0, 0.0
    for _ in range(max(1, k // 2)):
        x = entry_state(rng, sigma, mu, E)
        res = cn.encounter_map(x, sigma, mu, E, 12)
        ref = reference_exit(x, sigma, mu)
        worst_or = max(worst_or, np.max(np.abs(np.asarray(res.exit) - ref)) / np.max(np.abs(ref)))
        back = cn.encounter_map(res.exit, sigma, mu, E, 12, direction=-1)
        worst_rev = max(worst_rev, np.max(np.abs(np.asarray(back.exit) - x)) / np.max(np.abs(x)))
    checks += [Check("canonical.encounter_vs_integration", worst_or, 1e-6),
               Check("canonical.encounter_reversibility", worst_rev, 1e-8)]
    worst = 0.0
    for _ in range(k):
        x = ball_state(rng, mu, E, 1e-5, 1e-3)
        trip = cn.cartesian_integrals(x, mu, E, 8)
        if trip.chart_discrepancy is not None:
            worst = max(worst, trip.chart_discrepancy)
    checks.append(Check("canonical.chart_agreement", worst, 1e-9))
    worst_qp, worst_pp = 0.0, 0.0
    for _ in range(k):
        z = ks_generic(rng)
        qp, pp = ks_bracket_matrices(z)
        worst_qp = max(worst_qp, np.max(np.abs(qp - np.eye(3))))
        worst_pp = max(worst_pp, np.max(np.abs(pp)))
    checks += [Check("canonical.bracket_q_p", worst_qp, 1e-8),
               Check("canonical.bracket_p_p", worst_pp, 1e-8)]
    worst = 0.0
    for _ in range(max(1, k // 4)):
        x = ball_state(rng, mu, E, 1e-4, 5e-4)
        br = ks_integral_brackets(x, mu, E, 12)
        worst = max(worst, max(abs(v) for v in br.values()))
    checks.append(Check("canonical.integral_brackets", worst, 1e-7))
    rep = cn.completeness_check([ball_state(rng, mu, E, 1e-5, 1e-3) for _ in range(k)], mu, E, 6)
    checks.append(Check("canonical.rank3_shortfall", 1.0 - rep["rank3_fraction"], 0.01))
    worst = 0
    for nu in random_unit(rng, 4, k):
        worst = max(worst, abs(cn.collision_manifold_rank(mu, E, nu) - 5))
    checks.append(Check("canonical.collision_rank_minus_5", float(worst), 0.0))
    x = entry_state(rng, sigma, mu, E, planar=True)
    checks.append(Check("canonical.planar_vs_spatial", planar_spatial_gap(x, sigma, mu, E), 1e-7))
    return checks


def reference_exit(x, sigma: float, mu: float, rtol: float = 1e-13, atol: float = 1e-16):
    """Exit state from direct integration of ``H`` to the first outward crossing."""
    def ev(_, y):
        return y[:3] @ y[:3] - sigma**2
    ev.terminal = True
    ev.direction = 1
    tr = dy.integrate("H", x, (0.0, 10.0), mu, rtol=rtol, atol=atol, events=ev)
    if not len(tr.y_events[0]):
        raise ParameterError("reference integration found no exit")
    return tr.y_events[0][0]


def ks_bracket_matrices(z) -> tuple[np.ndarray, np.ndarray]:
    """``{q_i, p_j}`` and ``{p_i, p_j}`` on the 8-dimensional KS phase space."""
    z = np.asarray(z, dtype=float)
    scales = cn._default_scales(z, 8)
    gq, _ = cn.gradient_fd(cn.ks_position, z, scales, 1e-3)
    gp, _ = cn.gradient_fd(cn.ks_momentum, z, scales, 1e-3)
    qp = np.array([[cn.bracket_from_gradients(gq[i], gp[j]) for j in range(3)] for i in range(3)])
    pp = np.array([[cn.bracket_from_gradients(gp[i], gp[j]) for j in range(3)] for i in range(3)])
    return qp, pp


def ks_integral_brackets(x, mu: float, E: float, N: int = 12, step: float = 1e-4) -> dict:
    """``{H, N_Z}``, ``{H, N^2}``, ``{N^2, N_Z}`` in KS variables at the lift of ``x``."""
    z = np.asarray(ks.chart_lift(x))
    nu0, _, _ = cn.nu_hat(z[:4], z[4:], mu, E, N)

    def fields(y):
        nu, jet, _ = cn.nu_hat(y[:4], y[4:], mu, E, N, nu0=nu0)
        c = cn.first_integrals_nnu(jet.evaluate(y[:4]).n, nu)
        H = ks.ham_planeto(np.asarray(ks.phase_project(y)), mu)
        return np.array([H, c @ c, c[2]])

    g, _ = cn.gradient_fd(fields, z, cn._default_scales(z, 8), step)
    b = cn.bracket_from_gradients
    return {"H_NZ": b(g[0], g[2]), "H_N2": b(g[0], g[1]), "N2_NZ": b(g[1], g[2])}


def planar_spatial_gap(x, sigma: float, mu: float, E: float, N: int = 12) -> float:
    sp = np.asarray(cn.encounter_map(x, sigma, mu, E, N).exit)
    pl = cn.planar_encounter(x[[0, 1, 3, 4]], sigma, mu, E, N).exit
    ref = sp[[0, 1, 3, 4]]
    return float(max(np.max(np.abs(pl - ref)) / np.max(np.abs(ref)), abs(sp[2]), abs(sp[5])))


# ---------------------------------------------------------------- dynamics

def suite_dynamics(rng, samples: int) -> list[Check]:
    mu, E = 0.1, hj.E_STAR
    k = max(1, min(samples, 3))
    worst_K, worst_l = 0.0, 0.0
    for _ in range(k):
        z = ks_sample(rng, mu, E, 3e-3, 8e-3)
        tr = dy.integrate("K_I", z, (0.0, 5.0), mu, E)
        worst_K = max(worst_K, np.max(np.abs(tr.energy - tr.energy[0])))
        worst_l = max(worst_l, np.max(np.abs(tr.bilinear - tr.bilinear[0])))
    checks = [Check("dynamics.K_I_drift", worst_K, 1e-10),
              Check("dynamics.bilinear_drift", worst_l, 1e-11)]
    worst = 0.0
    for _ in range(k):
        x = ball_state(rng, hj.MU_STAR, E, 1e-3, 1e-2)
        rep = dy.flow_equivalence(x, 1e-3, hj.MU_STAR)
        worst = max(worst, rep.deviation if rep.cartesian_status == "ok" else np.inf)
    checks.append(Check("dynamics.flow_equivalence", worst, 1e-8))
    checks.append(Check("dynamics.circular_orbit", circular_orbit_defect(0.01, 0.05), 1e-9))
    return checks


def circular_orbit_defect(mu: float, r: float, periods: float = 1.0) -> float:
    """Radius drift of a circular orbit of the encounter body alone, rotating frame."""
    v = np.sqrt(mu / r)
    # inertial circular speed v; rotating-frame momentum equals inertial velocity
    x = np.array([r, 0.0, 0.0, 0.0, v, 0.0])
    T = 2 * np.pi * r / v * periods
    tr = dy.integrate("H", x, (0.0, T), mu, far_body=False)
    radii = np.linalg.norm(tr.states[:, :3], axis=1)
    return float(np.max(np.abs(radii - r)) / r)


# ---------------------------------------------------------------- driver

_RUNNERS = {"algebra": suite_algebra, "kscore": suite_kscore, "hj": suite_hj,
            "canonical": suite_canonical, "dynamics": suite_dynamics}


def run(suite: str, seed: int, samples: int) -> dict:
    names = SUITES if suite == "all" else (suite,)
    for s in names:
        if s not in _RUNNERS:
            raise ParameterError(f"unknown suite {suite!r}")
    rng = np.random.default_rng(seed)
    checks = []
    for s in names:
        checks += _RUNNERS[s](rng, samples)
    failed = [c.name for c in checks if not c.passed]
    return {"suite": suite, "seed": seed, "samples": samples,
            "checks": {c.name: c.to_dict() for c in checks},
            "failed": failed, "pass": not failed}
