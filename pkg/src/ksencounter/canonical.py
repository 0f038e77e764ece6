"""The canonical map generated by the complete integral, and what it buys.

``W(u; nu)`` generates ``(u, U) -> (n, nu)`` with ``U = dW/du`` and
``n = dW/dnu``.  In the new variables the regularized flow is trivial:
``nu`` is constant and ``n(s) = n(0) + 2 mu nu s``.  Inverting the map along
that straight line gives the motion through the encounter ball without any
step-by-step integration.

Hot paths never substitute series: ``W(u; nu)`` is evaluated as
``W~(S_nu^T u / |nu|^2)`` directly, with four complex-step columns carrying
the ``nu``-derivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import jsonio
from .algebra import get_ring
from .errors import (AccuracyError, ChartDomainError, DomainError, IllConditionedWarning,
                     InversionError, ParameterError)
from .hjsolver import COMPLEX_STEP, _batched_spatial, complete_integral, planar_problem, _solve
from .kscore import (OMEGA, Chart, KSState, PlanetoState, bilinear, chart_lift, grad_planeto,
                     ham_lc, ham_planeto, ks_matrix, lc_lift, lc_project, phase_project,
                     select_chart, snu_batched)

R_MAX = 0.15
NEWTON_TOL = 1e-12
MAX_ITER = 50


# ---------------------------------------------------------------- spatial jet

@dataclass(frozen=True)
class JetValue:
    W: float
    U: np.ndarray
    n: np.ndarray
    mixed: np.ndarray  # mixed[l, j] = d2W / dnu_l du_j


class SpatialJet:
    """``W(.; nu)`` plus its ``nu``-gradient at one fixed ``nu``."""

    def __init__(self, mu: float, E: float, nu, N: int, h: float = COMPLEX_STEP):
        self.mu, self.E, self.N, self.h = mu, E, N, h
        self.nu = np.array(nu, dtype=float)
        nus = self.nu[:, None] + 1j * h * np.eye(4)
        self.ring = get_ring(4, N)
        self.coeffs = _batched_spatial(mu, E, nus, N)
        S, _, lam = snu_batched(nus)
        self._to_tilde = np.transpose(S, (1, 0, 2)) / lam
        self._from_tilde = S / lam

    def evaluate(self, u) -> JetValue:
        ut = np.einsum("ijk,j->ik", self._to_tilde, u)
        vals = self.ring.monomial_values(ut)
        Wv = np.sum(self.coeffs * vals, axis=0)
        g = self.ring.gradient(self.coeffs, ut, vals)
        gu = np.einsum("ijk,jk->ik", self._from_tilde, g)
        return JetValue(W=float(Wv[0].real), U=gu[:, 0].real.copy(),
                        n=Wv.imag / self.h, mixed=gu.imag.T / self.h)

    def velocity(self, u, U) -> np.ndarray:
        """``du/ds`` for the regularized flow."""
        from .kscore import vector_potential
        return 0.25 * (U - vector_potential(u, [0.0, 0.0, 1.0]))


def _check_radius(u, r_max: float) -> None:
    nu = float(np.linalg.norm(u))
    if nu > r_max:
        raise DomainError(f"|u| = {nu:.4g} exceeds the trusted radius {r_max}")


def nu_hat(u, U, mu: float, E: float, N: int = 12, r_max: float = R_MAX, nu0=None,
           tol: float = NEWTON_TOL, maxiter: int = MAX_ITER, polish: int = 1):
    """Solve ``U = dW/du(u, nu)`` for ``nu``; returns ``(nu, jet, iterations)``."""
    u = np.asarray(u, dtype=float)
    U = np.asarray(U, dtype=float)
    _check_radius(u, r_max)
    nu = U / np.sqrt(8.0 * mu) if nu0 is None else np.array(nu0, dtype=float)
    jet = SpatialJet(mu, E, nu, N)
    val = jet.evaluate(u)
    res = val.U - U
    rn = np.linalg.norm(res)
    it = 0
    extra = polish
    while True:
        if rn <= tol:
            if extra <= 0:
                break
            extra -= 1
        if it >= maxiter:
            if rn <= tol:
                break
            raise InversionError(f"nu inversion did not converge in {maxiter} iterations",
                                 last=nu, residual=rn, iterations=it)
        it += 1
        step = np.linalg.solve(val.mixed.T, res)
        for _ in range(40):
            trial = nu - step
            tjet = SpatialJet(mu, E, trial, N)
            tval = tjet.evaluate(u)
            tres = tval.U - U
            tn = np.linalg.norm(tres)
            if tn <= rn or tn <= tol:
                break
            step = 0.5 * step
        else:
            if rn <= tol:
                break
            raise InversionError("nu inversion stalled during damping",
                                 last=nu, residual=rn, iterations=it)
        if tn > rn:
            break
        nu, jet, val, res, rn = trial, tjet, tval, tres, tn
    return nu, jet, it


def n_hat(u, nu, mu: float, E: float, N: int = 12) -> np.ndarray:
    return SpatialJet(mu, E, nu, N).evaluate(np.asarray(u, dtype=float)).n


def chi4(ks, mu: float, E: float, N: int = 12, r_max: float = R_MAX):
    """``(u, U) -> (n, nu)``."""
    s = np.asarray(ks, dtype=float)
    nu, jet, _ = nu_hat(s[:4], s[4:], mu, E, N, r_max)
    return jet.evaluate(s[:4]).n, nu


def solve_u(jet: SpatialJet, n_target, u0, tol: float | None = None,
            maxiter: int = MAX_ITER):
    """Solve ``n = dW/dnu(u, nu)`` for ``u`` at the jet's ``nu``."""
    scale = np.sqrt(8.0 * jet.mu)
    tol = 1e-14 * scale if tol is None else tol
    u = np.array(u0, dtype=float)
    val = jet.evaluate(u)
    res = val.n - n_target
    rn = np.linalg.norm(res)
    for it in range(1, maxiter + 1):
        if rn <= tol:
            return u, val, it - 1
        step = np.linalg.solve(val.mixed, res)
        for _ in range(40):
            trial = u - step
            tval = jet.evaluate(trial)
            tres = tval.n - n_target
            tn = np.linalg.norm(tres)
            if tn < rn:
                break
            step = 0.5 * step
        else:
            if rn <= 1e3 * tol:
                return u, val, it
            raise InversionError("u inversion stalled", last=u, residual=rn, iterations=it)
        u, val, res, rn = trial, tval, tres, tn
    if rn <= 1e3 * tol:
        return u, val, maxiter
    raise InversionError(f"u inversion did not converge in {maxiter} iterations",
                         last=u, residual=rn, iterations=maxiter)


def chi4_inverse(n, nu, mu: float, E: float, N: int = 12, u0=None,
                 jet: SpatialJet | None = None) -> KSState:
    """``(n, nu) -> (u, U)`` by Newton on ``u`` started from ``n / sqrt(8 mu)``."""
    n = np.asarray(n, dtype=float)
    jet = SpatialJet(mu, E, nu, N) if jet is None else jet
    u0 = n / np.sqrt(8.0 * mu) if u0 is None else u0
    u, val, _ = solve_u(jet, n, u0)
    cond = np.linalg.cond(val.mixed)
    if cond > 1e8:
        warnings.warn(f"d2W/du dnu has condition number {cond:.3g}", IllConditionedWarning)
    return KSState(u, val.U)


def symplectic_defect(ks, mu: float, E: float, N: int = 12, h: float = 1e-6) -> float:
    """``max |J^T Omega J - Omega|`` for the Jacobian of ``(u, U) -> (n, nu)``."""
    x = np.asarray(ks, dtype=float)
    scale = np.concatenate([np.full(4, max(np.linalg.norm(x[:4]), 1e-3)),
                            np.full(4, np.linalg.norm(x[4:]))])
    cols = []
    nu_ref = None
    for i in range(8):
        e = np.zeros(8)
        e[i] = h * scale[i]
        outs = []
        for sgn in (1, -1, 2, -2):
            y = x + sgn * e
            nu, jet, _ = nu_hat(y[:4], y[4:], mu, E, N, nu0=nu_ref)
            nu_ref = nu if nu_ref is None else nu_ref
            outs.append(np.concatenate([jet.evaluate(y[:4]).n, nu]))
        d1 = (outs[0] - outs[1]) / (2 * e[i])
        d2 = (outs[2] - outs[3]) / (4 * e[i])
        cols.append((4 * d1 - d2) / 3)
    J = np.array(cols).T
    Om = np.block([[np.zeros((4, 4)), np.eye(4)], [-np.eye(4), np.zeros((4, 4))]])
    return float(np.max(np.abs(J.T @ Om @ J - Om)))


# ---------------------------------------------------------------- marching

class _SpatialFlow:
    def __init__(self, jet: SpatialJet, n0, nu0):
        self.jet = jet
        self.n0 = np.asarray(n0)
        self.rate = 2.0 * jet.mu * np.asarray(nu0)

    def at(self, s: float, guess):
        u, val, it = solve_u(self.jet, self.n0 + self.rate * s, guess)
        return u, val.U, it

    def velocity(self, u, U):
        return self.jet.velocity(u, U)


def _march(flow, u0, U0, sigma: float, direction: int, r_max: float,
           s_max: float, max_steps: int):
    """Walk ``s`` until ``|u(s)|^2`` climbs back to ``sigma``.

    Returns ``(status, s_exit, u, U, table, iters_max)``.
    """
    u, U = np.array(u0, dtype=float), np.array(U0, dtype=float)
    table_s, table_u = [0.0], [u.copy()]
    iters_max = 0
    vel = flow.velocity(u, U)
    rdot = 2.0 * u @ vel
    if direction * rdot >= 0:
        return "immediate-exit", 0.0, u, U, (np.array(table_s), np.array(table_u)), 0
    s = 0.0
    for _ in range(max_steps):
        vel = flow.velocity(u, U)
        rdot = abs(2.0 * u @ vel)
        speed = np.linalg.norm(vel)
        ds = min(sigma / 20.0 / max(rdot, 1e-300), 0.1 * np.sqrt(sigma) / max(speed, 1e-300))
        s_new = s + direction * ds
        if abs(s_new) > s_max:
            return "non-transit", s, u, U, (np.array(table_s), np.array(table_u)), iters_max
        u_new, U_new, it = flow.at(s_new, u + direction * ds * vel)
        iters_max = max(iters_max, it)
        if np.linalg.norm(u_new) > r_max:
            raise DomainError(f"trajectory left the trusted ball |u| <= {r_max} at s = {s_new:.6g}")
        if u_new @ u_new >= sigma:
            lo, hi, ulo, uhi = s, s_new, u, u_new
            cache = {}

            def gap(t):
                w = (t - lo) / (hi - lo)
                uu, UU, k = flow.at(t, (1 - w) * ulo + w * uhi)
                cache[t] = (uu, UU, k)
                return uu @ uu - sigma

            s_exit = optimize.brentq(gap, min(lo, hi), max(lo, hi), xtol=1e-15, rtol=1e-15,
                                     maxiter=200)
            uu, UU, k = cache.get(s_exit) or flow.at(s_exit, u_new)
            iters_max = max(iters_max, k)
            table_s.append(s_exit)
            table_u.append(uu.copy())
            return "transit", s_exit, uu, UU, (np.array(table_s), np.array(table_u)), iters_max
        s, u, U = s_new, u_new, U_new
        table_s.append(s)
        table_u.append(u.copy())
    return "non-transit", s, u, U, (np.array(table_s), np.array(table_u)), iters_max


def _proper_to_physical(flow, table, s_exit: float) -> float:
    """``t = int_0^s |u|^2 ds`` on the analytic solution."""
    if s_exit == 0.0:
        return 0.0
    ts, tu = table
    order = np.argsort(ts)
    ts, tu = ts[order], tu[order]

    def guess(s):
        return np.array([np.interp(s, ts, tu[:, k]) for k in range(tu.shape[1])])

    def rho(s):
        u, _, _ = flow.at(s, guess(s))
        return u @ u

    # breakpoints at the march samples keep each panel smooth and short
    pts = np.unique(np.clip(ts, min(0.0, s_exit), max(0.0, s_exit)))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(rho, a, b, epsabs=0.0, epsrel=1e-13, limit=50)
        total += val
    return total if s_exit > 0 else -total


# ---------------------------------------------------------------- encounter map

@dataclass(frozen=True)
class EncounterResult:
    entry: PlanetoState
    exit: PlanetoState
    nu0: np.ndarray
    n0: np.ndarray
    s_exit: float
    t_exit: float
    diagnostics: dict
    status: str = "transit"
    chart: Chart = Chart.PlusX

    def to_dict(self) -> dict:
        return {
            "entry": np.asarray(self.entry).tolist(),
            "exit": np.asarray(self.exit).tolist(),
            "nu0": self.nu0.tolist(),
            "n0": self.n0.tolist(),
            "s_exit": self.s_exit,
            "t_exit": self.t_exit,
            "diagnostics": {
                "nu_drift": self.diagnostics["nu_drift"],
                "energy_drift": self.diagnostics["energy_drift"],
                "bilinear": self.diagnostics["bilinear"],
                "newton_iters_max": int(self.diagnostics["newton_iters_max"]),
            },
            "status": self.status,
        }

    def to_json(self) -> str:
        return jsonio.dumps(self.to_dict())


def _entry_checks(q, sigma: float, r_max: float) -> None:
    r = float(np.linalg.norm(q))
    if abs(r - sigma) > 1e-10 * max(1.0, sigma):
        raise ParameterError(f"entry radius {r} differs from sigma = {sigma}")
    if np.sqrt(sigma) > r_max:
        raise DomainError(f"sqrt(sigma) = {np.sqrt(sigma):.4g} exceeds the trusted radius {r_max}")


def encounter_map(entry, sigma: float, mu: float, E: float | None = None, N: int = 12,
                  r_max: float = R_MAX, direction: int = 1, chart: Chart | None = None,
                  s_max: float = 1e3, max_steps: int = 100000) -> EncounterResult:
    """Propagate a state on the sphere ``|q| = sigma`` through the ball."""
    x = np.asarray(entry, dtype=float)
    _entry_checks(x[:3], sigma, r_max)
    H0 = ham_planeto(x, mu)
    if E is None:
        E = H0
    elif abs(H0 - E) > 1e-9 * max(1.0, abs(E)):
        raise ParameterError(f"entry energy {H0} differs from E = {E}")
    if direction not in (1, -1):
        raise ParameterError("direction must be +1 or -1")
    chart = select_chart(x[:3]) if chart is None else chart
    ks = chart_lift(x, chart)
    nu0, jet, it0 = nu_hat(ks.u, ks.U, mu, E, N, r_max)
    n0 = jet.evaluate(ks.u).n
    flow = _SpatialFlow(jet, n0, nu0)
    status, s_exit, u, U, table, iters = _march(flow, ks.u, ks.U, sigma, direction, r_max,
                                                s_max, max_steps)
    t_exit = _proper_to_physical(flow, table, s_exit)
    out = np.asarray(phase_project(KSState(u, U)))
    nu_end, _, it1 = nu_hat(u, U, mu, E, N, r_max, nu0=nu0)
    diag = {
        "nu_drift": float(np.max(np.abs(nu_end - nu0))),
        "energy_drift": float(abs(ham_planeto(out, mu) - E)),
        "bilinear": float(abs(bilinear(u, U))),
        "newton_iters_max": int(max(iters, it0, it1)),
    }
    return EncounterResult(entry=PlanetoState.from_array(x), exit=PlanetoState.from_array(out),
                           nu0=nu0, n0=n0, s_exit=float(s_exit), t_exit=float(t_exit),
                           diagnostics=diag, status=status, chart=chart)


# ---------------------------------------------------------------- planar pipeline

@dataclass(frozen=True)
class PlanarValue:
    W: float
    U: np.ndarray
    d_alpha: float
    d_kappa: float
    mixed: np.ndarray  # rows: d/dalpha, d/dkappa of grad_u W


class PlanarJet:
    """Planar ``W(u; alpha, kappa)`` with its two parameter derivatives."""

    def __init__(self, mu: float, E: float, alpha: float, kappa: float, N: int,
                 h: float = COMPLEX_STEP):
        self.mu, self.E, self.N, self.h = mu, E, N, h
        self.alpha, self.kappa = float(alpha), float(kappa)
        alphas = np.array([alpha + 1j * h, alpha])
        kappas = np.array([kappa, kappa + 1j * h])
        self.ring = get_ring(2, N)
        self.coeffs, _ = _solve(self.ring, planar_problem(N, mu, E, kappas, alphas), "graded")
        c, s = np.cos(alphas), np.sin(alphas)
        self._rot = np.array([[c, -s], [s, c]])  # R_alpha per column

    def evaluate(self, u) -> PlanarValue:
        ut = np.einsum("jik,j->ik", self._rot, u)  # R^T u
        vals = self.ring.monomial_values(ut)
        Wv = np.sum(self.coeffs * vals, axis=0)
        g = self.ring.gradient(self.coeffs, ut, vals)
        gu = np.einsum("ijk,jk->ik", self._rot, g)
        return PlanarValue(W=float(Wv[1].real), U=gu[:, 1].real.copy(),
                           d_alpha=float(Wv[0].imag / self.h), d_kappa=float(Wv[1].imag / self.h),
                           mixed=gu.imag.T / self.h)

    def velocity(self, u, U) -> np.ndarray:
        rho = u @ u
        return 0.25 * np.array([U[0] + 2 * rho * u[1], U[1] - 2 * rho * u[0]])


def planar_parameters(u, U, mu: float, E: float, N: int = 12, tol: float = NEWTON_TOL,
                      maxiter: int = MAX_ITER):
    """Solve ``U = dW/du(u; alpha, kappa)``; returns ``(alpha, kappa, jet, iterations)``."""
    u = np.asarray(u, dtype=float)
    U = np.asarray(U, dtype=float)
    p = np.array([np.arctan2(U[1], U[0]), U @ U / 8.0 - mu])
    jet = PlanarJet(mu, E, p[0], p[1], N)
    val = jet.evaluate(u)
    rn = np.linalg.norm(val.U - U)
    it = 0
    polish = 1
    while rn > tol or polish > 0:
        if rn <= tol:
            polish -= 1
        if it >= maxiter:
            raise InversionError("planar parameter inversion did not converge",
                                 last=p, residual=rn, iterations=it)
        it += 1
        step = np.linalg.solve(val.mixed.T, val.U - U)
        for _ in range(40):
            trial = p - step
            tjet = PlanarJet(mu, E, trial[0], trial[1], N)
            tval = tjet.evaluate(u)
            tn = np.linalg.norm(tval.U - U)
            if tn <= rn or tn <= tol:
                break
            step = 0.5 * step
        if tn > rn:
            break
        p, jet, val, rn = trial, tjet, tval, tn
    return float(p[0]), float(p[1]), jet, it


class _PlanarFlow:
    def __init__(self, jet: PlanarJet, a0: float, k0: float):
        self.jet = jet
        self.a0, self.k0 = a0, k0

    def at(self, s: float, guess):
        target = np.array([self.a0, self.k0 + s])
        u = np.array(guess, dtype=float)
        val = self.jet.evaluate(u)
        res = np.array([val.d_alpha, val.d_kappa]) - target
        tol = 1e-15 * max(1.0, abs(self.k0) + abs(s))
        for it in range(MAX_ITER):
            if np.linalg.norm(res) <= tol:
                return u, val.U, it
            step = np.linalg.solve(val.mixed, res)
            rn = np.linalg.norm(res)
            for _ in range(40):
                trial = u - step
                tval = self.jet.evaluate(trial)
                tres = np.array([tval.d_alpha, tval.d_kappa]) - target
                if np.linalg.norm(tres) < rn:
                    break
                step = 0.5 * step
            else:
                if rn <= 1e3 * tol:
                    return u, val.U, it
                raise InversionError("planar u inversion stalled", last=u, residual=rn,
                                     iterations=it)
            u, val, res = trial, tval, tres
        if np.linalg.norm(res) <= 1e3 * tol:
            return u, val.U, MAX_ITER
        raise InversionError("planar u inversion did not converge", last=u,
                             residual=np.linalg.norm(res), iterations=MAX_ITER)

    def velocity(self, u, U):
        return self.jet.velocity(u, U)


@dataclass(frozen=True)
class PlanarEncounterResult:
    entry: np.ndarray
    exit: np.ndarray
    alpha: float
    kappa: float
    s_exit: float
    t_exit: float
    diagnostics: dict
    status: str = "transit"

    def to_dict(self) -> dict:
        return {"entry": self.entry.tolist(), "exit": self.exit.tolist(), "alpha": self.alpha,
                "kappa": self.kappa, "s_exit": self.s_exit, "t_exit": self.t_exit,
                "diagnostics": self.diagnostics, "status": self.status}


def planar_encounter(entry, sigma: float, mu: float, E: float | None = None, N: int = 12,
                     r_max: float = R_MAX, direction: int = 1, s_max: float = 1e3,
                     max_steps: int = 100000) -> PlanarEncounterResult:
    """Planar close encounter ``(X, Y, P_X, P_Y)`` through the Levi-Civita complete integral."""
    x = np.asarray(entry, dtype=float)
    _entry_checks(np.array([x[0], x[1], 0.0]), sigma, r_max)
    full = np.array([x[0], x[1], 0.0, x[2], x[3], 0.0])
    H0 = ham_planeto(full, mu)
    E = H0 if E is None else E
    u0, U0 = lc_lift(x)
    alpha, kappa, jet, it0 = planar_parameters(u0, U0, mu, E, N)
    v0 = jet.evaluate(u0)
    flow = _PlanarFlow(jet, v0.d_alpha, v0.d_kappa)
    status, s_exit, u, U, table, iters = _march(flow, u0, U0, sigma, direction, r_max,
                                                s_max, max_steps)
    t_exit = _proper_to_physical(flow, table, s_exit)
    out = lc_project(u, U)
    diag = {
        "energy_drift": float(abs(ham_lc(u, U, mu, E))),
        "kappa": kappa,
        "newton_iters_max": int(max(iters, it0)),
    }
    return PlanarEncounterResult(entry=x, exit=out, alpha=alpha, kappa=kappa,
                                 s_exit=float(s_exit), t_exit=float(t_exit),
                                 diagnostics=diag, status=status)


# ---------------------------------------------------------------- first integrals

def first_integrals_nnu(n, nu) -> np.ndarray:
    """``(N_X, N_Y, N_Z)``, bilinear in ``(n, nu)``."""
    n1, n2, n3, n4 = n
    v1, v2, v3, v4 = nu
    return np.array([
        v1 * n4 - v4 * n1,
        0.5 * (v1 * n3 - n1 * v3 + n2 * v4 - n4 * v2),
        0.5 * (v1 * n2 - n1 * v2 + n4 * v3 - n3 * v4),
    ])


@dataclass(frozen=True)
class FirstIntegralTriple:
    H: float
    N2: float
    NZ: float
    components: np.ndarray
    chart: Chart
    chart_discrepancy: float | None = None
    nu: np.ndarray = field(default=None, repr=False)

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.H, self.N2, self.NZ)


def _integrals_on_chart(x, chart: Chart, mu, E, N, r_max, nu0=None):
    ks = chart_lift(x, chart)
    nu, jet, _ = nu_hat(ks.u, ks.U, mu, E, N, r_max, nu0=nu0)
    n = jet.evaluate(ks.u).n
    return first_integrals_nnu(n, nu), nu


def other_chart(q) -> Chart | None:
    """The second chart at ``q`` when ``q`` lies in both domains."""
    X, Y, Z = q
    if Y == 0 and Z == 0:
        return None
    return Chart.MinusX if select_chart(q) is Chart.PlusX else Chart.PlusX


def cartesian_integrals(state, mu: float, E: float | None = None, N: int = 12,
                        r_max: float = R_MAX, compare_charts: bool = True,
                        nu0=None) -> FirstIntegralTriple:
    """``H``, ``|N|^2`` and ``N_Z`` at a body-centred state."""
    x = np.asarray(state, dtype=float)
    H = ham_planeto(x, mu)
    E = H if E is None else E
    chart = select_chart(x[:3])
    comps, nu = _integrals_on_chart(x, chart, mu, E, N, r_max, nu0)
    gap = None
    if compare_charts:
        alt = other_chart(x[:3])
        if alt is not None:
            try:
                other, _ = _integrals_on_chart(x, alt, mu, E, N, r_max)
                gap = float(np.max(np.abs(other - comps)))
            except ChartDomainError:
                gap = None
    return FirstIntegralTriple(H=H, N2=float(comps @ comps), NZ=float(comps[2]),
                               components=comps, chart=chart, chart_discrepancy=gap, nu=nu)


def integral_vector(state, mu: float, E: float, N: int = 12, nu0=None,
                    r_max: float = R_MAX) -> np.ndarray:
    """``[H, N^2, N_Z, N_X, N_Y]`` on the selected chart."""
    x = np.asarray(state, dtype=float)
    comps, _ = _integrals_on_chart(x, select_chart(x[:3]), mu, E, N, r_max, nu0)
    return np.array([ham_planeto(x, mu), comps @ comps, comps[2], comps[0], comps[1]])


# ---------------------------------------------------------------- brackets

def gradient_fd(f, x, scales=None, step: float = 1e-4):
    """Richardson-extrapolated central differences of a scalar or vector field.

    Returns ``(grad, err)`` where ``grad[..., i] = df/dx_i`` and ``err`` bounds
    the error by the size of the extrapolation correction.
    """
    x = np.asarray(x, dtype=float)
    scales = np.ones_like(x) if scales is None else np.asarray(scales, dtype=float)
    cols, errs = [], []
    for i in range(len(x)):
        h = step * scales[i]
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = np.asarray(f(x + e)), np.asarray(f(x - e))
        fp2, fm2 = np.asarray(f(x + 2 * e)), np.asarray(f(x - 2 * e))
        d1 = (fp - fm) / (2 * h)
        d2 = (fp2 - fm2) / (4 * h)
        r = (4 * d1 - d2) / 3
        cols.append(r)
        errs.append(np.abs(r - d1))
    return np.moveaxis(np.array(cols), 0, -1), np.moveaxis(np.array(errs), 0, -1)


def _default_scales(x, dim: int) -> np.ndarray:
    half = dim // 2
    a = max(np.linalg.norm(x[:half]), 1e-12)
    b = max(np.linalg.norm(x[half:]), 1e-12)
    return np.concatenate([np.full(half, a), np.full(half, b)])


def bracket_from_gradients(gf, gg) -> float:
    half = len(gf) // 2
    return float(gf[:half] @ gg[half:] - gf[half:] @ gg[:half])


def poisson_bracket(f, g, point, dim: int, scales=None, step: float = 1e-4,
                    accuracy: float = 1e-7) -> float:
    """``{f, g}`` in canonical coordinates ``(q, p)`` of dimension 6 or 8."""
    if dim not in (6, 8):
        raise ParameterError(f"phase dimension must be 6 or 8, got {dim}")
    x = np.asarray(point, dtype=float)
    if x.shape != (dim,):
        raise ParameterError(f"point must have length {dim}")
    scales = _default_scales(x, dim) if scales is None else scales
    gf, ef = gradient_fd(f, x, scales, step)
    gg, eg = gradient_fd(g, x, scales, step)
    for grad, err in ((gf, ef), (gg, eg)):
        nrm = np.max(np.abs(grad))
        if nrm > 0 and np.max(err) > accuracy * nrm:
            raise AccuracyError(
                f"gradient error estimate {np.max(err):.3e} exceeds {accuracy} x {nrm:.3e}")
    return bracket_from_gradients(gf, gg)


def ks_position(ks) -> np.ndarray:
    x = np.asarray(ks, dtype=float)
    return np.asarray(phase_project(x).q)


def ks_momentum(ks) -> np.ndarray:
    x = np.asarray(ks, dtype=float)
    u, U = x[:4], x[4:]
    return (ks_matrix(u) @ U)[:3] / (2.0 * (u @ u))


def integral_gradients(state, mu: float, E: float, N: int = 12, step: float = 1e-4,
                       r_max: float = R_MAX):
    """Analytic ``grad H`` and finite-difference gradients of ``N^2``, ``N_Z``."""
    x = np.asarray(state, dtype=float)
    base_nu = cartesian_integrals(x, mu, E, N, r_max, compare_charts=False).nu
    f = lambda y: integral_vector(y, mu, E, N, nu0=base_nu, r_max=r_max)[1:3]
    g, err = gradient_fd(f, x, _default_scales(x, 6), step)
    return grad_planeto(x, mu), g[0], g[1], err


def integral_brackets(state, mu: float, E: float, N: int = 12) -> dict:
    gH, gN2, gNZ, err = integral_gradients(state, mu, E, N)
    return {
        "H_NZ": bracket_from_gradients(gH, gNZ),
        "H_N2": bracket_from_gradients(gH, gN2),
        "N2_NZ": bracket_from_gradients(gN2, gNZ),
        "grad_err": float(np.max(err)),
    }


def gradient_rank(gH, gN2, gNZ, rtol: float = 1e-6) -> int:
    M = np.array([g / np.linalg.norm(g) for g in (gH, gN2, gNZ)])
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv > rtol * sv[0]))


def completeness_check(states, mu: float, E: float, N: int = 6, step: float = 1e-4,
                       with_brackets: bool = False) -> dict:
    """Rank of ``(grad H, grad N^2, grad N_Z)`` and optional pairwise brackets per state."""
    ranks, brackets = [], []
    for x in states:
        gH, gN2, gNZ, _ = integral_gradients(x, mu, E, N, step)
        ranks.append(gradient_rank(gH, gN2, gNZ))
        if with_brackets:
            brackets.append(max(abs(bracket_from_gradients(gH, gNZ)),
                                abs(bracket_from_gradients(gH, gN2)),
                                abs(bracket_from_gradients(gN2, gNZ))))
    ranks = np.array(ranks)
    report = {"samples": len(ranks), "rank3_fraction": float(np.mean(ranks == 3)),
              "min_rank": int(ranks.min()) if len(ranks) else 0}
    if with_brackets:
        report["max_bracket"] = float(max(brackets)) if brackets else 0.0
    return report


def collision_manifold_rank(mu: float, E: float, nu, N: int = 6) -> int:
    """Rank of the Jacobian of ``(U_j - dW/du_j, l(u, U))`` at ``(0, sqrt(8 mu) nu)``."""
    nu = np.asarray(nu, dtype=float)
    ci = complete_integral(mu, E, nu, N)
    w = ci.w
    H = np.array([[float(w.partial(i).partial(j).coefficient((0, 0, 0, 0))) for j in range(4)]
                  for i in range(4)])
    U = np.sqrt(8.0 * mu) * nu
    J = np.zeros((5, 8))
    J[:4, :4] = -H
    J[:4, 4:] = np.eye(4)
    J[4, :4] = OMEGA @ U
    J[4, 4:] = OMEGA.T @ np.zeros(4)
    sv = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(sv > 1e-10 * sv[0]))
