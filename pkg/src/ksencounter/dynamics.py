"""Reference integration of every Hamiltonian in the package.

This is the oracle side: plain adaptive Runge-Kutta on closed-form
gradients, used to check the analytic propagator and the first integrals.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _si

from .errors import CollisionError, ParameterError, SingularityError
from .kscore import (chart_lift, grad_bary, grad_ks_identity, grad_lc, grad_planeto, ham_bary,
                     ham_ks_identity, ham_lc, ham_planeto, bilinear, phase_project)

RTOL = 1e-12
ATOL = 1e-14
HAMILTONIANS = ("H", "h", "K_I", "K_2")
_DIM = {"H": 6, "h": 6, "K_I": 8, "K_2": 4}


@dataclass(frozen=True)
class Trajectory:
    hamiltonian: str
    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    bilinear: np.ndarray | None
    stats: dict
    t_events: list = field(default_factory=list)
    y_events: list = field(default_factory=list)
    physical: np.ndarray | None = None  # t(s) carried alongside K_I runs
    sol: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __call__(self, x):
        """Dense-output state at ``x`` (phase part only)."""
        return self.sol(x)[: self.dim]


def _system(name: str, mu: float, E: float | None, far_body: bool):
    if name == "H":
        def grad(y):
            return grad_planeto(y, mu, far_body)
        ham = lambda y: ham_planeto(y, mu, far_body)
    elif name == "h":
        grad = lambda y: grad_bary(y, mu)
        ham = lambda y: ham_bary(y, mu)
    elif name == "K_I":
        grad = lambda y: grad_ks_identity(y[:4], y[4:], mu, E, far_body)
        ham = lambda y: ham_ks_identity(y[:4], y[4:], mu, E, far_body)
    elif name == "K_2":
        grad = lambda y: grad_lc(y[:2], y[2:], mu, E)
        ham = lambda y: ham_lc(y[:2], y[2:], mu, E)
    else:
        raise ParameterError(f"unknown Hamiltonian {name!r}; expected one of {HAMILTONIANS}")
    return grad, ham


def integrate(hamiltonian: str, state, span, mu: float, E: float | None = None,
              rtol: float = RTOL, atol: float = ATOL, events=None, t_eval=None,
              far_body: bool = True, max_step: float = np.inf) -> Trajectory:
    """Hamilton's equations for ``H``, ``h``, ``K_I`` or ``K_2`` with DOP853.

    Regularized runs carry physical time as an extra component, so
    ``traj.physical`` holds ``t(s)`` at each sample.
    """
    y0 = np.asarray(state, dtype=float)
    dim = _DIM.get(hamiltonian)
    if dim is None:
        raise ParameterError(f"unknown Hamiltonian {hamiltonian!r}; expected one of {HAMILTONIANS}")
    if y0.shape != (dim,):
        raise ParameterError(f"{hamiltonian} needs a state of length {dim}")
    regularized = hamiltonian in ("K_I", "K_2")
    if regularized and E is None:
        raise ParameterError("regularized flows need the energy E")
    grad, ham = _system(hamiltonian, mu, E, far_body)
    half = dim // 2

    def rhs(_, y):
        try:
            g = grad(y[:dim])
        except CollisionError as exc:
            raise SingularityError(str(exc)) from exc
        out = np.concatenate([g[half:], -g[:half]])
        if regularized:
            q = y[:half]
            out = np.append(out, q @ q)
        return out

    ev = [] if events is None else list(events) if isinstance(events, (list, tuple)) else [events]
    wrapped = []
    for f in ev:
        def g(s, y, f=f):
            return f(s, y[:dim])
        g.terminal = getattr(f, "terminal", False)
        g.direction = getattr(f, "direction", 0)
        wrapped.append(g)
    start = np.append(y0, 0.0) if regularized else y0
    sol = _si.solve_ivp(rhs, span, start, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True, events=wrapped or None, t_eval=t_eval,
                        max_step=max_step)
    if sol.status == -1:
        raise SingularityError(f"integration of {hamiltonian} failed: {sol.message}")
    states = sol.y[:dim].T.copy()
    energy = np.array([ham(y) for y in states])
    lform = np.array([bilinear(y[:4], y[4:]) for y in states]) if hamiltonian == "K_I" else None
    return Trajectory(
        hamiltonian=hamiltonian, times=sol.t.copy(), states=states, energy=energy,
        bilinear=lform, stats={"nfev": int(sol.nfev), "status": int(sol.status)},
        t_events=[] if sol.t_events is None else [t.copy() for t in sol.t_events],
        y_events=[] if sol.y_events is None else [y[:, :dim].copy() for y in sol.y_events],
        physical=sol.y[dim].copy() if regularized else None, sol=sol.sol)


def physical_time(traj: Trajectory) -> np.ndarray:
    """``t(s) = int ||u||^2 ds`` by adaptive quadrature between samples."""
    if traj.hamiltonian not in ("K_I", "K_2"):
        raise ParameterError("physical time is defined for regularized trajectories")
    half = traj.dim // 2

    def rho(s):
        u = traj(s)[:half]
        return u @ u

    s = traj.times
    out = np.zeros(len(s))
    for k in range(1, len(s)):
        val, _ = _si.quad(rho, s[k - 1], s[k], epsabs=0.0, epsrel=1e-13, limit=100)
        out[k] = out[k - 1] + val
    return out


@dataclass(frozen=True)
class FlowReport:
    deviation: float
    samples: int
    s_end: float
    t_end: float
    cartesian_status: str
    min_radius: float

    def to_dict(self) -> dict:
        return {"deviation": self.deviation, "samples": self.samples, "s_end": self.s_end,
                "t_end": self.t_end, "cartesian_status": self.cartesian_status,
                "min_radius": self.min_radius}


def flow_equivalence(entry, span: float, mu: float, E: float | None = None,
                     samples: int = 50, far_body: bool = True) -> FlowReport:
    """Compare projected ``K_I`` motion with direct ``H`` integration over physical time ``span``."""
    x = np.asarray(entry, dtype=float)
    E = ham_planeto(x, mu, far_body) if E is None else E
    ks = np.asarray(chart_lift(x))

    # integrate in s until the carried physical time reaches span
    grad, _ = _system("K_I", mu, E, far_body)

    def rhs(_, y):
        g = grad(y[:8])
        return np.append(np.concatenate([g[4:], -g[:4]]), y[:4] @ y[:4])

    def stop(_, y):
        return y[8] - span
    stop.terminal = True
    stop.direction = np.sign(span) or 1
    s_guess = 10.0 * abs(span) / max(ks[:4] @ ks[:4], 1e-300) + 1.0
    ks_sol = _si.solve_ivp(rhs, (0.0, np.sign(span) * s_guess), np.append(ks, 0.0),
                           method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True,
                           events=stop)
    if not len(ks_sol.t_events[0]):
        raise SingularityError("regularized run did not reach the requested physical time")
    s_end = float(ks_sol.t_events[0][0])
    s_grid = np.linspace(0.0, s_end, samples + 1)
    ks_states = ks_sol.sol(s_grid)
    t_grid = ks_states[8]
    projected = np.array([np.asarray(phase_project(y[:8])) for y in ks_states.T])
    min_radius = float(np.min(np.sum(ks_states[:4] ** 2, axis=0)))

    status = "ok"
    try:
        cart = integrate("H", x, (0.0, t_grid[-1]), mu, far_body=far_body)
        if cart.stats["status"] != 0:
            status = "incomplete"
            deviation = float("nan")
        else:
            ref = cart.sol(t_grid).T
            deviation = float(np.max(np.abs(ref - projected)) / np.max(np.abs(ref)))
    except SingularityError:
        status = "singular"
        deviation = float("nan")
    return FlowReport(deviation=deviation, samples=samples + 1, s_end=s_end,
                      t_end=float(t_grid[-1]), cartesian_status=status, min_radius=min_radius)


# ---------------------------------------------------------------- CSV

KS_HEADER = "s,t,u1,u2,u3,u4,U1,U2,U3,U4,K,l,nu1,nu2,nu3,nu4"
CART_HEADER = "t,X,Y,Z,PX,PY,PZ,H"


def _row(values) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


def trajectory_csv(traj: Trajectory, nu=None) -> str:
    """CSV text; ``nu`` supplies per-sample ``nu`` columns for KS runs (NaN if absent)."""
    buf = io.StringIO()
    if traj.hamiltonian == "K_I":
        buf.write(KS_HEADER + "\n")
        nus = np.full((len(traj.times), 4), np.nan) if nu is None else np.asarray(nu)
        for k in range(len(traj.times)):
            buf.write(_row([traj.times[k], traj.physical[k], *traj.states[k],
                            traj.energy[k], traj.bilinear[k], *nus[k]]) + "\n")
    elif traj.hamiltonian in ("H", "h"):
        buf.write(CART_HEADER + "\n")
        for k in range(len(traj.times)):
            buf.write(_row([traj.times[k], *traj.states[k], traj.energy[k]]) + "\n")
    else:
        buf.write("s,t,u1,u2,U1,U2,K\n")
        for k in range(len(traj.times)):
            buf.write(_row([traj.times[k], traj.physical[k], *traj.states[k],
                            traj.energy[k]]) + "\n")
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data
