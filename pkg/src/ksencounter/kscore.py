"""Closed-form KS machinery: matrices, projections, charts and Hamiltonians.

Units follow the rotating nondimensional frame: primaries of mass ``1-mu``
and ``mu`` sit at ``(-mu, 0, 0)`` and ``(1-mu, 0, 0)``, angular speed 1.
Everything near a body is written for the secondary (``body=2``); the
primary is handled by the half-turn about the z axis that swaps the two
bodies, i.e. ``mu -> 1-mu``, ``x -> -x``, ``y -> -y`` (momenta alike).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartDomainError, CollisionError, DimensionError, DomainError, ParameterError

E1 = np.array([1.0, 0.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

# l(u, U) = u @ OMEGA @ U
OMEGA = np.array([
    [0, 0, 0, -1],
    [0, 0, 1, 0],
    [0, -1, 0, 0],
    [1, 0, 0, 0],
], dtype=float)


def _vec(x, n: int, name: str = "vector") -> np.ndarray:
    a = np.asarray(x)
    if a.shape != (n,):
        raise DimensionError(f"{name} must have shape ({n},), got {a.shape}")
    return a


# ---------------------------------------------------------------- states

@dataclass(frozen=True)
class Params:
    """Problem constants for the regularized Hamiltonians and HJ series."""

    mu: float
    E: float
    kappa: float = 0.0
    lam: float = 1.0
    nu: tuple = (1.0, 0.0, 0.0, 0.0)
    body: int = 2

    def __post_init__(self):
        if not 0.0 < self.mu <= 0.5:
            raise ParameterError(f"mu must lie in (0, 1/2], got {self.mu}")
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if self.body not in (1, 2):
            raise ParameterError(f"body must be 1 or 2, got {self.body}")
        object.__setattr__(self, "nu", tuple(float(x) for x in _vec(self.nu, 4, "nu")))

    @property
    def mass(self) -> float:
        """Mass of the body the encounter is centred on."""
        return self.mu if self.body == 2 else 1.0 - self.mu

    @property
    def E_mu(self) -> float:
        return shifted_energy(self.E, self.mass)

    @property
    def nu_array(self) -> np.ndarray:
        return np.array(self.nu)


def shifted_energy(E: float, mu: float) -> float:
    return E + (1.0 - mu) + 0.5 * (1.0 - mu) ** 2


@dataclass(frozen=True)
class CartState:
    """Barycentric rotating-frame position ``q`` and momentum ``p``."""

    q: np.ndarray
    p: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.concatenate([self.q, self.p]).astype(dtype or float)

    @classmethod
    def from_array(cls, a) -> "CartState":
        a = _vec(a, 6, "state")
        return cls(np.array(a[:3], dtype=float), np.array(a[3:], dtype=float))


@dataclass(frozen=True)
class PlanetoState:
    """Body-centred position ``(X, Y, Z)`` and momentum ``(P_X, P_Y, P_Z)``."""

    q: np.ndarray
    p: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.concatenate([self.q, self.p]).astype(dtype or float)

    @classmethod
    def from_array(cls, a) -> "PlanetoState":
        a = _vec(a, 6, "state")
        return cls(np.array(a[:3], dtype=float), np.array(a[3:], dtype=float))

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.q))


@dataclass(frozen=True)
class KSState:
    u: np.ndarray
    U: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.concatenate([self.u, self.U]).astype(dtype or float)

    @classmethod
    def from_array(cls, a) -> "KSState":
        a = _vec(a, 8, "KS state")
        return cls(np.array(a[:4], dtype=float), np.array(a[4:], dtype=float))


class Chart(enum.Enum):
    PlusX = "PlusX"
    MinusX = "MinusX"


# ---------------------------------------------------------------- matrices

def ks_matrix(u) -> np.ndarray:
    u1, u2, u3, u4 = _vec(u, 4, "u")
    return np.array([
        [u1, -u2, -u3, u4],
        [u2, u1, -u4, -u3],
        [u3, u4, u1, u2],
        [u4, -u3, u2, -u1],
    ])


def ks_project(u) -> np.ndarray:
    """Position ``pi(u)``: first three entries of ``A(u) u``."""
    u1, u2, u3, u4 = _vec(u, 4, "u")
    return np.array([
        u1 * u1 - u2 * u2 - u3 * u3 + u4 * u4,
        2.0 * (u1 * u2 - u3 * u4),
        2.0 * (u1 * u3 + u2 * u4),
    ])


# A(u) = sum_m u_m * _A_BASIS[m]
_A_BASIS = np.array([ks_matrix(row) for row in np.eye(4)])


def projection_jacobian(u) -> np.ndarray:
    """d pi / du, a 3x4 matrix equal to the top rows of ``2 A(u)``."""
    return 2.0 * ks_matrix(u)[:3]


def bilinear(u, U) -> float:
    u = _vec(u, 4, "u")
    U = _vec(U, 4, "U")
    return u[3] * U[0] - u[2] * U[1] + u[1] * U[2] - u[0] * U[3]


def lambda_omega(omega) -> np.ndarray:
    w1, w2, w3 = _vec(omega, 3, "omega")
    return np.array([
        [0.0, -w3, w2, 0.0],
        [w3, 0.0, -w1, 0.0],
        [-w2, w1, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])


def vector_potential(u, omega) -> np.ndarray:
    """``b_omega(u) = 2 A(u)^T Lambda_omega A(u) u``."""
    A = ks_matrix(u)
    w = np.append(np.cross(_vec(omega, 3, "omega"), ks_project(u)), 0.0)
    return 2.0 * A.T @ w


def snu_batched(nu):
    """``(S_nu, R_nu, |nu|^2)`` for ``nu`` of shape ``(4,) + batch``, real or complex.

    The squared norm is the analytic sum of squares (no conjugation) so that
    complex-step perturbations of ``nu`` propagate analytically.
    """
    n1, n2, n3, n4 = nu
    nn = n1 * n1 + n2 * n2 + n3 * n3 + n4 * n4
    S = np.array([
        [n1, -n2, -n3, -n4],
        [n2, n1, -n4, n3],
        [n3, n4, n1, -n2],
        [n4, -n3, n2, n1],
    ])
    R = np.array([
        [n1**2 - n2**2 - n3**2 + n4**2, -2 * (n1 * n2 + n3 * n4), -2 * (n1 * n3 - n2 * n4)],
        [2 * (n1 * n2 - n3 * n4), n1**2 - n2**2 + n3**2 - n4**2, -2 * (n2 * n3 + n1 * n4)],
        [2 * (n1 * n3 + n2 * n4), -2 * (n2 * n3 - n1 * n4), n1**2 + n2**2 - n3**2 - n4**2],
    ])
    return S, R, nn


def snu_matrix(nu):
    """Return ``(S_nu, R_nu, Pi(S_nu))`` for a nonzero quaternion-like ``nu``."""
    nu = _vec(nu, 4, "nu")
    S, R, nn = snu_batched(nu)
    if nn == 0:
        raise DomainError("nu must be nonzero")
    return S, R, R / nn


def s0_alpha(alpha: float) -> np.ndarray:
    """Rotation of the KS fibre; ``pi(S0 u) == pi(u)``."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([
        [c, 0.0, 0.0, -s],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [s, 0.0, 0.0, c],
    ])


def frame_vectors(R) -> tuple[np.ndarray, np.ndarray]:
    """``(omega, e) = (R^T e3, R^T e1)``."""
    R = np.asarray(R)
    return R.T @ E3, R.T @ E1


# ---------------------------------------------------------------- translations

def to_planeto(state, mu: float, body: int = 2) -> PlanetoState:
    """Barycentric to body-centred coordinates (``h == H`` under this map)."""
    x = np.asarray(state, dtype=float).copy()
    if body == 1:
        x[[0, 1, 3, 4]] *= -1.0
        mu = 1.0 - mu
    xj = 1.0 - mu
    x[0] -= xj
    x[4] -= xj
    return PlanetoState.from_array(x)


def from_planeto(state, mu: float, body: int = 2) -> CartState:
    x = np.asarray(state, dtype=float).copy()
    m = mu if body == 2 else 1.0 - mu
    xj = 1.0 - m
    x[0] += xj
    x[4] += xj
    if body == 1:
        x[[0, 1, 3, 4]] *= -1.0
    return CartState.from_array(x)


# ---------------------------------------------------------------- Hamiltonians

def ham_bary(state, mu: float) -> float:
    x, y, z, px, py, pz = np.asarray(state, dtype=float)
    r1 = np.sqrt((x + mu) ** 2 + y * y + z * z)
    r2 = np.sqrt((x - 1.0 + mu) ** 2 + y * y + z * z)
    if r1 == 0:
        raise CollisionError("r1 = 0: state at the primary")
    if r2 == 0:
        raise CollisionError("r2 = 0: state at the secondary")
    return 0.5 * (px * px + py * py + pz * pz) + px * y - py * x - (1.0 - mu) / r1 - mu / r2


def grad_bary(state, mu: float) -> np.ndarray:
    """``(dh/dq, dh/dp)``."""
    x, y, z, px, py, pz = np.asarray(state, dtype=float)
    d1 = np.array([x + mu, y, z])
    d2 = np.array([x - 1.0 + mu, y, z])
    r1 = np.linalg.norm(d1)
    r2 = np.linalg.norm(d2)
    if r1 == 0 or r2 == 0:
        raise CollisionError("state at a primary")
    gq = (1.0 - mu) * d1 / r1**3 + mu * d2 / r2**3 + np.array([-py, px, 0.0])
    gp = np.array([px + y, py - x, pz])
    return np.concatenate([gq, gp])


def ham_planeto(state, mu: float, far_body: bool = True) -> float:
    """Body-centred Hamiltonian; ``far_body=False`` drops the other primary."""
    X, Y, Z, PX, PY, PZ = np.asarray(state, dtype=float)
    r = np.sqrt(X * X + Y * Y + Z * Z)
    if r == 0:
        raise CollisionError("r = 0: state at the encounter body")
    val = 0.5 * (PX * PX + PY * PY + PZ * PZ) + PX * Y - PY * X - mu / r
    if far_body:
        r1 = np.sqrt((X + 1.0) ** 2 + Y * Y + Z * Z)
        if r1 == 0:
            raise CollisionError("r1 = 0: state at the other primary")
        m1 = 1.0 - mu
        val -= m1 * (1.0 / r1 - 1.0 + X) + m1 + 0.5 * m1 * m1
    return val


def grad_planeto(state, mu: float, far_body: bool = True) -> np.ndarray:
    X, Y, Z, PX, PY, PZ = np.asarray(state, dtype=float)
    q = np.array([X, Y, Z])
    r = np.linalg.norm(q)
    if r == 0:
        raise CollisionError("r = 0: state at the encounter body")
    gq = mu * q / r**3 + np.array([-PY, PX, 0.0])
    if far_body:
        d1 = np.array([X + 1.0, Y, Z])
        r1 = np.linalg.norm(d1)
        gq = gq + (1.0 - mu) * (d1 / r1**3 - E1)
    gp = np.array([PX + Y, PY - X, PZ])
    return np.concatenate([gq, gp])


def ham_ks_general(u, U, mu: float, E: float, lam: float = 1.0, R=None,
                   far_body: bool = True) -> float:
    """Regularized Hamiltonian ``K_{lam R}`` at energy ``E``."""
    u = _vec(u, 4, "u")
    U = _vec(U, 4, "U")
    R = np.eye(3) if R is None else np.asarray(R)
    omega, e = frame_vectors(R)
    rho = u @ u
    q = ks_project(u)
    b = vector_potential(u, omega)
    w = np.cross(omega, q)
    d = U - lam**2 * b
    val = (d @ d) / (8.0 * lam**2) - 0.5 * lam**2 * rho * (w @ w) - mu / lam
    m1 = 1.0 - mu
    if far_body:
        val -= rho * shifted_energy(E, mu)
        s = lam * q + e
        ns = np.linalg.norm(s)
        if ns == 0:
            raise CollisionError("distance to the other primary vanishes")
        val -= m1 * rho * (1.0 / ns - 1.0 + lam * (q @ e))
    else:
        val -= rho * E
    return val


def grad_ks_general(u, U, mu: float, E: float, lam: float = 1.0, R=None,
                    far_body: bool = True) -> np.ndarray:
    """``(dK/du, dK/dU)`` written out by hand."""
    u = _vec(u, 4, "u")
    U = _vec(U, 4, "U")
    R = np.eye(3) if R is None else np.asarray(R)
    omega, e = frame_vectors(R)
    A = ks_matrix(u)
    rho = u @ u
    q = ks_project(u)
    Jq = 2.0 * A[:3]
    w = np.cross(omega, q)
    b = 2.0 * A[:3].T @ w
    d = U - lam**2 * b

    # J_b^T d, with b = 2 A(u)^T (w, 0) and A linear in u
    jbt = 2.0 * np.einsum("mki,k,i->m", _A_BASIS, np.append(w, 0.0), d)
    jbt += 2.0 * Jq.T @ np.cross((A @ d)[:3], omega)

    gU = d / (4.0 * lam**2)
    gu = -0.25 * jbt
    grad_w2 = 2.0 * (q * (omega @ omega) - omega * (omega @ q))
    gu -= 0.5 * lam**2 * (2.0 * u * (w @ w) + rho * Jq.T @ grad_w2)
    m1 = 1.0 - mu
    if far_body:
        gu -= 2.0 * u * shifted_energy(E, mu)
        s = lam * q + e
        ns = np.linalg.norm(s)
        G = 1.0 / ns - 1.0 + lam * (q @ e)
        gG = -s / ns**3 + e
        gu -= m1 * (2.0 * u * G + rho * lam * Jq.T @ gG)
    else:
        gu -= 2.0 * u * E
    return np.concatenate([gu, gU])


def ham_ks_identity(u, U, mu: float, E: float, far_body: bool = True) -> float:
    """``K_I(u, U) = ||u||^2 (H(projected state) - E)``."""
    return ham_ks_general(u, U, mu, E, 1.0, None, far_body)


def grad_ks_identity(u, U, mu: float, E: float, far_body: bool = True) -> np.ndarray:
    return grad_ks_general(u, U, mu, E, 1.0, None, far_body)


def ks_matrix_rows(u) -> np.ndarray:
    """``A(u)`` for each row of an ``(n, 4)`` array."""
    return np.einsum("kij,nk->nij", _A_BASIS, np.asarray(u, dtype=float))


def ham_ks_rows(u, U, mu: float, E: float, lam, R) -> np.ndarray:
    """Row-wise ``K_{lam R}`` for arrays ``u, U`` of shape ``(n, 4)``, ``lam (n,)``, ``R (n, 3, 3)``."""
    u = np.asarray(u, dtype=float)
    U = np.asarray(U, dtype=float)
    lam = np.asarray(lam, dtype=float)
    A = ks_matrix_rows(u)
    q = np.einsum("nij,nj->ni", A, u)[:, :3]
    omega, e = R[:, 2, :], R[:, 0, :]
    w = np.cross(omega, q)
    b = 2.0 * np.einsum("nji,nj->ni", A[:, :3, :], w)
    rho = np.sum(u * u, axis=1)
    d = U - lam[:, None] ** 2 * b
    s = lam[:, None] * q + e
    m1 = 1.0 - mu
    G = 1.0 / np.linalg.norm(s, axis=1) - 1.0 + lam * np.sum(q * e, axis=1)
    return (np.sum(d * d, axis=1) / (8.0 * lam**2) - 0.5 * lam**2 * rho * np.sum(w * w, axis=1)
            - mu / lam - rho * shifted_energy(E, mu) - m1 * rho * G)


def ham_lc(u, U, mu: float, E: float) -> float:
    """Planar Levi-Civita Hamiltonian at energy ``E``."""
    u1, u2 = _vec(u, 2, "u")
    U1, U2 = _vec(U, 2, "U")
    rho = u1 * u1 + u2 * u2
    X = u1 * u1 - u2 * u2
    m1 = 1.0 - mu
    D = 1.0 + 2.0 * X + rho * rho
    if D <= 0:
        raise CollisionError("distance to the other primary vanishes")
    return ((U1 + 2.0 * rho * u2) ** 2 + (U2 - 2.0 * rho * u1) ** 2) / 8.0 \
        - 0.5 * rho**3 - mu - rho * shifted_energy(E, mu) \
        - m1 * rho * (1.0 / np.sqrt(D) - 1.0 + X)


def grad_lc(u, U, mu: float, E: float) -> np.ndarray:
    u1, u2 = _vec(u, 2, "u")
    U1, U2 = _vec(U, 2, "U")
    rho = u1 * u1 + u2 * u2
    X = u1 * u1 - u2 * u2
    m1 = 1.0 - mu
    D = 1.0 + 2.0 * X + rho * rho
    a = U1 + 2.0 * rho * u2
    c = U2 - 2.0 * rho * u1
    G = 1.0 / np.sqrt(D) - 1.0 + X
    dX = np.array([2.0 * u1, -2.0 * u2])
    drho = 2.0 * np.array([u1, u2])
    dD = 2.0 * dX + 2.0 * rho * drho
    dG = -0.5 * D**-1.5 * dD + dX
    da = 2.0 * drho * u2 + np.array([0.0, 2.0 * rho])
    dc = -2.0 * drho * u1 - np.array([2.0 * rho, 0.0])
    gu = (a * da + c * dc) / 4.0 - 1.5 * rho**2 * drho \
        - drho * shifted_energy(E, mu) - m1 * (drho * G + rho * dG)
    gU = np.array([a, c]) / 4.0
    return np.concatenate([gu, gU])


# ---------------------------------------------------------------- charts

def select_chart(q) -> Chart:
    """Chart whose excluded half-line is farthest from ``q``."""
    X, Y, Z = _vec(q, 3, "position")
    if X > 0:
        return Chart.PlusX
    if X < 0:
        return Chart.MinusX
    if Y == 0 and Z == 0:
        raise CollisionError("no chart at the origin")
    return Chart.PlusX


def chart_inverse(q, chart: Chart) -> np.ndarray:
    """Local inverse of the KS projection with ``u4 = 0`` (PlusX) or ``u3 = 0``."""
    X, Y, Z = _vec(q, 3, "position")
    r = np.sqrt(X * X + Y * Y + Z * Z)
    if r == 0:
        raise CollisionError("cannot lift the collision point")
    if chart is Chart.PlusX:
        if Y == 0 and Z == 0 and X <= 0:
            raise ChartDomainError("PlusX chart excludes the half-line X <= 0, Y = Z = 0")
        h = np.sqrt(2.0 * (r + X))
        return np.array([np.sqrt(0.5 * (r + X)), Y / h, Z / h, 0.0])
    if chart is Chart.MinusX:
        if Y == 0 and Z == 0 and X >= 0:
            raise ChartDomainError("MinusX chart excludes the half-line X >= 0, Y = Z = 0")
        h = np.sqrt(2.0 * (r - X))
        return np.array([Y / h, np.sqrt(0.5 * (r - X)), 0.0, Z / h])
    raise ParameterError(f"unknown chart {chart!r}")


def momentum_lift(u, P) -> np.ndarray:
    """``U = 2 A(u)^T (P, 0)``."""
    return 2.0 * ks_matrix(u)[:3].T @ _vec(P, 3, "momentum")


def chart_lift(state, chart: Chart | None = None) -> KSState:
    s = np.asarray(state, dtype=float)
    q, P = s[:3], s[3:]
    if chart is None:
        chart = select_chart(q)
    u = chart_inverse(q, chart)
    return KSState(u, momentum_lift(u, P))


def phase_project(ks) -> PlanetoState:
    s = np.asarray(ks, dtype=float)
    u, U = s[:4], s[4:]
    rho = u @ u
    if rho == 0:
        raise CollisionError("u = 0 projects onto the collision point")
    P = (ks_matrix(u) @ U)[:3] / (2.0 * rho)
    return PlanetoState(ks_project(u), P)


def transition_angle(u_plus, u_minus) -> float:
    """Angle ``alpha`` with ``u_plus = S0_alpha u_minus`` (least squares on the fibre)."""
    u_plus = _vec(u_plus, 4, "u")
    u_minus = _vec(u_minus, 4, "u")
    quarter = s0_alpha(0.5 * np.pi) @ u_minus
    return float(np.arctan2(u_plus @ quarter, u_plus @ u_minus))


# ---------------------------------------------------------------- planar LC

def lc_matrix(u) -> np.ndarray:
    u1, u2 = _vec(u, 2, "u")
    return np.array([[u1, -u2], [u2, u1]])


def lc_project_position(u) -> np.ndarray:
    u1, u2 = _vec(u, 2, "u")
    return np.array([u1 * u1 - u2 * u2, 2.0 * u1 * u2])


def lc_lift(state) -> tuple[np.ndarray, np.ndarray]:
    """Planar ``(X, Y, P_X, P_Y)`` to Levi-Civita ``(u, U)`` on the principal branch."""
    X, Y, PX, PY = _vec(np.asarray(state, dtype=float), 4, "planar state")
    if X == 0 and Y == 0:
        raise CollisionError("cannot lift the collision point")
    z = np.sqrt(complex(X, Y))
    u = np.array([z.real, z.imag])
    return u, 2.0 * lc_matrix(u).T @ np.array([PX, PY])


def lc_project(u, U) -> np.ndarray:
    u = _vec(u, 2, "u")
    rho = u @ u
    if rho == 0:
        raise CollisionError("u = 0 projects onto the collision point")
    return np.concatenate([lc_project_position(u), lc_matrix(u) @ _vec(U, 2, "U") / (2.0 * rho)])


def rotation2(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])
