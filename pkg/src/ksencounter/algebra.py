"""Dense truncated multivariate power series.

Coefficients are stored in a flat array indexed by graded-lexicographic rank:
monomials are sorted by total degree, and within a degree by descending
exponent tuple, so ``u1`` precedes ``u2`` and ``u1**2`` precedes ``u1*u2``.
All index tables for a given ``(nvars, max_degree)`` live in a cached
:class:`SeriesRing`; its kernels operate on raw coefficient arrays whose
leading axis is the coefficient index, so trailing batch axes (several
parameter values, complex-step columns) ride along for free.
:class:`MultiSeries` is the immutable user-facing value type.
"""

from __future__ import annotations

import functools
import itertools
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError

FLUSH = 1e-300


def _monomials(nvars: int, max_degree: int) -> np.ndarray:
    rows = []
    for d in range(max_degree + 1):
        band = [
            e
            for e in itertools.product(range(d + 1), repeat=nvars)
            if sum(e) == d
        ]
        band.sort(reverse=True)
        rows.extend(band)
    return np.array(rows, dtype=np.int64).reshape(-1, nvars)


class SeriesRing:
    """Index tables and array kernels for series in ``nvars`` variables."""

    def __init__(self, nvars: int, max_degree: int):
        if nvars < 1 or max_degree < 0:
            raise DimensionError(f"bad ring shape nvars={nvars}, N={max_degree}")
        self.nvars = nvars
        self.max_degree = N = max_degree
        self.exps = _monomials(nvars, N)
        self.deg = self.exps.sum(axis=1)
        self.size = len(self.exps)
        counts = np.bincount(self.deg, minlength=N + 1)
        self.band_start = np.concatenate([[0], np.cumsum(counts)])

        base = N + 1
        self._radix = base ** np.arange(nvars, dtype=np.int64)
        self._keys = self.exps @ self._radix
        self._lookup = np.full(base**nvars, -1, dtype=np.int64)
        self._lookup[self._keys] = np.arange(self.size)

        self.up = []
        self.down = []
        for v in range(nvars):
            e = np.zeros(nvars, dtype=np.int64)
            e[v] = 1
            self.up.append(self._index_of(self.exps + e))
            self.down.append(self._index_of(self.exps - e))
        self._build_pairs()
        self._subst_tables = None

    def _index_of(self, exps: np.ndarray) -> np.ndarray:
        ok = (exps >= 0).all(axis=1) & (exps.sum(axis=1) <= self.max_degree)
        out = np.full(len(exps), -1, dtype=np.int64)
        out[ok] = self._lookup[exps[ok] @ self._radix]
        return out

    def index(self, exponent: Sequence[int]) -> int:
        exponent = tuple(int(x) for x in exponent)
        if len(exponent) != self.nvars or min(exponent) < 0:
            raise DimensionError(f"bad exponent {exponent} for {self.nvars} variables")
        if sum(exponent) > self.max_degree:
            raise DimensionError(f"exponent {exponent} exceeds degree {self.max_degree}")
        return int(self._lookup[np.dot(exponent, self._radix)])

    def band(self, d: int) -> slice:
        return slice(int(self.band_start[d]), int(self.band_start[d + 1]))

    def _build_pairs(self) -> None:
        N = self.max_degree
        pi, pj, pk = [], [], []
        for di in range(N + 1):
            ii = np.arange(self.band_start[di], self.band_start[di + 1])
            jj = np.arange(self.band_start[N - di + 1])
            kk = self._lookup[self._keys[ii][:, None] + self._keys[jj][None, :]]
            pi.append(np.repeat(ii, len(jj)))
            pj.append(np.tile(jj, len(ii)))
            pk.append(kk.ravel())
        pi = np.concatenate(pi)
        pj = np.concatenate(pj)
        pk = np.concatenate(pk)
        order = np.lexsort((pj, pi, pk))
        self.pi, self.pj, self.pk = pi[order], pj[order], pk[order]
        self.pair_deg_i = self.deg[self.pi]
        self.pair_deg_j = self.deg[self.pj]
        starts = np.searchsorted(self.pk, np.arange(self.size))
        self.pair_starts = starts
        self.pair_band = [
            (int(starts[self.band_start[d]]),
             int(starts[self.band_start[d + 1]]) if d < N else len(self.pk))
            for d in range(N + 1)
        ]
        self._band_local_starts = [
            starts[self.band_start[d]:self.band_start[d + 1]] - self.pair_band[d][0]
            for d in range(N + 1)
        ]

    # -- kernels on raw coefficient arrays (leading axis = coefficient) --

    def zeros(self, batch: tuple = (), dtype=float) -> np.ndarray:
        return np.zeros((self.size,) + tuple(batch), dtype=dtype)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Cauchy product truncated at the ring degree."""
        prod = a[self.pi] * b[self.pj]
        return np.add.reduceat(prod, self.pair_starts, axis=0)

    def mul_band(self, a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
        """Degree-``d`` homogeneous part of ``a*b`` (band-local array)."""
        lo, hi = self.pair_band[d]
        prod = a[self.pi[lo:hi]] * b[self.pj[lo:hi]]
        return np.add.reduceat(prod, self._band_local_starts[d], axis=0)

    def pow_band(self, a: np.ndarray, g: np.ndarray, r: float, d: int) -> np.ndarray:
        """Band ``d`` of ``a**r`` given bands ``< d`` already stored in ``g``.

        Uses ``a * D(g) = r * g * D(a)`` with ``D`` the Euler degree operator.
        """
        lo, hi = self.pair_band[d]
        di = self.pair_deg_i[lo:hi]
        dj = self.pair_deg_j[lo:hi]
        w = np.where(di > 0, r * di - dj, 0.0)
        w = w.reshape(w.shape + (1,) * (a.ndim - 1))
        terms = w * a[self.pi[lo:hi]] * g[self.pj[lo:hi]]
        return np.add.reduceat(terms, self._band_local_starts[d], axis=0) / (d * a[0])

    def pow(self, a: np.ndarray, r: float) -> np.ndarray:
        g = np.zeros_like(a, dtype=np.result_type(a, float))
        g[0] = a[0] ** r
        for d in range(1, self.max_degree + 1):
            g[self.band(d)] = self.pow_band(a, g, r, d)
        return g

    def deriv(self, a: np.ndarray, v: int) -> np.ndarray:
        out = np.zeros_like(a)
        src = np.nonzero(self.exps[:, v] > 0)[0]
        fac = self.exps[src, v].reshape((-1,) + (1,) * (a.ndim - 1))
        out[self.down[v][src]] = fac * a[src]
        return out

    def integ(self, a: np.ndarray, v: int) -> tuple[np.ndarray, bool]:
        """Antiderivative in ``u_v`` vanishing on ``u_v = 0``; flag = lost content."""
        out = np.zeros_like(a, dtype=np.result_type(a, float))
        tgt = self.up[v]
        ok = tgt >= 0
        fac = (1.0 / (self.exps[ok, v] + 1)).reshape((-1,) + (1,) * (a.ndim - 1))
        out[tgt[ok]] = a[ok] * fac
        lost = bool(np.any(a[~ok] != 0))
        return out, lost

    def mul_var(self, a: np.ndarray, v: int) -> np.ndarray:
        """Multiply by the single variable ``u_v`` (a shift)."""
        out = np.zeros_like(a)
        tgt = self.up[v]
        ok = tgt >= 0
        out[tgt[ok]] = a[ok]
        return out

    def variable(self, v: int) -> np.ndarray:
        out = self.zeros()
        out[1 + v] = 1.0
        return out

    def monomial_values(self, p: np.ndarray) -> np.ndarray:
        """Values of every monomial at ``p`` (shape ``(nvars,)+batch``)."""
        p = np.asarray(p)
        powers = p[:, None] ** np.arange(self.max_degree + 1).reshape(
            (1, -1) + (1,) * (p.ndim - 1))
        vals = powers[0][self.exps[:, 0]]
        for v in range(1, self.nvars):
            vals = vals * powers[v][self.exps[:, v]]
        return vals

    def evaluate(self, a: np.ndarray, p: np.ndarray, vals=None):
        if vals is None:
            vals = self.monomial_values(p)
        return np.sum(a * vals, axis=0)

    def gradient(self, a: np.ndarray, p: np.ndarray, vals=None) -> np.ndarray:
        """Gradient at ``p``; result has shape ``(nvars,)+batch``."""
        if vals is None:
            vals = self.monomial_values(p)
        out = []
        for v in range(self.nvars):
            src = self._grad_src(v)
            fac = self.exps[src, v].reshape((-1,) + (1,) * (a.ndim - 1))
            out.append(np.sum(fac * a[src] * vals[self.down[v][src]], axis=0))
        return np.array(out)

    @functools.lru_cache(maxsize=None)
    def _grad_src(self, v: int) -> np.ndarray:
        return np.nonzero(self.exps[:, v] > 0)[0]

    def substitution_matrices(self, L: np.ndarray) -> list[np.ndarray]:
        """Per-band matrices of the linear change ``u_tilde = L @ u``."""
        if self._subst_tables is None:
            tables = []
            for d in range(1, self.max_degree + 1):
                idx = np.arange(self.band_start[d], self.band_start[d + 1])
                e = self.exps[idx]
                k = np.argmax(e > 0, axis=1)
                parent = self.down_many(idx, k) - self.band_start[d - 1]
                prev = np.arange(self.band_start[d - 1], self.band_start[d])
                ups = [self.up[j][prev] - self.band_start[d] for j in range(self.nvars)]
                tables.append((k, parent, ups))
            self._subst_tables = tables
        dtype = np.result_type(L, float)
        mats = [np.ones((1, 1), dtype=dtype)]
        for d, (k, parent, ups) in enumerate(self._subst_tables, start=1):
            prev = mats[-1]
            n_d = int(self.band_start[d + 1] - self.band_start[d])
            T = np.zeros((n_d, len(parent)), dtype=dtype)
            for j in range(self.nvars):
                G = np.zeros((n_d, prev.shape[1]), dtype=dtype)
                G[ups[j], :] = prev
                T += G[:, parent] * L[k, j][None, :]
            mats.append(T)
        return mats

    def down_many(self, idx: np.ndarray, var: np.ndarray) -> np.ndarray:
        return np.array([self.down[v][i] for i, v in zip(idx, var)], dtype=np.int64)

    def substitute(self, a: np.ndarray, L: np.ndarray) -> np.ndarray:
        mats = self.substitution_matrices(L)
        out = np.zeros_like(a, dtype=np.result_type(a, L, float))
        for d, T in enumerate(mats):
            sl = self.band(d)
            out[sl] = T @ a[sl]
        return out


@functools.lru_cache(maxsize=None)
def get_ring(nvars: int, max_degree: int) -> SeriesRing:
    return SeriesRing(nvars, max_degree)


class MultiSeries:
    """Immutable truncated power series in 2 or 4 real variables.

    Coefficients may be complex; this is only used internally for
    complex-step parameter derivatives.
    """

    __slots__ = ("nvars", "max_degree", "coeffs", "truncated")

    def __init__(self, nvars: int, max_degree: int, coeffs=None, truncated: bool = False):
        if nvars not in (2, 4):
            raise DimensionError(f"nvars must be 2 or 4, got {nvars}")
        ring = get_ring(nvars, max_degree)
        if coeffs is None:
            arr = ring.zeros()
        else:
            arr = np.array(coeffs, copy=True)
            if not np.iscomplexobj(arr):
                arr = arr.astype(float)
            if arr.shape != (ring.size,):
                raise DimensionError(
                    f"expected {ring.size} coefficients, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("series coefficients must be finite")
        arr[np.abs(arr) < FLUSH] = 0
        arr.setflags(write=False)
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "max_degree", max_degree)
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "truncated", bool(truncated))

    def __setattr__(self, name, value):
        raise AttributeError("MultiSeries is immutable")

    @property
    def ring(self) -> SeriesRing:
        return get_ring(self.nvars, self.max_degree)

    # -- constructors --

    @classmethod
    def constant(cls, nvars: int, max_degree: int, value: float) -> "MultiSeries":
        c = get_ring(nvars, max_degree).zeros()
        c[0] = value
        return cls(nvars, max_degree, c)

    @classmethod
    def variable(cls, nvars: int, max_degree: int, v: int) -> "MultiSeries":
        if max_degree < 1:
            return cls(nvars, max_degree)
        return cls(nvars, max_degree, get_ring(nvars, max_degree).variable(v))

    @classmethod
    def from_dict(cls, nvars: int, max_degree: int,
                  terms: Mapping[Sequence[int], float]) -> "MultiSeries":
        ring = get_ring(nvars, max_degree)
        c = ring.zeros(dtype=complex if any(np.iscomplexobj(x) for x in terms.values()) else float)
        for exp, val in terms.items():
            if sum(exp) <= max_degree:
                c[ring.index(exp)] += val
        return cls(nvars, max_degree, c)

    def to_dict(self) -> dict[tuple[int, ...], float]:
        nz = np.nonzero(self.coeffs)[0]
        return {tuple(int(x) for x in self.ring.exps[i]): self.coeffs[i] for i in nz}

    def coefficient(self, exponent: Sequence[int]) -> float:
        if sum(exponent) > self.max_degree:
            return 0.0
        return self.coeffs[self.ring.index(exponent)]

    def homogeneous_part(self, d: int) -> "MultiSeries":
        c = np.zeros_like(self.coeffs)
        if d <= self.max_degree:
            sl = self.ring.band(d)
            c[sl] = self.coeffs[sl]
        return MultiSeries(self.nvars, self.max_degree, c)

    # -- arithmetic --

    def _check(self, other: "MultiSeries") -> None:
        if not isinstance(other, MultiSeries):
            raise TypeError(f"expected MultiSeries, got {type(other).__name__}")
        if other.nvars != self.nvars or other.max_degree != self.max_degree:
            raise DimensionError(
                f"series shapes differ: ({self.nvars}, {self.max_degree}) vs "
                f"({other.nvars}, {other.max_degree})")

    def _new(self, coeffs, truncated=None) -> "MultiSeries":
        return MultiSeries(self.nvars, self.max_degree, coeffs,
                           self.truncated if truncated is None else truncated)

    def __add__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            c = self.coeffs.copy()
            c[0] = c[0] + other
            return self._new(c)
        self._check(other)
        return self._new(self.coeffs + other.coeffs, self.truncated or other.truncated)

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self._new(self.coeffs * other)
        self._check(other)
        return self._new(self.ring.mul(self.coeffs, other.coeffs),
                         self.truncated or other.truncated)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float, complex, np.number)):
            return self * other ** -1
        return self._new(self.coeffs / other)

    def __pow__(self, r):
        return pow_real(self, r)

    def __call__(self, point):
        return evaluate(self, point)

    def __eq__(self, other):
        return (isinstance(other, MultiSeries)
                and other.nvars == self.nvars
                and other.max_degree == self.max_degree
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def __repr__(self):
        terms = self.to_dict()
        shown = ", ".join(f"{k}: {v:.6g}" for k, v in list(terms.items())[:6])
        more = " ..." if len(terms) > 6 else ""
        return f"MultiSeries(nvars={self.nvars}, N={self.max_degree}, {{{shown}{more}}})"

    # -- calculus --

    def partial(self, v: int) -> "MultiSeries":
        return partial(self, v)

    def antiderivative(self, v: int) -> "MultiSeries":
        return antiderivative(self, v)

    def linear_substitute(self, M, scale: float = 1.0) -> "MultiSeries":
        return linear_substitute(self, M, scale)

    @property
    def real(self) -> "MultiSeries":
        return self._new(self.coeffs.real)

    @property
    def imag(self) -> "MultiSeries":
        return self._new(self.coeffs.imag)

    def max_abs(self, upto: int | None = None) -> float:
        c = self.coeffs
        if upto is not None:
            c = c[: self.ring.band_start[min(upto, self.max_degree) + 1]]
        return float(np.max(np.abs(c))) if len(c) else 0.0


def arith(a: MultiSeries, b: MultiSeries, op: str = "add", scale: float = 1.0) -> MultiSeries:
    """``scale * (a op b)`` with ``op`` one of ``add``, ``sub``, ``mul``."""
    a._check(b)
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    else:
        raise ValueError(f"unknown op {op!r}")
    return out * scale if scale != 1.0 else out


def pow_real(a: MultiSeries, r: float) -> MultiSeries:
    """``a**r`` for real ``r``; requires a positive constant term."""
    a0 = a.coeffs[0]
    if np.iscomplexobj(a0):
        ok = a0.real > 0
    else:
        ok = a0 > 0
    if not ok:
        raise DomainError(f"power of a series needs a positive constant term, got {a0}")
    return a._new(a.ring.pow(a.coeffs, r))


def partial(a: MultiSeries, v: int) -> MultiSeries:
    if not 0 <= v < a.nvars:
        raise DimensionError(f"variable index {v} out of range")
    return a._new(a.ring.deriv(a.coeffs, v))


def antiderivative(a: MultiSeries, v: int) -> MultiSeries:
    if not 0 <= v < a.nvars:
        raise DimensionError(f"variable index {v} out of range")
    c, lost = a.ring.integ(a.coeffs, v)
    return a._new(c, a.truncated or lost)


def evaluate(a: MultiSeries, point) -> float:
    p = np.asarray(point)
    if p.shape != (a.nvars,):
        raise DimensionError(f"point must have length {a.nvars}")
    return a.ring.evaluate(a.coeffs, p)[()]


eval_series = evaluate


def gradient(a: MultiSeries, point) -> np.ndarray:
    p = np.asarray(point)
    if p.shape != (a.nvars,):
        raise DimensionError(f"point must have length {a.nvars}")
    return a.ring.gradient(a.coeffs, p)


def linear_substitute(a: MultiSeries, M, scale: float = 1.0) -> MultiSeries:
    """Series of ``u -> a(scale * M.T @ u)``."""
    M = np.asarray(M)
    if M.shape != (a.nvars, a.nvars):
        raise DimensionError(f"substitution matrix must be {a.nvars}x{a.nvars}")
    L = scale * M.T
    return a._new(a.ring.substitute(a.coeffs, L))
