"""Polynomials in d variables, harmonic projection and the three inner products
on harmonic polynomials.

Throughout ``alpha = (d-2)/2``.  The twisted raising operator is

    P_mu f = 2 x_mu (E + alpha) f - |x|^2 d_mu f,

with E the Euler operator; K_mu = d_mu lowers, D = E + alpha is the grading
and J_{mu nu} = x_mu d_nu - x_nu d_mu rotates.  On harmonic polynomials of
degree m the Fisher product equals 2^m (alpha)_m times the H product.
"""
from __future__ import annotations

import math
import os
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from numbers import Number
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, NotHarmonic, RankDeficiency, UnsupportedDimension

BASIS_FORMAT_VERSION = 1
TAU_BASIS = 1e-12


# ------------------------------------------------------------ multi-indices


@lru_cache(maxsize=None)
def multi_indices(d: int, n: int) -> tuple:
    """All alpha in N^d with |alpha| = n, in ascending lexicographic order."""
    if d == 1:
        return ((n,),)
    out = []
    for a in range(n + 1):
        out.extend((a,) + rest for rest in multi_indices(d - 1, n - a))
    return tuple(out)


@lru_cache(maxsize=None)
def index_map(d: int, n: int) -> dict:
    return {a: i for i, a in enumerate(multi_indices(d, n))}


@lru_cache(maxsize=None)
def exponent_array(d: int, n: int) -> np.ndarray:
    return np.array(multi_indices(d, n), dtype=float).reshape(-1, d)


def mfact(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


@lru_cache(maxsize=None)
def log_mfact(d: int, n: int) -> np.ndarray:
    return np.array([sum(math.lgamma(a + 1) for a in al) for al in multi_indices(d, n)])


def pochhammer(a, n: int):
    """Rising factorial (a)_n; exact for Fraction/int input."""
    out = Fraction(1) if isinstance(a, (int, Fraction)) else 1.0
    for k in range(n):
        out *= a + k
    return out


def half_shift(d: int) -> Fraction:
    return Fraction(d - 2, 2)


def fisher_h_factor(d: int, m: int) -> Fraction:
    """Ratio of Fisher to H norms on degree-m harmonics: 2^m ((d-2)/2)_m."""
    return 2**m * pochhammer(half_shift(d), m)


def dim_harm(d: int, n: int) -> int:
    if n < 0:
        return 0
    if d == 2:
        return 1 if n == 0 else 2
    return math.comb(n + d - 1, d - 1) - (math.comb(n + d - 3, d - 1) if n >= 2 else 0)


# --------------------------------------------------------------------- Poly


def _is_zero(c) -> bool:
    return c == 0


class Poly:
    """Sparse polynomial: dict multi-index -> coefficient (Fraction or float)."""

    __slots__ = ("d", "coeffs")

    def __init__(self, d: int, coeffs: dict | None = None):
        self.d = d
        self.coeffs = {}
        if coeffs:
            for a, c in coeffs.items():
                if len(a) != d:
                    raise DimensionMismatch(f"multi-index {a} has length != {d}")
                if not _is_zero(c):
                    self.coeffs[tuple(a)] = c

    # constructors
    @classmethod
    def const(cls, c, d: int) -> "Poly":
        return cls(d, {(0,) * d: c})

    @classmethod
    def var(cls, mu: int, d: int, c=Fraction(1)) -> "Poly":
        a = [0] * d
        a[mu] = 1
        return cls(d, {tuple(a): c})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c=Fraction(1)) -> "Poly":
        return cls(len(alpha), {tuple(alpha): c})

    @classmethod
    def norm_sq(cls, d: int) -> "Poly":
        out = {}
        for mu in range(d):
            a = [0] * d
            a[mu] = 2
            out[tuple(a)] = Fraction(1)
        return cls(d, out)

    # structure
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coeffs), default=-1)

    def is_homogeneous(self) -> bool:
        return len({sum(a) for a in self.coeffs}) <= 1

    def homogeneous_parts(self) -> dict:
        parts: dict = {}
        for a, c in self.coeffs.items():
            parts.setdefault(sum(a), {})[a] = c
        return {n: Poly(self.d, cs) for n, cs in sorted(parts.items())}

    def _check(self, other: "Poly"):
        if self.d != other.d:
            raise DimensionMismatch(f"d={self.d} vs d={other.d}")

    # arithmetic
    def __add__(self, other):
        if isinstance(other, Number):
            other = Poly.const(other, self.d)
        self._check(other)
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0) + c
        return Poly(self.d, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.d, {a: -c for a, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Poly(self.d, {a: c * other for a, c in self.coeffs.items()})
        self._check(other)
        out: dict = {}
        for a, c in self.coeffs.items():
            for b, e in other.coeffs.items():
                k = tuple(x + y for x, y in zip(a, b))
                out[k] = out.get(k, 0) + c * e
        return Poly(self.d, out)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return Poly(self.d, {a: c / s for a, c in self.coeffs.items()})

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.d == other.d and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.d, frozenset(self.coeffs.items())))

    def __repr__(self):
        terms = sorted(self.coeffs.items())[:6]
        more = "" if len(self.coeffs) <= 6 else f" + ... ({len(self.coeffs)} terms)"
        return "Poly(" + " + ".join(f"{c}*x^{a}" for a, c in terms) + more + ")"

    # calculus
    def diff(self, mu: int) -> "Poly":
        out = {}
        for a, c in self.coeffs.items():
            if a[mu]:
                b = list(a)
                b[mu] -= 1
                out[tuple(b)] = c * a[mu]
        return Poly(self.d, out)

    def euler(self) -> "Poly":
        return Poly(self.d, {a: c * sum(a) for a, c in self.coeffs.items()})

    def laplacian(self) -> "Poly":
        out: dict = {}
        for a, c in self.coeffs.items():
            for mu in range(self.d):
                if a[mu] >= 2:
                    b = list(a)
                    b[mu] -= 2
                    b = tuple(b)
                    out[b] = out.get(b, 0) + c * a[mu] * (a[mu] - 1)
        return Poly(self.d, out)

    def evaluate(self, x):
        """Value at a point; exact when x and the coefficients are exact."""
        if len(x) != self.d:
            raise DimensionMismatch("point has wrong dimension")
        total = 0
        for a, c in self.coeffs.items():
            term = c
            for xi, ai in zip(x, a):
                if ai:
                    term = term * xi**ai
            total = total + term
        return total

    def substitute(self, polys: Sequence["Poly"]) -> "Poly":
        """f(q_1(x), ..., q_d(x)) for polynomials q_i."""
        if len(polys) != self.d:
            raise DimensionMismatch("need one polynomial per variable")
        dd = polys[0].d
        out = Poly(dd)
        for a, c in self.coeffs.items():
            term = Poly.const(c, dd)
            for q, ai in zip(polys, a):
                for _ in range(ai):
                    term = term * q
            out = out + term
        return out

    def to_float(self) -> "Poly":
        return Poly(self.d, {a: float(c) for a, c in self.coeffs.items()})

    def coeff_vector(self, n: int, normalized: bool = False) -> np.ndarray:
        """Float coefficients of the degree-n part in ``multi_indices`` order.

        ``normalized`` multiplies by sqrt(alpha!) so the Fisher product is the
        Euclidean dot product.
        """
        idx = index_map(self.d, n)
        v = np.zeros(len(idx))
        for a, c in self.coeffs.items():
            if sum(a) == n:
                v[idx[a]] = float(c)
        if normalized:
            v = v * np.exp(0.5 * log_mfact(self.d, n))
        return v

    @classmethod
    def from_vector(cls, d: int, n: int, v: np.ndarray, normalized: bool = False) -> "Poly":
        if normalized:
            v = v * np.exp(-0.5 * log_mfact(d, n))
        return cls(d, {a: float(c) for a, c in zip(multi_indices(d, n), v) if c != 0})

    # serialization
    def to_json(self) -> list:
        out = []
        for a, c in sorted(self.coeffs.items()):
            fr = Fraction(c)
            out.append([list(a), fr.numerator, fr.denominator])
        return out

    @classmethod
    def from_json(cls, d: int, data: list) -> "Poly":
        return cls(d, {tuple(a): Fraction(p, q) for a, p, q in data})


def laplacian(f: Poly) -> Poly:
    return f.laplacian()


def is_harmonic(f: Poly, tol: float = 0.0) -> bool:
    lap = f.laplacian()
    if tol == 0.0:
        return lap.is_zero()
    return all(abs(c) <= tol for c in lap.coeffs.values())


# --------------------------------------------------------- inner products


def fisher_inner(f: Poly, g: Poly):
    if f.d != g.d:
        raise DimensionMismatch(f"d={f.d} vs d={g.d}")
    small, big = (f, g) if len(f.coeffs) <= len(g.coeffs) else (g, f)
    total = 0
    for a, c in small.coeffs.items():
        e = big.coeffs.get(a)
        if e is not None:
            total = total + c * e * mfact(a)
    return total


def h_inner(f: Poly, g: Poly):
    """Inner product making distinct degrees orthogonal; needs harmonic input."""
    if f.d != g.d:
        raise DimensionMismatch(f"d={f.d} vs d={g.d}")
    exact = all(isinstance(c, (int, Fraction)) for c in f.coeffs.values()) and all(
        isinstance(c, (int, Fraction)) for c in g.coeffs.values()
    )
    tol = 0.0 if exact else 1e-9
    for p in (f, g):
        if not is_harmonic(p, tol * max([1.0] + [abs(float(c)) for c in p.coeffs.values()])):
            raise NotHarmonic("h_inner is only defined on harmonic polynomials")
    fp, gp = f.homogeneous_parts(), g.homogeneous_parts()
    total = Fraction(0) if exact else 0.0
    for n, fn in fp.items():
        if n in gp:
            fac = fisher_h_factor(f.d, n)
            total += fisher_inner(fn, gp[n]) / (fac if exact else float(fac))
    return total


# ---------------------------------------------------- twisted action


def apply_P(mu: int, f: Poly) -> Poly:
    """2 x_mu (E + alpha) f - |x|^2 d_mu f, with integer coefficients."""
    d = f.d
    out: dict = {}
    for a, c in f.coeffs.items():
        n = sum(a)
        b = list(a)
        b[mu] += 1
        b = tuple(b)
        out[b] = out.get(b, 0) + c * (2 * n + d - 2)
        if a[mu]:
            base = list(a)
            base[mu] -= 1
            w = c * a[mu]
            for nu in range(d):
                e = list(base)
                e[nu] += 2
                e = tuple(e)
                out[e] = out.get(e, 0) - w
    return Poly(d, out)


def apply_K(mu: int, f: Poly) -> Poly:
    return f.diff(mu)


def apply_D(f: Poly) -> Poly:
    al = half_shift(f.d)
    return Poly(f.d, {a: c * (sum(a) + al) for a, c in f.coeffs.items()})


def apply_J(mu: int, nu: int, f: Poly) -> Poly:
    return Poly.var(mu, f.d) * f.diff(nu) - Poly.var(nu, f.d) * f.diff(mu)


def act_twisted(gen, f: Poly, check: bool = False) -> Poly:
    """Apply one generator: ("P", mu), ("K", mu), ("D",) or ("J", mu, nu)."""
    if isinstance(gen, str):
        gen = (gen,)
    kind = gen[0]
    if kind == "P":
        if check and not is_harmonic(f):
            raise NotHarmonic("raising operator needs a harmonic argument")
        return apply_P(gen[1], f)
    if kind == "K":
        return apply_K(gen[1], f)
    if kind == "D":
        return apply_D(f)
    if kind == "J":
        return apply_J(gen[1], gen[2], f)
    raise ValueError(f"unknown generator {gen!r}")


@lru_cache(maxsize=None)
def raise_vacuum(alpha: tuple) -> Poly:
    """P^alpha . 1 (the raising operators commute on harmonics)."""
    d = len(alpha)
    if sum(alpha) == 0:
        return Poly.const(Fraction(1), d)
    mu = next(i for i, a in enumerate(alpha) if a)
    lower = list(alpha)
    lower[mu] -= 1
    return apply_P(mu, raise_vacuum(tuple(lower)))


def apply_poly_of_P(f: Poly) -> Poly:
    """f(P).1 = sum_alpha c_alpha P^alpha . 1."""
    out = Poly(f.d)
    for a, c in f.coeffs.items():
        out = out + raise_vacuum(a) * c
    return out


def project_harmonic(f: Poly) -> Poly:
    """Fisher-orthogonal projection onto harmonics, degree by degree."""
    out = Poly(f.d)
    for m, fm in f.homogeneous_parts().items():
        fac = fisher_h_factor(f.d, m)
        exact = all(isinstance(c, (int, Fraction)) for c in fm.coeffs.values())
        out = out + apply_poly_of_P(fm) * (1 / fac if exact else 1.0 / float(fac))
    return out


# ---------------------------------------------------------- Gegenbauer


def gegenbauer_coeffs(N: int, d: int) -> list:
    """Exact coefficients of C_N(t) (index k is the t^k coefficient)."""
    lam = half_shift(d)
    prev, cur = [Fraction(1)], [Fraction(0), 2 * lam]
    if N == 0:
        return prev
    for n in range(2, N + 1):
        nxt = [Fraction(0)] * (n + 1)
        for k, c in enumerate(cur):
            nxt[k + 1] += 2 * (n + lam - 1) * c / n
        for k, c in enumerate(prev):
            nxt[k] -= (n + 2 * lam - 2) * c / n
        prev, cur = cur, nxt
    return cur


def gegenbauer(N: int, t, d: int):
    """C_N(t) for the generating function (1 - 2rt + r^2)^{-(d-2)/2}."""
    lam = (d - 2) / 2 if not isinstance(t, Fraction) else half_shift(d)
    prev, cur = 1, 2 * lam * t
    if N == 0:
        return prev + 0 * t
    for n in range(2, N + 1):
        prev, cur = cur, (2 * t * (n + lam - 1) * cur - (n + 2 * lam - 2) * prev) / n
    return cur


def gegenbauer_at_one(N: int, d: int) -> Fraction:
    return Fraction(pochhammer(Fraction(d - 2), N), math.factorial(N))


def zonal_gegenbauer_poly(N: int, d: int, axis: int = 0) -> Poly:
    """|x|^N C_N(x_axis/|x|) expanded as a polynomial."""
    out = Poly(d)
    r2 = Poly.norm_sq(d)
    for k, c in enumerate(gegenbauer_coeffs(N, d)):
        if c == 0:
            continue
        a = [0] * d
        a[axis] = k
        term = Poly.monomial(a, c)
        for _ in range((N - k) // 2):
            term = term * r2
        out = out + term
    return out


def zonal(a: Sequence, N: int) -> Poly:
    """E_a^N = (a.P)^N . 1 / N!, the reproducing vector of degree N at a."""
    d = len(a)
    exact = all(isinstance(x, (int, Fraction)) for x in a)
    cur = Poly.const(Fraction(1) if exact else 1.0, d)
    for k in range(1, N + 1):
        nxt = Poly(d)
        for mu, am in enumerate(a):
            if am != 0:
                nxt = nxt + apply_P(mu, cur) * am
        cur = nxt / k
    return cur


# --------------------------------------------- rational forms p(x)/|x|^k


def radial_diff(p: Poly, k: int, mu: int) -> tuple[Poly, int]:
    """d_mu (p |x|^{-k}) = (|x|^2 d_mu p - k x_mu p) |x|^{-k-2}."""
    return Poly.norm_sq(p.d) * p.diff(mu) - Poly.var(mu, p.d) * p * k, k + 2


@lru_cache(maxsize=None)
def green_derivative(alpha: tuple) -> Poly:
    """Numerator q with d^alpha |x|^{-(d-2)} = q(x) |x|^{-(d-2)-2|alpha|}."""
    d = len(alpha)
    if sum(alpha) == 0:
        return Poly.const(Fraction(1), d)
    mu = next(i for i, a in enumerate(alpha) if a)
    lower = list(alpha)
    lower[mu] -= 1
    q, _ = radial_diff(green_derivative(tuple(lower)), d - 2 + 2 * (sum(alpha) - 1), mu)
    return q


def kelvin_dual(f: Poly) -> Poly:
    """|x|^{d-2+2m} f(-d) |x|^{-(d-2)} for homogeneous f of degree m."""
    if not f.is_homogeneous():
        raise ValueError("kelvin_dual needs a homogeneous polynomial")
    out = Poly(f.d)
    for a, c in f.coeffs.items():
        out = out + green_derivative(a) * (c * (-1) ** sum(a))
    return out


# -------------------------------------------------------- monomial operators


@lru_cache(maxsize=None)
def monomial_P(d: int, n: int, mu: int) -> sparse.csr_matrix:
    """Matrix of P_mu from degree n to n+1 in normalized coordinates."""
    src, dst = multi_indices(d, n), index_map(d, n + 1)
    lf0, lf1 = log_mfact(d, n), log_mfact(d, n + 1)
    rows, cols, vals = [], [], []
    for j, a in enumerate(src):
        b = list(a)
        b[mu] += 1
        i = dst[tuple(b)]
        rows.append(i)
        cols.append(j)
        vals.append((2 * n + d - 2) * math.exp(0.5 * (lf1[i] - lf0[j])))
        if a[mu]:
            for nu in range(d):
                e = list(a)
                e[mu] -= 1
                e[nu] += 2
                i = dst[tuple(e)]
                rows.append(i)
                cols.append(j)
                vals.append(-a[mu] * math.exp(0.5 * (lf1[i] - lf0[j])))
    M = sparse.coo_matrix((vals, (rows, cols)), shape=(len(dst), len(src)))
    return M.tocsr()


@lru_cache(maxsize=None)
def monomial_J(d: int, n: int, mu: int, nu: int) -> sparse.csr_matrix:
    """x_mu d_nu - x_nu d_mu on degree n, normalized coordinates."""
    mons, idx = multi_indices(d, n), index_map(d, n)
    lf = log_mfact(d, n)
    rows, cols, vals = [], [], []
    for j, a in enumerate(mons):
        for p, q, s in ((mu, nu, 1.0), (nu, mu, -1.0)):
            if a[q]:
                e = list(a)
                e[q] -= 1
                e[p] += 1
                i = idx[tuple(e)]
                rows.append(i)
                cols.append(j)
                vals.append(s * a[q] * math.exp(0.5 * (lf[i] - lf[j])))
    M = sparse.coo_matrix((vals, (rows, cols)), shape=(len(mons), len(mons)))
    return M.tocsr()


@lru_cache(maxsize=None)
def monomial_laplacian(d: int, n: int) -> sparse.csr_matrix:
    """Laplacian from degree n to n-2 in normalized coordinates."""
    src, dst = multi_indices(d, n), index_map(d, n - 2)
    lf0, lf1 = log_mfact(d, n), log_mfact(d, n - 2)
    rows, cols, vals = [], [], []
    for j, a in enumerate(src):
        for mu in range(d):
            if a[mu] >= 2:
                e = list(a)
                e[mu] -= 2
                i = dst[tuple(e)]
                rows.append(i)
                cols.append(j)
                vals.append(a[mu] * (a[mu] - 1) * math.exp(0.5 * (lf1[i] - lf0[j])))
    M = sparse.coo_matrix((vals, (rows, cols)), shape=(len(dst), len(src)))
    return M.tocsr()


# ------------------------------------------------------------------ bases


def seed_indices(d: int, n: int) -> list:
    """Multi-indices with first entry at most 1; they parametrize Harm_{d,n}."""
    return [a for a in multi_indices(d, n) if a[0] <= 1]


def _harmonic_frame(d: int, n: int) -> np.ndarray:
    """Raw coefficients of the harmonic extensions of the seed monomials.

    Column j is the unique harmonic polynomial whose part with alpha_1 <= 1
    is the j-th seed monomial; higher alpha_1 layers follow from Laplace's
    equation solved for the x_1^2 derivative.
    """
    mons = multi_indices(d, n)
    idx = index_map(d, n)
    seeds = seed_indices(d, n)
    F = np.zeros((len(mons), len(seeds)))
    for j, s in enumerate(seeds):
        F[idx[s], j] = 1.0
    for a in sorted(mons, key=lambda t: t[0]):
        if a[0] < 2:
            continue
        b = list(a)
        b[0] -= 2
        row = np.zeros(len(seeds))
        for mu in range(1, d):
            e = list(b)
            e[mu] += 2
            row -= (b[mu] + 2) * (b[mu] + 1) * F[idx[tuple(e)]]
        F[idx[a]] = row / ((b[0] + 2) * (b[0] + 1))
    return F


def _positive_qr(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q, R = np.linalg.qr(A)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, R * s[:, None]


def _degree_block(d: int, n: int) -> np.ndarray:
    """Fisher-orthonormal rows (normalized coordinates) spanning Harm_{d,n}.

    Equals Gram-Schmidt of the projections of the seed monomials taken in
    ascending lexicographic order.
    """
    if n == 0:
        return np.ones((1, 1))
    scale = np.exp(0.5 * log_mfact(d, n))
    F = _harmonic_frame(d, n) * scale[:, None]
    Q, _ = _positive_qr(F)
    idx = index_map(d, n)
    rows = [idx[s] for s in seed_indices(d, n)]
    # projections of the seeds, expressed in the frame Q
    B = Q[rows, :] * scale[rows][:, None]
    Q2, R2 = _positive_qr(B.T)
    if np.min(np.abs(np.diag(R2))) < 1e-13 * np.max(np.abs(np.diag(R2))):
        raise RankDeficiency(f"degree {n} seeds are numerically dependent")
    return (Q @ Q2).T


class GradedHarmonicBasis:
    """H-orthonormal harmonic basis up to degree N_max (float path).

    ``blocks[n]`` holds Fisher-unit rows in normalized coordinates; the H-unit
    basis polynomial is ``hscale[n]`` times that row.
    """

    def __init__(self, d: int, N_max: int, blocks: list):
        self.d = d
        self.N_max = N_max
        self.blocks = blocks
        self.hscale = np.array([math.sqrt(float(fisher_h_factor(d, n))) for n in range(N_max + 1)])
        self.dims = [dim_harm(d, n) for n in range(N_max + 1)]
        for n, B in enumerate(blocks):
            if B.shape != (self.dims[n], len(multi_indices(d, n))):
                raise RankDeficiency(f"degree {n} block has shape {B.shape}")
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def block_slice(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))

    def raw_coefficients(self, n: int) -> np.ndarray:
        """Monomial coefficients of the H-unit basis of degree n (rows)."""
        return self.blocks[n] * self.hscale[n] * np.exp(-0.5 * log_mfact(self.d, n))[None, :]

    def poly(self, n: int, l: int) -> Poly:
        return Poly.from_vector(self.d, n, self.raw_coefficients(n)[l])

    def polys(self, n: int) -> list:
        return [self.poly(n, l) for l in range(self.dims[n])]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Values of all basis polynomials at x (concatenated by degree)."""
        return self.evaluate_many(np.asarray(x, dtype=float)[None, :])[0]

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.size))
        for n in range(self.N_max + 1):
            vals = np.prod(X[:, None, :] ** exponent_array(self.d, n)[None, :, :], axis=2)
            vals *= np.exp(-0.5 * log_mfact(self.d, n))[None, :]
            out[:, self.block_slice(n)] = self.hscale[n] * (vals @ self.blocks[n].T)
        return out

    def gram_defect(self) -> float:
        return max(float(np.max(np.abs(B @ B.T - np.eye(B.shape[0])))) for B in self.blocks)

    def harmonic_defect(self) -> float:
        worst = 0.0
        for n in range(2, self.N_max + 1):
            L = monomial_laplacian(self.d, n)
            worst = max(worst, float(np.max(np.abs(L @ self.blocks[n].T))) / max(1.0, n * n))
        return worst


def _cache_path(d: int, N_max: int) -> str | None:
    root = os.environ.get("CONFDISK_CACHE")
    if not root:
        return None
    return os.path.join(root, f"harm_d{d}_N{N_max}_v{BASIS_FORMAT_VERSION}.npz")


_MEMO: dict = {}


def build_basis(d: int, N_max: int) -> GradedHarmonicBasis:
    """Deterministic orthonormal basis; memoized and optionally disk-cached."""
    if d < 3:
        raise UnsupportedDimension(f"d must be at least 3, got {d}")
    key = (d, N_max)
    if key in _MEMO:
        return _MEMO[key]
    for (dd, NN), b in _MEMO.items():
        if dd == d and NN >= N_max:
            out = GradedHarmonicBasis(d, N_max, b.blocks[: N_max + 1])
            _MEMO[key] = out
            return out
    path = _cache_path(d, N_max)
    blocks = None
    if path and os.path.exists(path):
        with np.load(path) as z:
            blocks = [z[f"b{n}"] for n in range(N_max + 1)]
    if blocks is None:
        blocks = [_degree_block(d, n) for n in range(N_max + 1)]
        if path:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            np.savez(path, **{f"b{n}": b for n, b in enumerate(blocks)})
    out = GradedHarmonicBasis(d, N_max, blocks)
    _MEMO[key] = out
    return out


def build_basis_exact(d: int, N_max: int) -> list:
    """Exact orthogonal (unnormalized) basis per degree with squared H-norms.

    Gram-Schmidt of P^alpha . 1 over all alpha in ascending lex order.
    Returns a list over degrees of lists of (Poly, Fraction).
    """
    if d < 3:
        raise UnsupportedDimension(f"d must be at least 3, got {d}")
    out = []
    for n in range(N_max + 1):
        basis: list = []
        for a in multi_indices(d, n):
            v = raise_vacuum(a)
            for u, nu in basis:
                v = v - u * (h_inner(u, v) / nu)
            if not v.is_zero():
                basis.append((v, h_inner(v, v)))
        if len(basis) != dim_harm(d, n):
            raise RankDeficiency(f"degree {n}: found {len(basis)} of {dim_harm(d, n)}")
        out.append(basis)
    return out
