"""Wick-contraction bilinear forms on the harmonic space.

For two disjoint balls B_r(a), B_s(b) inside the unit ball the contraction
pairs raised monomials through derivatives of the Green function:

    C(P^beta.1, P^gamma.1) = r^{|beta|+alpha} s^{|gamma|+alpha}
                             d_x^beta d_y^gamma |x-y|^{-(d-2)} at (a, b).

Two independent routes are provided.  ``contraction_green`` differentiates
the Green function symbolically.  ``contraction_core`` rewrites the pairing of
harmonics f, g of degrees n, m as

    sigma1^{n+alpha} sigma2^{m+alpha} (f(-P) g(P).1)(u),  u = (a-b)/|a-b|,

which only needs the raising operators and the reproducing vector E_u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import harmonic as hm
from .errors import GeometricOverlap, NotInS
from .mobius import MobiusMatrix, is_CE_config, translated_dilation_parts
from .rkhs import Truncation, op_rho


@dataclass
class ContractionMatrix:
    """Matrix c[(n,i),(m,j)] = C(Y_{n,i}, Y_{m,j}) on a truncation."""

    matrix: np.ndarray
    trunc: Truncation
    sigma1: float
    sigma2: float
    provenance: dict = field(default_factory=dict)

    def block(self, n: int, m: int) -> np.ndarray:
        return self.matrix[self.trunc.block(n), self.trunc.block(m)]

    def pair(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(f @ self.matrix @ g)

    @property
    def T(self) -> "ContractionMatrix":
        return ContractionMatrix(self.matrix.T, self.trunc, self.sigma2, self.sigma1,
                                 dict(self.provenance, transposed=True))


def separations(a, r, b, s) -> tuple[float, float]:
    dist = float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))
    if dist == 0.0:
        raise GeometricOverlap("ball centres coincide")
    return r / dist, s / dist


def _check_geometry(a, r, b, s, allow_tangent: bool = False) -> tuple[float, float]:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if r <= 0 or s <= 0:
        raise GeometricOverlap("radii must be positive")
    if np.linalg.norm(a) + r > 1 + 1e-12 or np.linalg.norm(b) + s > 1 + 1e-12:
        raise GeometricOverlap("balls must lie inside the unit ball")
    s1, s2 = separations(a, r, b, s)
    if s1 + s2 > 1 or (s1 + s2 == 1 and not allow_tangent):
        raise GeometricOverlap(f"closures meet: sigma1+sigma2 = {s1 + s2}")
    return s1, s2


# ----------------------------------------------------------- Green route


def contraction_green(a, r, b, s, beta: Sequence[int], gamma: Sequence[int]) -> float:
    """r^{|beta|+alpha} s^{|gamma|+alpha} d_x^beta d_y^gamma |x-y|^{2-d} at (a,b)."""
    _check_geometry(a, r, b, s)
    return _green_value(np.asarray(a, float) - np.asarray(b, float), r, s, tuple(beta), tuple(gamma))


def _green_value(w: np.ndarray, r: float, s: float, beta: tuple, gamma: tuple) -> float:
    d = len(beta)
    al = (d - 2) / 2
    delta = tuple(x + y for x, y in zip(beta, gamma))
    k = sum(delta)
    q = hm.green_derivative(delta).to_float().evaluate(w)
    val = q / float(np.linalg.norm(w)) ** (d - 2 + 2 * k)
    return r ** (sum(beta) + al) * s ** (sum(gamma) + al) * (-1) ** sum(gamma) * val


def contraction_green_matrix(a, r, b, s, t: Truncation, max_total: int) -> np.ndarray:
    """Entries with n + m <= max_total from the Green route (others left 0)."""
    s1, s2 = _check_geometry(a, r, b, s)
    w = np.asarray(a, float) - np.asarray(b, float)
    d = t.d
    out = np.zeros((t.size, t.size))
    for n in range(min(max_total, t.N_max) + 1):
        Yn = t.basis.raw_coefficients(n)
        mons_n = hm.multi_indices(d, n)
        for m in range(min(max_total - n, t.N_max) + 1):
            Ym = t.basis.raw_coefficients(m)
            mons_m = hm.multi_indices(d, m)
            G = np.array([[_green_value(w, r, s, be, ga) for ga in mons_m] for be in mons_n])
            fac = float(hm.fisher_h_factor(d, n) * hm.fisher_h_factor(d, m))
            out[t.block(n), t.block(m)] = Yn @ G @ Ym.T / fac
    return out


# ------------------------------------------------------------ core route


def _codes(d: int, n: int, base: int) -> np.ndarray:
    E = np.array(hm.multi_indices(d, n), dtype=np.int64).reshape(-1, d)
    w = base ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return E @ w


def zonal_normalized(u: np.ndarray, K: int) -> list:
    """Normalized coefficient vectors of E_u^k for k <= K, via (u.P)^k.1/k!."""
    d = u.size
    out = [np.ones(1)]
    for k in range(1, K + 1):
        nxt = np.zeros(len(hm.multi_indices(d, k)))
        for mu in range(d):
            if u[mu] != 0.0:
                nxt += u[mu] * (hm.monomial_P(d, k - 1, mu) @ out[-1])
        out.append(nxt / k)
    return out


def pairing_kernel(d: int, n: int, m: int, e_hat: np.ndarray, base: int) -> np.ndarray:
    """T[beta, gamma] = e_hat[beta+gamma] sqrt((beta+gamma)!/(beta! gamma!))."""
    cn, cm, ck = _codes(d, n, base), _codes(d, m, base), _codes(d, n + m, base)
    pos = np.searchsorted(ck, cn[:, None] + cm[None, :])
    lf = hm.log_mfact(d, n + m)[pos] - hm.log_mfact(d, n)[:, None] - hm.log_mfact(d, m)[None, :]
    return e_hat[pos] * np.exp(0.5 * lf)


def contraction_core(a, r, b, s, t: Truncation, allow_tangent: bool = False) -> ContractionMatrix:
    s1, s2 = _check_geometry(a, r, b, s, allow_tangent)
    w = np.asarray(a, float) - np.asarray(b, float)
    u = w / np.linalg.norm(w)
    C = core_from_sigmas(s1, s2, u, t)
    return ContractionMatrix(C, t, s1, s2, {"a": list(map(float, a)), "r": r, "b": list(map(float, b)), "s": s})


def core_from_sigmas(s1: float, s2: float, u: np.ndarray, t: Truncation) -> np.ndarray:
    d, N = t.d, t.N_max
    al = (d - 2) / 2
    e_hat = zonal_normalized(np.asarray(u, float), 2 * N)
    base = 2 * N + 1
    F = [math.sqrt(float(hm.fisher_h_factor(d, n))) for n in range(N + 1)]
    out = np.zeros((t.size, t.size))
    for n in range(N + 1):
        Un = t.basis.blocks[n]
        for m in range(N + 1):
            T = pairing_kernel(d, n, m, e_hat[n + m], base)
            scal = (-1) ** n * s1 ** (n + al) * s2 ** (m + al) / (F[n] * F[m])
            out[t.block(n), t.block(m)] = scal * (Un @ T @ t.basis.blocks[m].T)
    return out


def contraction_general(g1: MobiusMatrix, g2: MobiusMatrix, t: Truncation) -> ContractionMatrix:
    """C_{g1,g2} = C_core(a1,r1;a2,r2) o (rho(h1) x rho(h2)) with g_i = T_{a_i} r_i^D h_i."""
    try:
        cfg = is_CE_config([g1, g2])
    except NotInS:
        raise
    if not cfg.strict:
        raise GeometricOverlap("closures of the two image balls are not disjoint")
    a1, r1, h1 = translated_dilation_parts(g1)
    a2, r2, h2 = translated_dilation_parts(g2)
    core = contraction_core(a1, r1, a2, r2, t)
    M = core.matrix
    M = op_rho(h1, t).T @ M @ op_rho(h2, t)
    return ContractionMatrix(M, t, core.sigma1, core.sigma2,
                             dict(core.provenance, general=True))


# --------------------------------------------------------------- bounds


def _log_poch(a: float, n: int) -> float:
    return math.lgamma(a + n) - math.lgamma(a)


def q_factor(n: int, m: int, d: int) -> float:
    """sqrt((d-2)A_{d,k}/(2k+d-2)) sqrt((alpha)_k/((alpha)_n(alpha)_m) binom(k,n)), k = n+m."""
    k = n + m
    al = (d - 2) / 2
    log_ratio = _log_poch(al, k) - _log_poch(al, n) - _log_poch(al, m)
    log_binom = math.lgamma(k + 1) - math.lgamma(n + 1) - math.lgamma(m + 1)
    sphere = (d - 2) * hm.dim_harm(d, k) / (2 * k + d - 2)
    return math.sqrt(sphere) * math.exp(0.5 * (log_ratio + log_binom))


def entry_bound(n: int, m: int, s1: float, s2: float, d: int) -> float:
    return q_factor(n, m, d) * math.comb(n + m, n) * s1**n * s2**m


def max_entry_ratio(C: ContractionMatrix) -> float:
    t = C.trunc
    worst = 0.0
    for n in range(t.N_max + 1):
        for m in range(t.N_max + 1):
            blk = np.max(np.abs(C.block(n, m)))
            worst = max(worst, blk / entry_bound(n, m, C.sigma1, C.sigma2, t.d))
    return worst


def hs_norm(C) -> float:
    M = C.matrix if isinstance(C, ContractionMatrix) else np.asarray(C)
    return float(np.linalg.norm(M))


def operator_norm(C) -> float:
    M = C.matrix if isinstance(C, ContractionMatrix) else np.asarray(C)
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def q_of_total(N: int, d: int) -> float:
    return max(q_factor(n, N - n, d) for n in range(N + 1))


def hs_upper_bound(sigma: float, N_max: int, d: int) -> float:
    """Square of the termwise bound, summed over the truncation's total degrees."""
    total = 0.0
    for N in range(2 * N_max + 1):
        conv = sum(hm.dim_harm(d, k) * hm.dim_harm(d, N - k) for k in range(N + 1))
        total += sigma ** (2 * N) * q_of_total(N, d) ** 2 * conv
    return total


def block_hs_sq(n: int, m: int, s1: float, s2: float, d: int) -> float:
    """Closed form of the squared Frobenius norm of the (n, m) block.

    Summing the squared entries over both orthonormal bases turns the
    pairing into a reproducing-kernel evaluation on the sphere, leaving
    sigma1^{2(n+alpha)} sigma2^{2(m+alpha)} times q_factor(n, m)^2.
    """
    al = (d - 2) / 2
    return s1 ** (2 * (n + al)) * s2 ** (2 * (m + al)) * q_factor(n, m, d) ** 2


def hs_norm_closed(s1: float, s2: float, N: int, d: int) -> float:
    return math.sqrt(math.fsum(block_hs_sq(n, m, s1, s2, d) for n in range(N + 1) for m in range(N + 1)))


def max_entry_ratio_closed(s1: float, s2: float, N: int, d: int) -> float:
    """Upper estimate of max |c|/entry_bound using block Frobenius norms."""
    return max(math.sqrt(block_hs_sq(n, m, s1, s2, d)) / entry_bound(n, m, s1, s2, d)
               for n in range(N + 1) for m in range(N + 1))


# ------------------------------------------------- unboundedness probe


def lower_bound_analytic(sigma: float, N: int, d: int) -> float:
    if d == 3:
        return math.sqrt(0.5 * math.fsum(sigma ** (2 * k) / (2 * k + 1) for k in range(N + 1)))
    return math.sqrt(math.fsum(sigma ** (2 * k) / (k + 1) for k in range(N + 1)))


def a_closed(n: int, m: int, s1: float, s2: float, d: int) -> float:
    """Pairing of the normalized zbar^n and zbar^m harmonics (z = x1 + i x2)."""
    al = (d - 2) / 2
    lg = _log_poch(al, n + m) - 0.5 * (math.lgamma(n + 1) + math.lgamma(m + 1) + _log_poch(al, n) + _log_poch(al, m))
    return (-1) ** n * (s1 * s2) ** al * math.exp(lg) * s1**n * s2**m


def a_matrix_closed(s1: float, s2: float, N: int, d: int) -> np.ndarray:
    return np.array([[a_closed(n, m, s1, s2, d) for m in range(N + 1)] for n in range(N + 1)])


def zbar_power(n: int, d: int) -> tuple:
    """Real and imaginary parts of (x1 - i x2)^n as exact polynomials."""
    re, im = hm.Poly(d), hm.Poly(d)
    for k in range(n + 1):
        alpha = [0] * d
        alpha[0], alpha[1] = n - k, k
        c = Fraction(math.comb(n, k))
        # (-i)^k cycles through 1, -i, -1, i
        ph = k % 4
        if ph == 0:
            re = re + hm.Poly.monomial(alpha, c)
        elif ph == 1:
            im = im - hm.Poly.monomial(alpha, c)
        elif ph == 2:
            re = re - hm.Poly.monomial(alpha, c)
        else:
            im = im + hm.Poly.monomial(alpha, c)
    return re, im


def zbar_coordinates(n: int, t: Truncation) -> np.ndarray:
    """Complex coordinates of v_n = sqrt((alpha)_n/n!) zbar^n in the basis."""
    d = t.d
    re, im = zbar_power(n, d)
    U = t.basis.blocks[n]
    h = t.basis.hscale[n]
    norm = math.sqrt(float(hm.pochhammer(hm.half_shift(d), n)) / math.factorial(n))
    v = np.zeros(t.size, dtype=complex)
    v[t.block(n)] = norm * (U @ re.coeff_vector(n, True) + 1j * (U @ im.coeff_vector(n, True))) / h
    return v


def a_matrix_from_core(C: ContractionMatrix, N: int) -> np.ndarray:
    """Complex bilinear pairings C(v_n, v_m), n, m <= N, through the matrix."""
    V = np.array([zbar_coordinates(n, C.trunc) for n in range(N + 1)])
    return V @ C.matrix @ V.T


@dataclass(frozen=True)
class LowerBoundProfile:
    analytic: float
    empirical: float
    scaled_analytic: float


def lower_bound_profile(sigma: float, N: int, d: int) -> LowerBoundProfile:
    """Analytic partial-sum bound and the Frobenius norm of the A_{n,m} block.

    The geometry is the symmetric one, sigma1 = sigma2 = sigma/2.
    ``scaled_analytic`` carries the (sigma1 sigma2)^alpha factor that the
    termwise estimate actually yields.
    """
    s1 = s2 = sigma / 2
    A = a_matrix_closed(s1, s2, N, d)
    an = lower_bound_analytic(sigma, N, d)
    return LowerBoundProfile(an, float(np.linalg.norm(A)), an * (s1 * s2) ** ((d - 2) / 2))


def symmetric_geometry(sigma: float, d: int) -> tuple:
    """Balls of radius sigma/2 centred at +-e1/2; tangent at the origin when sigma = 1."""
    e1 = np.zeros(d)
    e1[0] = 0.5
    return e1, sigma / 2, -e1, sigma / 2


def boundedness_sweep(sigmas: Iterable[float], Ns: Iterable[int], d: int) -> list:
    """Rows (d, sigma, N, hs_norm, lower_bound, max_entry_ratio), sorted by (sigma, N).

    Norms use the closed-form block sums, which the tests cross-check against
    dense matrices at small N.  The lower bound carries the (sigma1 sigma2)^alpha
    factor, so it is a genuine bound on this geometry for every sigma.
    """
    rows = []
    for sg in sigmas:
        for N in Ns:
            s1 = s2 = sg / 2
            rows.append({
                "d": d,
                "sigma": float(sg),
                "N": int(N),
                "hs_norm": hs_norm_closed(s1, s2, N, d),
                "lower_bound": lower_bound_profile(sg, N, d).scaled_analytic,
                "max_entry_ratio": max_entry_ratio_closed(s1, s2, N, d),
            })
    rows.sort(key=lambda row: (row["sigma"], row["N"]))
    return rows


# ---------------------------------------------- kernel evaluation check


def evaluate_C_closed(a, r, b, s, p, q) -> float:
    """r^alpha s^alpha / |(a + r p) - (b + s q)|^{d-2}."""
    a, b, p, q = (np.asarray(v, float) for v in (a, b, p, q))
    d = a.size
    al = (d - 2) / 2
    return (r * s) ** al / float(np.linalg.norm(a + r * p - b - s * q)) ** (d - 2)


def evaluate_C_tail(s1: float, s2: float, pn: float, qn: float, N: int, d: int, extra: int = 400) -> float:
    """Bound on the pairing mass of E_p, E_q outside n, m <= N.

    Each block obeys |C(f_n, g_m)| <= s1^{n+alpha} s2^{m+alpha} q(n,m) |f_n| |g_m|
    and |E_p^n| = sqrt(C_n(1)) |p|^n.
    """
    al = (d - 2) / 2
    K = N + extra

    def log_en(k, x):
        return 0.5 * (math.lgamma(k + d - 2) - math.lgamma(d - 2) - math.lgamma(k + 1)) + k * math.log(x)

    total = 0.0
    for n in range(K):
        for m in range(K):
            if n <= N and m <= N:
                continue
            lg = (n + al) * math.log(s1) + (m + al) * math.log(s2) + math.log(q_factor(n, m, d))
            if pn > 0:
                lg += log_en(n, pn)
            elif n > 0:
                continue
            if qn > 0:
                lg += log_en(m, qn)
            elif m > 0:
                continue
            total += math.exp(lg)
    return total
