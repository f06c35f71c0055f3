"""Truncated reproducing-kernel space of harmonic polynomials and the matrices
of the monoid action on it.

Coordinates are taken in the H-orthonormal basis of ``harmonic.build_basis``,
degree blocks in increasing order.  An element g = T(b) D(lam) R K(c) acts by

    rho(g) = exp(b.P) lam^D rho(R) exp(c.K),

where P raises and K = P^T lowers the degree.  Every entry of the product on
the degree <= N truncation only involves degrees <= N, so the truncated
matrices are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import harmonic as hm
from .errors import NonOrthogonalRotation, OutsideDisk
from .mobius import MobiusMatrix, act, gauss_decompose

# direction of each one-parameter factor relative to the raising/lowering
# exponentials; fixed by minimizing validate_rho over all sign choices
RHO_SIGNS = {"translation": 1, "rotation": 1, "special_conformal": 1}

MATRIX_FORMAT_VERSION = 1


class Truncation:
    """Degree <= N_max slice of the harmonic space for a fixed d."""

    def __init__(self, d: int, N_max: int):
        self.d = d
        self.N_max = N_max
        self.basis = hm.build_basis(d, N_max)
        self.alpha = (d - 2) / 2
        self._pblocks: dict = {}
        self._jblocks: dict = {}

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def dims(self) -> list:
        return self.basis.dims

    def block(self, n: int) -> slice:
        return self.basis.block_slice(n)

    def degrees(self) -> np.ndarray:
        return np.repeat(np.arange(self.N_max + 1), self.dims)

    def raising_block(self, mu: int, n: int) -> np.ndarray:
        """Matrix of P_mu from degree n to n+1 in the orthonormal basis."""
        key = (mu, n)
        if key not in self._pblocks:
            B = self.basis
            U0, U1 = B.blocks[n], _next_block(self, n + 1)
            M = U1 @ (hm.monomial_P(self.d, n, mu) @ U0.T)
            self._pblocks[key] = M * (B.hscale[n] / _hscale(self.d, n + 1))
        return self._pblocks[key]

    def rotation_generator(self, mu: int, nu: int, n: int) -> np.ndarray:
        key = (mu, nu, n)
        if key not in self._jblocks:
            U = self.basis.blocks[n]
            self._jblocks[key] = U @ (hm.monomial_J(self.d, n, mu, nu) @ U.T)
        return self._jblocks[key]

    def __repr__(self) -> str:
        return f"Truncation(d={self.d}, N_max={self.N_max}, size={self.size})"


def _hscale(d: int, n: int) -> float:
    return math.sqrt(float(hm.fisher_h_factor(d, n)))


def _next_block(t: Truncation, n: int) -> np.ndarray:
    if n <= t.N_max:
        return t.basis.blocks[n]
    return hm.build_basis(t.d, n).blocks[n]


# ---------------------------------------------------------------- kernel


def kernel(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x @ x >= 1.0 or y @ y >= 1.0:
        raise OutsideDisk("kernel arguments must lie in the open unit ball")
    d = x.size
    return float((1.0 - 2.0 * (x @ y) + (x @ x) * (y @ y)) ** (-(d - 2) / 2))


def e_vector(a, t: Truncation, method: str = "raise") -> np.ndarray:
    """Coordinates of the reproducing vector at a: entries Y_{n,l}(a).

    ``method="eval"`` evaluates the basis polynomials directly.  The default
    builds E_a = exp(a.P) 1 degree by degree, which avoids the cancellation
    of monomial sums near the boundary sphere.
    """
    a = np.asarray(a, dtype=float)
    if a @ a >= 1.0:
        raise OutsideDisk("evaluation point must lie in the open unit ball")
    if method == "eval":
        return t.basis.evaluate(a)
    out = np.empty(t.size)
    cur = np.ones(1)
    out[t.block(0)] = cur
    for n in range(t.N_max):
        nxt = np.zeros(t.dims[n + 1])
        for mu in range(t.d):
            if a[mu] != 0.0:
                nxt += a[mu] * (t.raising_block(mu, n) @ cur)
        cur = nxt / (n + 1)
        out[t.block(n + 1)] = cur
    return out


def e_tail_sq(radius_sq: float, d: int, N: int) -> float:
    """sum_{n > N} C_n(1) s^n with C_n(1) = binom(n+d-3, d-3)."""
    total, n = 0.0, N + 1
    term = math.comb(n + d - 3, d - 3) * radius_sq**n
    while term > 1e-40 * max(total, 1e-300) and n < N + 100000:
        total += term
        n += 1
        term = math.comb(n + d - 3, d - 3) * radius_sq**n
    return total


# --------------------------------------------------------------- operators


def op_dilation(r: float, t: Truncation) -> np.ndarray:
    if not 0 < r <= 1:
        raise ValueError("dilation factor must lie in (0, 1]")
    return np.diag(dilation_diagonal(r, t))


def dilation_diagonal(lam: float, t: Truncation) -> np.ndarray:
    return lam ** (t.degrees() + t.alpha)


def givens_factors(R: np.ndarray) -> list:
    """Plane rotations (i, j, theta) with R equal to their ordered product."""
    M = np.array(R, dtype=float)
    d = M.shape[0]
    out = []
    for j in range(d - 1):
        for i in range(d - 1, j, -1):
            r = math.hypot(M[j, j], M[i, j])
            if r == 0.0 or M[i, j] == 0.0:
                continue
            c, s = M[j, j] / r, M[i, j] / r
            rows = M[[j, i], :].copy()
            M[j, :] = c * rows[0] + s * rows[1]
            M[i, :] = -s * rows[0] + c * rows[1]
            out.append((j, i, math.atan2(s, c)))
    if np.max(np.abs(M - np.eye(d))) > 1e-9:
        raise NonOrthogonalRotation("matrix is not a proper rotation")
    return out


def rotation_blocks(R: np.ndarray, t: Truncation) -> list:
    """Per-degree orthogonal blocks of f -> f o R^{-1}."""
    R = np.asarray(R, dtype=float)
    if np.max(np.abs(R.T @ R - np.eye(t.d))) > 1e-10 or np.linalg.det(R) < 0:
        raise NonOrthogonalRotation("rotation block is not in SO(d)")
    factors = givens_factors(R)
    sgn = RHO_SIGNS["rotation"]
    blocks = []
    for n in range(t.N_max + 1):
        B = np.eye(t.dims[n])
        for i, j, theta in factors:
            B = B @ expm(-sgn * theta * t.rotation_generator(i, j, n))
        blocks.append(B)
    return blocks


def op_rotation(R: np.ndarray, t: Truncation) -> np.ndarray:
    M = np.zeros((t.size, t.size))
    for n, B in enumerate(rotation_blocks(R, t)):
        s = t.block(n)
        M[s, s] = B
    return M


def exp_raising(b: Sequence[float], t: Truncation) -> np.ndarray:
    """exp(b.P) on the truncation; lower block-triangular and exact."""
    b = np.asarray(b, dtype=float)
    N = t.N_max
    steps = []
    for n in range(N):
        X = np.zeros((t.dims[n + 1], t.dims[n]))
        for mu in range(t.d):
            if b[mu] != 0.0:
                X += b[mu] * t.raising_block(mu, n)
        steps.append(X)
    M = np.zeros((t.size, t.size))
    for n in range(N + 1):
        cur = np.eye(t.dims[n])
        M[t.block(n), t.block(n)] = cur
        for m in range(n + 1, N + 1):
            cur = steps[m - 1] @ cur / (m - n)
            M[t.block(m), t.block(n)] = cur
    return M


def exp_lowering(c: Sequence[float], t: Truncation) -> np.ndarray:
    """exp(c.K) = exp(c.P)^T, since K_mu is the adjoint of P_mu."""
    return exp_raising(c, t).T


def op_rho(g: MobiusMatrix, t: Truncation) -> np.ndarray:
    b, lam, R, c = gauss_decompose(g)
    raise_ = exp_raising(RHO_SIGNS["translation"] * b, t)
    lower = exp_lowering(RHO_SIGNS["special_conformal"] * c, t)
    rot = op_rotation(R, t)
    diag = dilation_diagonal(lam, t)
    return raise_ @ ((diag[:, None] * rot) @ lower)


@dataclass(frozen=True)
class RhoValidation:
    max_error: float
    max_ratio: float
    tails: tuple


def validate_rho(g: MobiusMatrix, t: Truncation, xs, rho: np.ndarray | None = None) -> RhoValidation:
    """Compare rho(g) E_x with Omega^alpha E_{g x} on sample points.

    The discarded part of E_x has norm sqrt(sum_{n>N} C_n(1)|x|^{2n}) and
    rho(g) is a contraction, so that is the analytic bound on the error.
    """
    M = op_rho(g, t) if rho is None else rho
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    errs, tails = [], []
    for x in xs:
        ex = e_vector(x, t)
        y, j = act(g, x)
        lhs = M @ ex
        rhs = (1.0 / j) ** t.alpha * e_vector(y, t)
        errs.append(float(np.linalg.norm(lhs - rhs)))
        tails.append(math.sqrt(e_tail_sq(float(x @ x), t.d, t.N_max)))
    ratios = [e / tl for e, tl in zip(errs, tails)]
    return RhoValidation(max(errs), max(ratios), tuple(tails))


def calibrate_signs(t: Truncation, probes, xs) -> dict:
    """Return the sign table minimizing validate_rho over ``probes``."""
    best, best_err = None, math.inf
    saved = dict(RHO_SIGNS)
    try:
        for st in (1, -1):
            for sr in (1, -1):
                for sc in (1, -1):
                    RHO_SIGNS.update(translation=st, rotation=sr, special_conformal=sc)
                    err = max(validate_rho(g, t, xs).max_error for g in probes)
                    if err < best_err:
                        best, best_err = dict(RHO_SIGNS), err
    finally:
        RHO_SIGNS.clear()
        RHO_SIGNS.update(saved)
    return best


def trace_partial(r: float, d: int, N: int) -> float:
    return sum(hm.dim_harm(d, n) * r ** (n + (d - 2) / 2) for n in range(N + 1))


def trace_closed(r: float, d: int) -> float:
    return r ** ((d - 2) / 2) * (1 + r) / (1 - r) ** (d - 1)


def save_operator(path: str, M: np.ndarray, t: Truncation) -> None:
    np.savez(path, matrix=M, d=t.d, N_max=t.N_max, basis_version=hm.BASIS_FORMAT_VERSION,
             format_version=MATRIX_FORMAT_VERSION)


def load_operator(path: str) -> tuple[np.ndarray, dict]:
    with np.load(path) as z:
        meta = {k: int(z[k]) for k in ("d", "N_max", "basis_version", "format_version")}
        return z["matrix"], meta
