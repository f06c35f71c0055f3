"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line; the lines are printed in the
terminal summary (see conftest.py) and also when this file is run directly.
"""
import itertools
import math
import random
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from confdisk import contraction as ct
from confdisk import fock as fk
from confdisk import harmonic as hm
from confdisk import mobius as mb
from confdisk import rkhs

RESULTS: dict = {}
FLOAT_FLOOR = 1e-14


def report(k: int, passed: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    assert passed, line


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def sphere_points(rng, n, d, radius):
    v = rng.standard_normal((n, d))
    return radius * v / np.linalg.norm(v, axis=1)[:, None]


# ------------------------------------------------------------ 1. group


def test_criterion_01_group_identities():
    t0 = time.perf_counter()
    worst = dict(cocycle=0.0, distance=0.0, G=0.0, jacobian=0.0)
    rng = np.random.default_rng(1)
    for d in (3, 4, 5):
        for _ in range(1000):
            g, h = mb.random_word(d, rng), mb.random_word(d, rng)
            x, y = rng.uniform(-0.5, 0.5, d), rng.uniform(-0.5, 0.5, d)
            hx, jh = mb.act(h, x)
            _, jg = mb.act(g, hx)
            _, jgh = mb.act(g @ h, x)
            worst["cocycle"] = max(worst["cocycle"], rel(jg * jh, jgh))
            gx, jx = mb.act(g, x)
            gy, jy = mb.act(g, y)
            worst["distance"] = max(worst["distance"], rel(jx * jy * np.sum((gx - gy) ** 2), np.sum((x - y) ** 2)))
            a = mb.random_G(d, rng)
            ax, jax = mb.act(a, x)
            ay, jay = mb.act(a, y)
            lhs = 1 - 2 * ax @ ay + (ax @ ax) * (ay @ ay)
            worst["G"] = max(worst["G"], rel(lhs * jax * jay, 1 - 2 * x @ y + (x @ x) * (y @ y)))
            J = mb.numeric_jacobian(g, x, mb.TAU_FD)
            omega = 1.0 / jx
            worst["jacobian"] = max(worst["jacobian"], np.max(np.abs(J.T @ J - omega**2 * np.eye(d))) / omega**2)
    elapsed = time.perf_counter() - t0
    ok = max(worst["cocycle"], worst["distance"], worst["G"]) < 1e-8 and worst["jacobian"] < 1e-4 and elapsed < 30
    report(1, ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")


# ------------------------------------------------------- 2. exact algebra


def rand_harmonic(d, n, seed):
    r = random.Random(seed)
    f = hm.Poly(d, {a: Fraction(r.randint(-4, 4)) for a in hm.multi_indices(d, n)})
    return hm.project_harmonic(f)


def commutators_hold(d, f):
    A = hm.act_twisted

    def com(a, b):
        return A(a, A(b, f)) - A(b, A(a, f))

    zero = hm.Poly(d)
    for mu in range(d):
        if com("D", ("K", mu)) != -A(("K", mu), f) or com("D", ("P", mu)) != A(("P", mu), f):
            return False
        for nu in range(d):
            if not com("D", ("J", mu, nu)).is_zero():
                return False
            if com(("P", mu), ("K", nu)) != (A(("J", mu, nu), f) + (A("D", f) if mu == nu else zero)) * -2:
                return False
            for r in range(d):
                for kind in ("P", "K"):
                    rhs = zero
                    if mu == r:
                        rhs = rhs - A((kind, nu), f)
                    if nu == r:
                        rhs = rhs + A((kind, mu), f)
                    if com(("J", mu, nu), (kind, r)) != rhs:
                        return False
    return True


def test_criterion_02_exact_inner_products():
    bad = []
    for d in (3, 4):
        for n in range(7):
            z = hm.zonal_gegenbauer_poly(n, d)
            if hm.fisher_inner(z, z) != hm.fisher_h_factor(d, n) * hm.gegenbauer_at_one(n, d):
                bad.append(("factor", d, n))
            r = random.Random(100 * d + n)
            f = hm.Poly(d, {a: Fraction(r.randint(-3, 3)) for a in hm.multi_indices(d, n)})
            if hm.kelvin_dual(f) != hm.apply_poly_of_P(f):
                bad.append(("dual", d, n))
        for n in (0, 2, 4, 6):
            if not commutators_hold(d, rand_harmonic(d, n, 7 * n + d)):
                bad.append(("commutator", d, n))
    report(2, not bad, "exact Fractions, d in {3,4}, degrees <= 6" + (f", failures {bad}" if bad else ""))


# -------------------------------------------------------- 3. kernel


def lowering_power_norm_sq(n, d):
    """|((P_1 - i P_2)/2)^n . 1|_H^2 from the real and imaginary parts."""
    re, im = hm.Poly(d), hm.Poly(d)
    for k in range(n + 1):
        a = [0] * d
        a[0], a[1] = n - k, k
        term = hm.raise_vacuum(tuple(a)) * Fraction(math.comb(n, k), 2**n)
        sign = (1, -1, -1, 1)[k % 4]
        if k % 2 == 0:
            re = re + term * sign
        else:
            im = im + term * sign
    return hm.h_inner(re, re) + hm.h_inner(im, im)


def test_criterion_03_kernel_reproduction():
    rng = np.random.default_rng(3)
    # N = 40 where the basis is cheap; d = 4, 5 at smaller N, still inside the tail allowance
    cutoffs = {3: 40, 4: 20, 5: 12}
    worst = 0.0
    for d, N in cutoffs.items():
        t = rkhs.Truncation(d, N)
        for _ in range(10):
            a, b = sphere_points(rng, 2, d, 0.5) * rng.uniform(0.2, 1.0, (2, 1))
            partial = float(rkhs.e_vector(a, t) @ rkhs.e_vector(b, t))
            with mpmath.workdps(40):
                am, bm = [mpmath.matrix(list(v)) for v in (a, b)]
                ab = sum(am[i] * bm[i] for i in range(d))
                exact = (1 - 2 * ab + (am.T * am)[0] * (bm.T * bm)[0]) ** (-mpmath.mpf(d - 2) / 2)
            s = float(np.linalg.norm(a) * np.linalg.norm(b))
            tail = sum(float(hm.gegenbauer_at_one(n, d)) * s**n for n in range(N + 1, N + 400))
            worst = max(worst, abs(partial - float(exact)) / (tail + 4e-16 * float(exact)))
    lower_ok = all(
        lowering_power_norm_sq(n, d) == math.factorial(n) * hm.pochhammer(hm.half_shift(d), n)
        for d in (3, 4)
        for n in range(13)
    )
    report(3, worst <= 1.0 and lower_ok,
           f"max |partial - closed| / tail = {worst:.2f}, lowering norms exact for n <= 12: {lower_ok}")


# ---------------------------------------------------------- 4. trace


def test_criterion_04_trace_formula():
    r, N = 0.5, 200
    worst = 0.0
    for d in (3, 4, 5):
        with mpmath.workdps(80):
            rm = mpmath.mpf(r)
            al = mpmath.mpf(d - 2) / 2
            partial = mpmath.fsum(hm.dim_harm(d, n) * rm ** (n + al) for n in range(N + 1))
            closed = rm**al * (1 + rm) / (1 - rm) ** (d - 1)
            tail = mpmath.fsum(hm.dim_harm(d, n) * rm ** (n + al) for n in range(N + 1, N + 400))
            # the allowance is the full tail; summing 400 more terms leaves < 1e-100 of it
            worst = max(worst, float(abs(closed - partial) / (tail * (1 + mpmath.mpf(10) ** -30))))
        float_gap = rel(rkhs.trace_partial(r, d, N), rkhs.trace_closed(r, d))
        worst = max(worst, float_gap / 1e-13)
    report(4, worst <= 1.0, f"max gap / tail allowance = {worst:.3f} (r=0.5, N=200)")


# ------------------------------------------------------------ 5. rho


def test_criterion_05_rho_validation():
    rng = np.random.default_rng(5)
    truncs = {N: rkhs.Truncation(3, N) for N in (8, 16, 24)}
    worst_ratio, monotone, worst_sv = 0.0, True, 0.0
    for _ in range(100):
        g = mb.random_S(3, rng)
        # at |x| = 0.3 the N = 24 tail (~1e-13) stays above rounding; smaller radii
        # would put the allowance below machine precision
        xs = sphere_points(rng, 3, 3, 0.3)
        errs = []
        for N, t in truncs.items():
            v = rkhs.validate_rho(g, t, xs)
            worst_ratio = max(worst_ratio, v.max_ratio)
            errs.append(v.max_error)
        # a strongly contracting g can reach the rounding floor already at N = 16
        monotone &= all(b < a or b < FLOAT_FLOOR for a, b in zip(errs, errs[1:]))
    for _ in range(10):
        g = mb.random_S(3, rng, interior=True)
        worst_sv = max(worst_sv, float(np.linalg.norm(rkhs.op_rho(g, truncs[24]), 2)))
    ok = worst_ratio <= 1.5 and monotone and worst_sv <= 1 + 1e-6
    report(5, ok, f"max error/tail = {worst_ratio:.3f}, decreasing in N: {monotone}, max singular value = {worst_sv:.6f}")


# ------------------------------------------------------ 6. contraction


def test_criterion_06_contraction_dual_path():
    rng = np.random.default_rng(6)
    gap, ratio, pairing = 0.0, 0.0, 0.0
    for d in (3, 4):
        t = rkhs.Truncation(d, 6)
        deg = t.degrees()
        mask = deg[:, None] + deg[None, :] <= 6
        for _ in range(5):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            a, b = 0.45 * u, -0.4 * u + 0.05 * rng.standard_normal(d)
            r, s = rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)
            C = ct.contraction_core(a, r, b, s, t)
            green = ct.contraction_green_matrix(a, r, b, s, t, 6)
            gap = max(gap, float(np.max(np.abs(C.matrix - green)[mask])))
            ratio = max(ratio, ct.max_entry_ratio(C))
    t = rkhs.Truncation(3, 12)
    for sigma in (0.2, 0.4, 0.6):
        a, r, b, s = ct.symmetric_geometry(sigma, 3)
        C = ct.contraction_core(a, r, b, s, t)
        for _ in range(5):
            p, q = rng.uniform(-0.3, 0.3, (2, 3))
            val = rkhs.e_vector(p, t) @ C.matrix @ rkhs.e_vector(q, t)
            tail = ct.evaluate_C_tail(C.sigma1, C.sigma2, np.linalg.norm(p), np.linalg.norm(q), 12, 3, extra=150)
            pairing = max(pairing, abs(val - ct.evaluate_C_closed(a, r, b, s, p, q)) / (tail + 1e-14))
    ok = gap < 1e-10 and ratio <= 1 + 1e-12 and pairing <= 1.0
    report(6, ok, f"core-green gap = {gap:.1e}, max entry/bound = {ratio:.3f}, pairing gap/tail = {pairing:.3f}")


# ---------------------------------------------------- 7. boundedness


def test_criterion_07_boundedness_threshold():
    d = 4
    rows = ct.boundedness_sweep([0.5, 1.0], [20, 40, 60], d)
    hs = {(r["sigma"], r["N"]): r["hs_norm"] for r in rows}
    half_change = abs(hs[(0.5, 60)] - hs[(0.5, 40)])
    grows = hs[(1.0, 20)] < hs[(1.0, 40)] < hs[(1.0, 60)]

    # independent oracle: plain summation of the series, no package code
    def oracle(sigma):
        return math.sqrt(sum(sigma ** (2 * n) / (n + 1) for n in range(61)))

    exceeds = hs[(1.0, 60)] > oracle(1.0)
    threshold = oracle(0.999)
    ok = half_change < 1e-8 and grows and exceeds and threshold > 2.0
    report(7, ok, f"sigma=0.5 change = {half_change:.1e}; sigma=1 HS = "
                  f"{hs[(1.0, 20)]:.3f}/{hs[(1.0, 40)]:.3f}/{hs[(1.0, 60)]:.3f} vs bound {oracle(1.0):.3f}; "
                  f"bound at 0.999 = {threshold:.3f}")


# ------------------------------------------------------------ 8. operad


def random_disk(d, rng, rmax=0.35, reach=0.95):
    """Generic element whose image ball sits inside the ball of radius ``reach``."""
    r = float(rng.uniform(0.5 * rmax, rmax))
    c = sphere_points(rng, 1, d, 1.0)[0] * (reach - r) * rng.uniform() ** (1 / d)
    return mb.translation(c) @ mb.dilation(r, d) @ mb.random_G(d, rng, pmax=0.3)


def random_strict_config(n, d, rng, sigma_max=0.6):
    while True:
        gs = [random_disk(d, rng) for _ in range(n)]
        cfg = mb.is_CE_config(gs)
        if cfg.strict and (n < 2 or cfg.sigma[np.triu_indices(n, 1)].max() < sigma_max):
            return gs


def test_criterion_08_operad_laws():
    t0 = time.perf_counter()
    d, P = 3, 4
    rng = np.random.default_rng(8)
    cases = [(random_strict_config(2, d, rng), random_strict_config(2, d, rng)) for _ in range(3)]
    worst16, monotone = 0.0, True
    unit = vac = equi = 0.0
    for outer, inner in cases:
        gaps = []
        for N in (8, 12, 16):
            t = rkhs.Truncation(d, N)
            crng = np.random.default_rng(N)  # same inputs up to padding across N
            k = sum(t.dims[:3])
            vecs = [np.pad(crng.standard_normal(k), (0, t.size - k)) for _ in range(4)]
            inner_in = [fk.FockState.word([vecs[0], vecs[1]]), vecs[2]]
            gaps.append(fk.operad_check(outer, inner, 0, [vecs[3]], inner_in, t, P))
        monotone &= gaps[0] > gaps[1] > gaps[2]
        worst16 = max(worst16, gaps[2])
        t = rkhs.Truncation(d, 8)
        v = fk.FockState.word([rng.standard_normal(t.size), rng.standard_normal(t.size)])
        diff, ref = fk.difference_norm(fk.product_rho([mb.identity(d)], [v], t, P), v)
        unit = max(unit, diff / ref)
        vac = max(vac, fk.operad_check(outer, (), 1, [rng.standard_normal(t.size)], [], t, P))
        ins = [fk.FockState.word([rng.standard_normal(t.size)]), v]
        a = fk.product_rho(outer, ins, t, P)
        b = fk.product_rho(outer[::-1], ins[::-1], t, P)
        diff, ref = fk.difference_norm(a, b)
        equi = max(equi, diff / ref)
    elapsed = time.perf_counter() - t0
    ok = unit < 1e-9 and vac < 1e-9 and equi < 1e-12 and monotone and worst16 < 1e-6 and elapsed < 300
    report(8, ok, f"unit={unit:.1e}, vacuum={vac:.1e}, equivariance={equi:.1e}, "
                  f"composition at N=16 = {worst16:.1e} (decreasing: {monotone}), {elapsed:.0f}s")


# -------------------------------------------------------------- 9. Wick


def test_criterion_09_wick_oracle():
    d = 3
    t = rkhs.Truncation(d, 8)
    rng = np.random.default_rng(9)
    worst = 0.0
    for n in (2, 4, 6):
        gs = random_strict_config_small(n, d, rng)
        phis = [rng.standard_normal(t.size) * 0.6 ** t.degrees() for _ in range(n)]
        ctx = fk.ProductContext(tuple(gs), t)
        val = fk.vacuum_expectation(gs, phis, t, P_max=n, ctx=ctx)
        # brute force: sum over pairings, each pairing a product of bilinear forms
        brute = 0.0
        for m in fk.perfect_matchings(list(range(n))):
            brute += math.prod(phis[i] @ ct.contraction_general(gs[i], gs[j], t).matrix @ phis[j] for i, j in m)
        worst = max(worst, abs(val - brute) / max(1.0, abs(brute)))
    report(9, worst < 1e-9, f"max |product - pairing sum| = {worst:.1e} for n = 2, 4, 6")


def random_strict_config_small(n, d, rng):
    ang = 2 * math.pi * np.arange(n) / n + rng.uniform(0, 0.3)
    gs = []
    for a in ang:
        c = np.zeros(d)
        c[:2] = 0.6 * np.array([math.cos(a), math.sin(a)])
        gs.append(mb.translation(c) @ mb.dilation(0.12, d) @ mb.random_G(d, rng, pmax=0.3))
    return gs


# ------------------------------------------------------------ 10. sphere


def test_criterion_10_sphere_state():
    d = 3
    t = rkhs.Truncation(d, 12)
    rng = np.random.default_rng(10)
    gs = random_strict_config(2, d, rng, sigma_max=0.5)
    phis = [rng.standard_normal(t.size) * 0.5 ** t.degrees() for _ in range(2)]
    direct = fk.sphere_state(gs, phis, t)
    moved = fk.sphere_state(gs, phis, t, mode="transport")
    match = rel(moved.value, direct.value)
    inv = 0.0
    for k in range(20):
        gam = mb.random_conformal(d, rng)
        r = fk.sphere_state([gam @ g for g in gs], phis, t, mode="transport", seed=k)
        inv = max(inv, rel(r.value, direct.value))
    choice = 0.0
    for seed in range(1, 4):
        r = fk.sphere_state(gs, phis, t, mode="transport", seed=seed, margin=0.05 * seed)
        choice = max(choice, rel(r.value, moved.value))
    empty = fk.sphere_state([], [], t).value
    ok = direct.mode == "direct" and match < 1e-7 and inv < 1e-7 and empty == 1.0 and choice < 1e-7
    report(10, ok, f"direct vs transported = {match:.1e}, invariance over 20 maps = {inv:.1e}, "
                   f"empty = {empty}, choice = {choice:.1e}")


# ------------------------------------------------------------- 11. probe


def test_criterion_11_simplicity_probe():
    d = 3
    t = rkhs.Truncation(d, 8)
    pairs = [
        (mb.translation([0.93, 0, 0]) @ mb.dilation(0.05, d), mb.dilation(0.85, d)),
        (mb.translation([0.85, 0, 0]) @ mb.dilation(0.1, d), mb.dilation(0.7, d)),
        (mb.translation([0.5, 0, 0]) @ mb.dilation(0.25, d), mb.translation([-0.4, 0, 0]) @ mb.dilation(0.35, d)),
    ]
    Cs = [ct.contraction_general(g1, g2, t).matrix for g1, g2 in pairs]
    eye = np.eye(t.size)
    idx = range(sum(t.dims[:7]))  # one-particle degrees <= 6
    worst, where = math.inf, None
    for p in range(3):
        for I in itertools.combinations_with_replacement(idx, p):
            word = [eye[i] for i in I]
            val = max(fk.probe_value(C, word) for C in Cs)
            if val < worst:
                worst, where = val, I
    report(11, worst > 1e-6, f"min probe over basis vectors with <= 2 particles = {worst:.2e} at {where}")


if __name__ == "__main__":
    pytest.main([__file__, "-q"])
