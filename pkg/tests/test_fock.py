import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from confdisk import fock as fk
from confdisk import mobius as mb
from confdisk import rkhs
from confdisk.contraction import contraction_general
from confdisk.errors import NonStrictConfig, OddArityZero, ParticleOverflow

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def t():
    return rkhs.Truncation(3, 6)


def disk(center, r, d=3):
    c = np.zeros(d)
    c[: len(center)] = center
    return mb.translation(c) @ mb.dilation(r, d)


def ring(n, r=0.15, rad=0.6, d=3):
    return [disk([rad * math.cos(2 * math.pi * k / n), rad * math.sin(2 * math.pi * k / n)], r, d)
            for k in range(n)]


def low_vec(t, rng, top=2):
    v = np.zeros(t.size)
    k = sum(t.dims[: top + 1])
    v[:k] = rng.standard_normal(k)
    return v


def close(x, y, tol=1e-12):
    diff, ref = fk.difference_norm(x, y)
    return diff <= tol * max(ref, 1.0)


# ----------------------------------------------------------- vectors


def test_permanent_examples():
    assert fk.permanent(np.zeros((0, 0))) == 1.0
    for n in range(1, 6):
        assert math.isclose(fk.permanent(np.ones((n, n))), math.factorial(n))
    assert fk.permanent(np.array([[1.0, 2.0], [3.0, 4.0]])) == 10.0


def test_fock_basis_order(t):
    ft = fk.FockTruncation(t, 3)
    b = list(ft.basis(2, indices=[2, 0, 1]))
    assert b[0] == () and b[1:4] == [(0,), (1,), (2,)] and b[4] == (0, 0) and len(b) == 10


@pytest.mark.parametrize("I,J", [((), ()), ((1,), (1,)), ((0, 0), (0, 0)), ((0, 1, 1), (0, 1, 1)),
                                 ((0, 1), (1, 0)), ((2, 2, 2), (2, 2, 2)), ((0, 1), (0, 2))])
def test_fock_inner_matches_tensor_definition(I, J):
    dim = 3
    eye = np.eye(dim)

    def tensor(K):
        T = np.array(1.0)
        for i in K:
            T = np.multiply.outer(T, eye[i])
        return fk.sym_project(T, 6)[0]

    if len(I) != len(J):
        expect = 0.0
    else:
        expect = float(np.sum(tensor(I) * tensor(J)))
    got = fk.FockVector.basis_vector(dim, I).inner(fk.FockVector.basis_vector(dim, J))
    assert math.isclose(got, expect, abs_tol=1e-15)
    st_ = fk.FockVector.basis_vector(dim, I).to_state().inner(fk.FockVector.basis_vector(dim, J).to_state())
    assert math.isclose(st_, expect, abs_tol=1e-15)


def test_sym_project_examples():
    S, fv = fk.sym_project(np.array(2.5))
    assert float(S) == 2.5 and fv.coords == {(): 2.5}
    T = np.zeros((3, 3))
    T[0, 1] = 1.0
    S, fv = fk.sym_project(T)
    assert np.allclose(S, [[0, 0.5, 0], [0.5, 0, 0], [0, 0, 0]])
    assert fv.coords == {(0, 1): 1.0}
    with pytest.raises(ParticleOverflow):
        fk.sym_project(np.zeros((2,) * 4), P_max=3)


@given(seeds)
def test_sym_project_is_a_contracting_projection(seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((3, 3, 3))
    S, _ = fk.sym_project(V)
    assert np.linalg.norm(S) <= np.linalg.norm(V) + 1e-12
    assert np.allclose(fk.sym_project(S)[0], S, atol=1e-14)


@given(seeds)
def test_symmetrize_commutes_with_contraction(seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((3, 3))
    V, W = rng.standard_normal((3, 3)), rng.standard_normal((3, 3, 3))
    sym = lambda X: fk.sym_project(X, 8)[0]
    lhs = sym(fk.contract_tensors(C, sym(V), sym(W)))
    rhs = sym(fk.contract_tensors(C, V, W))
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_lift_contraction_matches_tensor_contraction():
    rng = np.random.default_rng(3)
    C = rng.standard_normal((4, 4))
    u = [rng.standard_normal(4) for _ in range(2)]
    w = [rng.standard_normal(4) for _ in range(2)]
    terms = fk.lift_contraction(C, fk.FockState.word(u), fk.FockState.word(w))
    dense = sum(c * np.multiply.outer(l[0], r[0]) for c, l, r in terms)
    V = np.multiply.outer(u[0], u[1])
    W = np.multiply.outer(w[0], w[1])
    assert np.allclose(dense, fk.contract_tensors(C, V, W))


def test_difference_norm_exact_on_cancellation():
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal(5), rng.standard_normal(5)
    a = fk.FockState.word([u, v])
    b = fk.FockState.word([v, u * (1 + 1e-13)])
    diff, ref = fk.difference_norm(a, b)
    assert 0 < diff < 1e-11 * ref
    assert math.isclose(ref, a.norm(), rel_tol=1e-12)


# --------------------------------------------------------- one particle


def test_lift_rho1_identity_and_vacuum(t):
    rng = np.random.default_rng(0)
    v = fk.FockState.word([low_vec(t, rng), low_vec(t, rng)])
    assert close(fk.lift_rho1(mb.identity(3), t)(v), v)
    vac = fk.FockState.vacuum(t.size)
    assert close(fk.lift_rho1(disk([0.2], 0.3), t)(vac), vac)


def test_lift_rho1_dilation_eigenvalues(t):
    lam = 0.4
    e = np.eye(t.size)
    i, j = t.block(1).start, t.block(3).start
    out = fk.lift_rho1(mb.dilation(lam, 3), t)(fk.FockState.word([e[i], e[j]]))
    expect = fk.FockState.word([e[i], e[j]], coef=lam ** (1.5) * lam ** (3.5))
    assert close(out, expect)


# ------------------------------------------------------------- products


def test_arity_zero_and_one(t):
    assert close(fk.product_rho([], [], t), fk.FockState.vacuum(t.size))
    rng = np.random.default_rng(2)
    g = disk([0.1, 0.2], 0.4)
    v = fk.FockState.word([low_vec(t, rng), low_vec(t, rng)])
    assert close(fk.product_rho([g], [v], t), fk.lift_rho1(g, t)(v))


def test_unit_law(t):
    rng = np.random.default_rng(4)
    g = ring(2)
    v = fk.FockState.word([low_vec(t, rng), low_vec(t, rng)])
    lhs = fk.product_rho(g, [v, fk.FockState.vacuum(t.size)], t)
    assert close(lhs, fk.lift_rho1(g[0], t)(v))


def test_vacuum_absorption(t):
    rng = np.random.default_rng(5)
    outer = ring(3)
    gap = fk.operad_check(outer, (), 1, [low_vec(t, rng), low_vec(t, rng)], [], t)
    assert gap < 1e-14


def test_two_point_single_particles(t):
    rng = np.random.default_rng(6)
    g = ring(2)
    u, w = low_vec(t, rng), low_vec(t, rng)
    C = contraction_general(g[1], g[0], t).matrix
    out = fk.product_rho(g, [u, w], t)
    assert math.isclose(out.vacuum_coefficient(), w @ C @ u, rel_tol=1e-13)
    assert math.isclose(out.vacuum_coefficient(), fk.npoint_wick_oracle(g, [u, w], t), rel_tol=1e-12)


@given(seeds)
def test_permutation_equivariance(seed):
    t = rkhs.Truncation(3, 4)
    rng = np.random.default_rng(seed)
    g = ring(3)
    ins = [fk.FockState.word([low_vec(t, rng, 1)]),
           fk.FockState.word([low_vec(t, rng, 1), low_vec(t, rng, 1)]),
           fk.FockState.vacuum(t.size) + fk.FockState.word([low_vec(t, rng, 1)])]
    perm = list(rng.permutation(3))
    a = fk.product_rho(g, ins, t)
    b = fk.product_rho([g[k] for k in perm], [ins[k] for k in perm], t)
    assert close(a, b, 1e-12)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_wick_theorem(t, n):
    rng = np.random.default_rng(n)
    g = ring(n, r=0.12)
    phis = [low_vec(t, rng) for _ in range(n)]
    ctx = fk.ProductContext(tuple(g), t)
    val = fk.vacuum_expectation(g, phis, t, ctx=ctx)
    oracle = fk.npoint_wick_oracle(g, phis, t, ctx=ctx)
    assert abs(val - oracle) <= 1e-12 * max(1.0, abs(oracle))
    assert len(list(fk.perfect_matchings(list(range(n))))) == math.prod(range(1, n, 2))


def test_odd_arity_vanishes(t):
    rng = np.random.default_rng(8)
    g = ring(3)
    phis = [low_vec(t, rng) for _ in range(3)]
    assert fk.vacuum_expectation(g, phis, t) == 0.0
    assert fk.npoint_wick_oracle(g, phis, t) == 0.0
    with pytest.raises(OddArityZero):
        fk.npoint_wick_oracle(g, phis, t, raise_on_odd=True)


def test_twist_scaling(t):
    rng = np.random.default_rng(9)
    g = ring(2)
    u = [low_vec(t, rng) for _ in range(2)]
    w = [low_vec(t, rng) for _ in range(2)]
    ins = [fk.FockState.word(u), fk.FockState.word(w)]
    plain = fk.product_rho(g, ins, t)
    tw = fk.psi_twist_product(g, ins, t)
    by_p = lambda s, p: fk.FockState(s.dim, [(c, x) for c, x in s.terms if len(x) == p])
    for q in range(5):
        # inputs carry 1/sqrt(2!) each, the q-particle output sqrt(q!)
        scale = math.sqrt(math.factorial(q)) / 2
        assert close(by_p(tw, q), by_p(plain, q) * scale)


def test_operad_defect_decreases():
    rng = np.random.default_rng(10)
    outer = [disk([0.45], 0.4), disk([-0.45], 0.4)]
    inner = [disk([0.0, 0.45], 0.35), disk([0.0, -0.45], 0.35)]
    gaps = []
    for N in (4, 8):
        t = rkhs.Truncation(3, N)
        ins_in = [low_vec(t, rng, 1), fk.FockState.word([low_vec(t, rng, 1), low_vec(t, rng, 1)])]
        gaps.append(fk.operad_check(outer, inner, 0, [low_vec(t, rng, 1)], ins_in, t))
    assert gaps[1] < gaps[0] / 5


def test_overflow_and_non_strict(t):
    rng = np.random.default_rng(11)
    g = ring(2)
    big = fk.FockState.word([low_vec(t, rng) for _ in range(4)])
    with pytest.raises(ParticleOverflow):
        fk.product_rho(g, [big, big], t, P_max=6)
    overlap = [disk([0.1], 0.3), disk([-0.1], 0.3)]
    with pytest.raises(NonStrictConfig):
        fk.product_rho(overlap, [None, None], t)
    with pytest.raises(NonStrictConfig):
        fk.product_rho(mb.is_CE_config(overlap), [None, None], t)


# ------------------------------------------------------------ sphere


def test_sphere_empty(t):
    r = fk.sphere_state([], [], t)
    assert r.value == 1.0 and r.mode == "empty"


def test_sphere_direct_matches_transport(t):
    rng = np.random.default_rng(12)
    g = ring(2)
    phis = [low_vec(t, rng, 1), low_vec(t, rng, 1)]
    a = fk.sphere_state(g, phis, t)
    b = fk.sphere_state(g, phis, t, mode="transport")
    assert a.mode == "direct" and b.mode == "transport"
    assert abs(a.value - b.value) <= 1e-6 * abs(a.value)


def test_sphere_invariance_under_conformal_maps(t):
    rng = np.random.default_rng(13)
    g = ring(2, r=0.2)
    phis = [low_vec(t, rng, 1), low_vec(t, rng, 1)]
    base = fk.sphere_state(g, phis, t).value
    refl = np.eye(5)
    refl[0, 0] = -1.0
    h = mb.MobiusMatrix(refl @ mb.inversion(3).M) @ mb.translation([0.1, 0.0, 0.05])
    moved = [h @ x for x in g]
    r = fk.sphere_state(moved, phis, t)
    assert r.mode == "transport"
    assert abs(r.value - base) <= 1e-6 * abs(base)


# ------------------------------------------------------------- probe


def test_probe_vacuum_and_sign(t):
    pairs = [(disk([0.5], 0.2), disk([-0.5], 0.3))]
    vac = fk.FockState.vacuum(t.size)
    assert math.isclose(fk.radical_probe_2pt(vac, pairs, t), 1.0)
    rng = np.random.default_rng(14)
    v = fk.FockState.word([low_vec(t, rng), low_vec(t, rng)])
    a = fk.radical_probe_2pt(v, pairs, t)
    assert a > 0 and math.isclose(a, fk.radical_probe_2pt(v * -1.0, pairs, t), rel_tol=1e-14)


def test_probe_value_matches_vacuum_expectation(t):
    rng = np.random.default_rng(15)
    g1, g2 = disk([0.5], 0.2), disk([-0.5], 0.3)
    word = [low_vec(t, rng), low_vec(t, rng)]
    v = fk.FockState.word(word)
    C = contraction_general(g1, g2, t).matrix
    w = fk.FockState.word([C @ u for u in word])
    direct = fk.vacuum_expectation([g1, g2], [w * (1 / w.norm()), v], t)
    assert math.isclose(abs(direct), fk.probe_value(C, word), rel_tol=1e-10)
