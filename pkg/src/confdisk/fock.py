"""Truncated symmetric Fock space over the harmonic space and the operadic
products built from the monoid action and pairwise Wick contractions.

Two representations are used.  ``FockVector`` stores coordinates on the
multiset basis S(e_I) of one-particle basis vectors, with

    <S e_I, S e_J> = delta_{IJ} prod_k m_k! / p!,

(m_k the multiplicities in I).  ``FockState`` stores a finite sum of
symmetrized words S(u_1 x ... x u_p) of dense one-particle vectors; pairings
of words are permanents of Gram matrices divided by p!.  Products produce
``FockState`` values, since applying rho to a basis word yields dense vectors.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .contraction import contraction_general
from .errors import (
    NoFreePoint,
    NonStrictConfig,
    OddArityZero,
    ParticleOverflow,
)
from .mobius import (
    INF,
    DiskConfig,
    MobiusMatrix,
    act,
    act_many,
    compose,
    dilation,
    image_ball,
    is_CE_config,
    is_inf,
    special_conformal,
    translation,
)
from .rkhs import Truncation, op_rho


def permanent(M: np.ndarray) -> float:
    """Ryser's formula; fine for the small sizes used here."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for k in range(1, n + 1):
        for cols in itertools.combinations(range(n), k):
            total += (-1) ** k * np.prod(M[:, cols].sum(axis=1))
    return (-1) ** n * total


# ------------------------------------------------------------- vectors


@dataclass
class FockTruncation:
    trunc: Truncation
    P_max: int = 6

    @property
    def one_particle_dim(self) -> int:
        return self.trunc.size

    def basis(self, max_particles: int | None = None, indices: Sequence[int] | None = None):
        """Multisets in graded-lex order over the given one-particle indices."""
        idx = range(self.trunc.size) if indices is None else sorted(indices)
        top = self.P_max if max_particles is None else max_particles
        for p in range(top + 1):
            yield from itertools.combinations_with_replacement(idx, p)


def multiset_weight(I: Sequence[int]) -> float:
    counts: dict = {}
    for i in I:
        counts[i] = counts.get(i, 0) + 1
    return math.prod(math.factorial(c) for c in counts.values()) / math.factorial(len(I))


class FockVector:
    """Sparse coordinates on the multiset basis; keys are sorted index tuples."""

    def __init__(self, dim: int, coords: dict | None = None):
        self.dim = dim
        self.coords = {}
        for k, v in (coords or {}).items():
            if v != 0:
                key = tuple(sorted(k))
                self.coords[key] = self.coords.get(key, 0.0) + v

    @classmethod
    def vacuum(cls, dim: int) -> "FockVector":
        return cls(dim, {(): 1.0})

    @classmethod
    def basis_vector(cls, dim: int, I: Sequence[int]) -> "FockVector":
        return cls(dim, {tuple(I): 1.0})

    def inner(self, other: "FockVector") -> float:
        return sum(c * other.coords.get(k, 0.0) * multiset_weight(k) for k, c in self.coords.items())

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def max_particles(self) -> int:
        return max((len(k) for k in self.coords), default=0)

    def to_state(self) -> "FockState":
        eye = np.eye(self.dim)
        return FockState(self.dim, [(c, tuple(eye[i] for i in k)) for k, c in self.coords.items()])

    def __add__(self, other):
        out = dict(self.coords)
        for k, v in other.coords.items():
            out[k] = out.get(k, 0.0) + v
        return FockVector(self.dim, out)

    def __mul__(self, s: float):
        return FockVector(self.dim, {k: s * v for k, v in self.coords.items()})

    __rmul__ = __mul__


class FockState:
    """Finite sum of coefficient * S(u_1 x ... x u_p) with dense u's."""

    def __init__(self, dim: int, terms: Iterable | None = None):
        self.dim = dim
        self.terms = [(float(c), tuple(np.asarray(u, float) for u in w)) for c, w in (terms or []) if c != 0]

    @classmethod
    def vacuum(cls, dim: int) -> "FockState":
        return cls(dim, [(1.0, ())])

    @classmethod
    def word(cls, vectors: Sequence[np.ndarray], coef: float = 1.0) -> "FockState":
        vectors = [np.asarray(v, float) for v in vectors]
        dim = vectors[0].size if vectors else 0
        return cls(dim, [(coef, tuple(vectors))])

    def max_particles(self) -> int:
        return max((len(w) for _, w in self.terms), default=0)

    def vacuum_coefficient(self) -> float:
        return math.fsum(c for c, w in self.terms if not w)

    def __add__(self, other: "FockState") -> "FockState":
        return FockState(max(self.dim, other.dim), self.terms + other.terms)

    def __mul__(self, s: float) -> "FockState":
        return FockState(self.dim, [(s * c, w) for c, w in self.terms])

    __rmul__ = __mul__

    def __sub__(self, other: "FockState") -> "FockState":
        return self + other * -1.0

    def inner(self, other: "FockState") -> float:
        total = 0.0
        for c1, w1 in self.terms:
            for c2, w2 in other.terms:
                if len(w1) != len(w2):
                    continue
                if not w1:
                    total += c1 * c2
                    continue
                G = np.array([[u @ v for v in w2] for u in w1])
                total += c1 * c2 * permanent(G) / math.factorial(len(w1))
        return total

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def sector_tensors(self, basis: np.ndarray) -> dict:
        """Dense symmetric tensors per particle number in an orthonormal frame."""
        out: dict = {}
        for c, w in self.terms:
            p = len(w)
            coords = [basis.T @ u for u in w]
            T = np.array(c)
            for x in coords:
                T = np.multiply.outer(T, x)
            out[p] = out.get(p, 0) + T
        for p, T in out.items():
            if p > 1:
                perms = list(itertools.permutations(range(p)))
                out[p] = sum(np.transpose(T, q) for q in perms) / len(perms)
        return out


def as_state(v) -> FockState:
    if isinstance(v, FockState):
        return v
    if isinstance(v, FockVector):
        return v.to_state()
    return FockState.word([np.asarray(v, float)])


def difference_norm(x: FockState, y: FockState) -> tuple[float, float]:
    """(|x - y|, |x|) computed on dense tensors over the span of all words.

    Working in an orthonormal frame of the words avoids the cancellation of
    expanding |x|^2 + |y|^2 - 2<x, y>.
    """
    vecs = [u for _, w in x.terms + y.terms for u in w]
    if vecs:
        V = np.array(vecs).T
        U, sv, _ = np.linalg.svd(V, full_matrices=False)
        Q = U[:, sv > 1e-14 * max(sv[0], 1e-300)]
    else:
        Q = np.zeros((x.dim, 0))
    tx, ty = x.sector_tensors(Q), y.sector_tensors(Q)
    diff2 = ref2 = 0.0
    for p in set(tx) | set(ty):
        a = tx.get(p, 0)
        b = ty.get(p, 0)
        diff2 += float(np.sum((np.asarray(a) - np.asarray(b)) ** 2))
        ref2 += float(np.sum(np.asarray(a) ** 2))
    return math.sqrt(diff2), math.sqrt(ref2)


# ------------------------------------------------------- tensors and Ŝ


def sym_project(v: np.ndarray, P_max: int = 6) -> tuple[np.ndarray, FockVector]:
    """Symmetrize a p-particle tensor; returns the tensor and its coordinates."""
    v = np.asarray(v, dtype=float)
    p = v.ndim
    if p > P_max:
        raise ParticleOverflow(f"{p} particles exceed the budget {P_max}")
    perms = list(itertools.permutations(range(p)))
    S = sum(np.transpose(v, q) for q in perms) / len(perms) if p > 1 else v.copy()
    coords: dict = {}
    for J in zip(*np.nonzero(v)) if p else [()]:
        key = tuple(sorted(int(j) for j in J))
        coords[key] = coords.get(key, 0.0) + float(v[J] if p else v)
    dim = v.shape[0] if p else 0
    return S, FockVector(dim, coords)


def contract_tensors(C: np.ndarray, V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Raw contraction sum_{a,b} C(v_a, w_b) (V without a) x (W without b)."""
    p, q = V.ndim, W.ndim
    if p == 0 or q == 0:
        return np.zeros(())
    out = 0
    for a in range(p):
        for b in range(q):
            Va = np.moveaxis(V, a, -1)
            Wb = np.moveaxis(W, b, 0)
            out = out + np.tensordot(Va @ C, Wb, axes=([p - 1], [0]))
    return out


def lift_contraction(C: np.ndarray, v, w) -> list:
    """Ĉ on S(v) x S(w): list of (coef, left word, right word)."""
    out = []
    for c1, w1 in as_state(v).terms:
        for c2, w2 in as_state(w).terms:
            if not w1 or not w2:
                continue
            for a, u in enumerate(w1):
                Cu = u @ C
                for b, z in enumerate(w2):
                    out.append((c1 * c2 * float(Cu @ z), w1[:a] + w1[a + 1:], w2[:b] + w2[b + 1:]))
    return out


def lift_rho1(g: MobiusMatrix, t: Truncation, rho: np.ndarray | None = None):
    """Return the map v -> rho(g)^{x p} v on FockState values."""
    M = op_rho(g, t) if rho is None else rho

    def apply(v) -> FockState:
        s = as_state(v)
        return FockState(s.dim, [(c, tuple(M @ u for u in w)) for c, w in s.terms])

    return apply


# ------------------------------------------------------------- products


@dataclass
class ProductContext:
    """Caches op_rho and pairwise contraction matrices for one configuration."""

    elements: tuple
    trunc: Truncation
    rhos: list = field(default_factory=list)
    contractions: dict = field(default_factory=dict)

    def rho(self, i: int) -> np.ndarray:
        while len(self.rhos) <= i:
            self.rhos.append(None)
        if self.rhos[i] is None:
            self.rhos[i] = op_rho(self.elements[i], self.trunc)
        return self.rhos[i]

    def contraction(self, i: int, j: int) -> np.ndarray:
        if (i, j) not in self.contractions:
            self.contractions[(i, j)] = contraction_general(self.elements[i], self.elements[j], self.trunc).matrix
        return self.contractions[(i, j)]


def _config_elements(config) -> tuple:
    if isinstance(config, DiskConfig):
        if not config.strict:
            raise NonStrictConfig("configuration closures are not pairwise disjoint")
        return config.elements
    elems = tuple(config)
    if elems:
        cfg = is_CE_config(elems)
        if not cfg.strict:
            raise NonStrictConfig("configuration closures are not pairwise disjoint")
    return elems


def product_rho(config, inputs: Sequence, t: Truncation, P_max: int = 6, twist: bool = False,
                ctx: ProductContext | None = None) -> FockState:
    """S o (rho1(g_1) x ... x rho1(g_n)) o exp(sum_{i>j} Ĉ_{g_i,g_j}).

    With ``twist`` the product is conjugated by sqrt(p!) on each p-particle
    sector.
    """
    elems = _config_elements(config)
    n = len(elems)
    if len(inputs) != n:
        raise ValueError(f"arity {n} configuration got {len(inputs)} inputs")
    if n == 0:
        return FockState.vacuum(t.size)
    states = [as_state(v) for v in inputs]
    if sum(s.max_particles() for s in states) > P_max:
        raise ParticleOverflow("total particle number exceeds the budget")
    ctx = ctx or ProductContext(tuple(elems), t)
    pairs = [(i, j) for i in range(n) for j in range(i)]
    out = []
    for combo in itertools.product(*[s.terms for s in states]):
        coef0 = math.prod(c for c, _ in combo)
        words = [w for _, w in combo]
        if twist:
            coef0 /= math.prod(math.sqrt(math.factorial(len(w))) for w in words)
        table = {}
        for i, j in pairs:
            if words[i] and words[j]:
                C = ctx.contraction(i, j)
                table[(i, j)] = np.array([[u @ C @ z for z in words[j]] for u in words[i]])
        start = tuple(tuple(range(len(w))) for w in words)
        acc = {start: 1.0}
        cur = {start: 1.0}
        k = 0
        while cur:
            k += 1
            nxt: dict = {}
            for key, c in cur.items():
                for (i, j), tab in table.items():
                    for a in key[i]:
                        for b in key[j]:
                            new = list(key)
                            new[i] = tuple(x for x in key[i] if x != a)
                            new[j] = tuple(x for x in key[j] if x != b)
                            new = tuple(new)
                            nxt[new] = nxt.get(new, 0.0) + c * tab[a, b] / k
            for key, c in nxt.items():
                acc[key] = acc.get(key, 0.0) + c
            cur = nxt
        images: dict = {}
        for key, c in acc.items():
            vecs = []
            for i, rem in enumerate(key):
                for a in rem:
                    if (i, a) not in images:
                        images[(i, a)] = ctx.rho(i) @ words[i][a]
                    vecs.append(images[(i, a)])
            q = len(vecs)
            scale = math.sqrt(math.factorial(q)) if twist else 1.0
            out.append((coef0 * c * scale, tuple(vecs)))
    return FockState(t.size, out)


def psi_twist_product(config, inputs, t: Truncation, P_max: int = 6, ctx=None) -> FockState:
    return product_rho(config, inputs, t, P_max, twist=True, ctx=ctx)


def vacuum_expectation(config, inputs, t: Truncation, P_max: int = 6, twist: bool = False,
                       ctx: ProductContext | None = None) -> float:
    return product_rho(config, inputs, t, P_max, twist, ctx).vacuum_coefficient()


def perfect_matchings(items: Sequence[int]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k in range(len(rest)):
        for m in perfect_matchings(rest[:k] + rest[k + 1:]):
            yield [(first, rest[k])] + m


def npoint_wick_oracle(config, phis: Sequence[np.ndarray], t: Truncation, raise_on_odd: bool = False,
                       ctx: ProductContext | None = None) -> float:
    """Sum over perfect matchings of products of pairwise contractions."""
    elems = _config_elements(config)
    n = len(elems)
    if n % 2:
        if raise_on_odd:
            raise OddArityZero("odd number of insertions")
        return 0.0
    total = 0.0
    cache: dict = {}
    for m in perfect_matchings(list(range(n))):
        term = 1.0
        for i, j in m:
            if (i, j) not in cache:
                C = contraction_general(elems[i], elems[j], t).matrix
                cache[(i, j)] = float(phis[i] @ C @ phis[j])
            term *= cache[(i, j)]
        total += term
    return total


# -------------------------------------------------------- operad checks


def compose_config(outer: Sequence[MobiusMatrix], inner: Sequence[MobiusMatrix], slot: int) -> tuple:
    """Partial composition: replace outer[slot] by outer[slot] o inner[k]."""
    f = outer[slot]
    return tuple(outer[:slot]) + tuple(compose(f, g) for g in inner) + tuple(outer[slot + 1:])


def operad_check(outer: Sequence[MobiusMatrix], inner: Sequence[MobiusMatrix], slot: int,
                 outer_inputs: Sequence, inner_inputs: Sequence, t: Truncation, P_max: int = 6,
                 twist: bool = False) -> float:
    """Relative gap between the composed product and the nested products.

    ``outer_inputs`` has one entry per outer slot other than ``slot``.
    """
    composed = compose_config(outer, inner, slot)
    ins = list(outer_inputs[:slot]) + list(inner_inputs) + list(outer_inputs[slot:])
    lhs = product_rho(composed, ins, t, P_max, twist)
    mid = product_rho(inner, inner_inputs, t, P_max, twist) if inner else FockState.vacuum(t.size)
    nested_inputs = list(outer_inputs[:slot]) + [mid] + list(outer_inputs[slot:])
    rhs = product_rho(outer, nested_inputs, t, P_max, twist)
    diff, ref = difference_norm(lhs, rhs)
    return diff / max(ref, 1e-300)


# ------------------------------------------------------------ sphere state


def _distance_outside(g: MobiusMatrix, y) -> float:
    """|g^{-1}(y)|, i.e. > 1 exactly when y is outside the closed image."""
    x, _ = act(g.inverse(), y)
    if is_inf(x):
        return math.inf
    return float(np.linalg.norm(x))


def _sphere_samples(d: int, budget: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points pushed onto S^d through the Gaussian quantile."""
    sob = qmc.Sobol(d + 1, scramble=True, seed=seed)
    raw = sob.random_base2(int(math.ceil(math.log2(budget))))[:budget]
    Z = ndtri(np.clip(raw, 1e-12, 1 - 1e-12))
    return Z / np.linalg.norm(Z, axis=1)[:, None]


def free_point_candidates(elements: Sequence[MobiusMatrix], d: int, budget: int = 10_000, seed: int = 0,
                          margin: float = 1e-3, keep: int = 32) -> list:
    """Points of S^d outside every closed image, best first by min_i |f_i^{-1}(y)|.

    Infinity is always tried first; sampled points follow.
    """
    scored = []
    inf_score = min(_distance_outside(g, INF) for g in elements)
    if inf_score > 1 + margin:
        scored.append((inf_score, INF))
    Z = _sphere_samples(d, budget, seed)
    Z = Z[Z[:, -1] < 1 - 1e-12]
    Y = Z[:, :-1] / (1 - Z[:, -1])[:, None]
    scores = np.full(len(Y), np.inf)
    for g in elements:
        X, _ = act_many(g.inverse(), Y)
        r = np.linalg.norm(X, axis=1)
        scores = np.minimum(scores, np.where(np.isnan(r), np.inf, r))
    pts = [(float(sc), y) for sc, y in zip(scores, Y) if sc > 1 + margin]
    pts.sort(key=lambda p: -p[0])
    scored.extend(pts[:keep])
    if not scored:
        raise NoFreePoint("no sampled point lies outside every closed image")
    return scored


def find_free_point(elements: Sequence[MobiusMatrix], d: int, budget: int = 10_000, seed: int = 0,
                    margin: float = 1e-3):
    """Best free point by score; see ``free_point_candidates``."""
    if not elements:
        return INF, math.inf
    score, y = free_point_candidates(elements, d, budget, seed, margin, keep=1)[0]
    return y, score


def transport_to_disk(elements: Sequence[MobiusMatrix], x0, margin: float = 0.05) -> tuple:
    """Send x0 to infinity, recentre the images and shrink them into D.

    Returns (moved elements, transport, resolution) where resolution is the
    smallest image radius over the enclosing radius.
    """
    d = elements[0].d
    e1 = np.zeros(d)
    e1[0] = 1.0
    if is_inf(x0):
        gamma = dilation(1.0, d)
    else:
        gamma = special_conformal(e1) @ translation(e1 - np.asarray(x0, float))
    balls = []
    for g in elements:
        b = image_ball(gamma @ g)
        if b.kind != "ball":
            raise NoFreePoint("transported image is not a bounded ball")
        balls.append(b)
    lo = np.min([b.center - b.radius for b in balls], axis=0)
    hi = np.max([b.center + b.radius for b in balls], axis=0)
    mid = (lo + hi) / 2
    reach = max(float(np.linalg.norm(b.center - mid)) + b.radius for b in balls)
    gamma = dilation(1.0 / (reach * (1 + margin)), d) @ translation(-mid) @ gamma
    resolution = min(b.radius for b in balls) / reach
    return tuple(gamma @ g for g in elements), gamma, resolution


@dataclass(frozen=True)
class SphereResult:
    value: float
    free_point: object
    score: float
    transported: tuple
    mode: str


def sphere_state(elements: Sequence[MobiusMatrix], inputs: Sequence, t: Truncation, P_max: int = 6,
                 mode: str = "auto", seed: int = 0, margin: float = 0.05, budget: int = 10_000) -> SphereResult:
    """Vacuum expectation of a configuration of disks on the sphere.

    ``mode="auto"`` evaluates directly when the configuration already sits
    strictly inside D; ``mode="transport"`` always moves a free point to
    infinity first.
    """
    elements = tuple(elements)
    if not elements:
        return SphereResult(1.0, None, math.inf, (), "empty")
    d = elements[0].d
    if mode == "auto":
        try:
            cfg = is_CE_config(elements)
            if cfg.strict and all(np.linalg.norm(b.center) + b.radius < 1 for b in cfg.balls):
                return SphereResult(vacuum_expectation(cfg, inputs, t, P_max), None, math.inf, elements, "direct")
        except Exception:
            pass
    best = None
    for score, y in free_point_candidates(elements, d, budget, seed):
        try:
            moved, _, res = transport_to_disk(elements, y, margin)
        except NoFreePoint:
            continue
        if best is None or res > best[0]:
            best = (res, y, score, moved)
    if best is None:
        raise NoFreePoint("no candidate point gives a bounded transported configuration")
    _, x0, score, moved = best
    value = vacuum_expectation(moved, inputs, t, P_max)
    return SphereResult(value, x0, score, moved, "transport")


# ----------------------------------------------------------- radical probe


def probe_value(C: np.ndarray, word: Sequence[np.ndarray]) -> float:
    """Best two-point pairing of S(word) against a unit probe in the other slot.

    The probe S(C v_1 x ... x C v_p) turns the vacuum component into the
    permanent of the Gram matrix of the C v_b, which is positive whenever
    those vectors are nonzero.
    """
    p = len(word)
    if p == 0:
        return 1.0
    ws = [C @ v for v in word]
    G = np.array([[a @ b for b in ws] for a in ws])
    val = permanent(G)
    # |<1, rho(w, v)>| / |w| with |w|^2 = perm(G) / p!
    return math.sqrt(max(val, 0.0) * math.factorial(p))


def radical_probe_2pt(v, pairs: Sequence[tuple], t: Truncation, probes: Sequence | None = None) -> float:
    """max over pairs (g1, g2) and probes w of |<1, rho_{g1,g2}(w, v)>|, |w| = 1.

    Without explicit probes the optimal word-shaped probe described in
    ``probe_value`` is used for each word of v.
    """
    state = as_state(v)
    best = 0.0
    for g1, g2 in pairs:
        C = contraction_general(g1, g2, t).matrix
        if probes is None:
            if len(state.terms) == 1:
                c, w = state.terms[0]
                best = max(best, abs(c) * probe_value(C, w))
                continue
            cands = [FockState.word([C @ u for u in w]) for _, w in state.terms]
        else:
            cands = [as_state(w) for w in probes]
        for w in cands:
            nw = w.norm()
            if nw == 0:
                continue
            val = vacuum_expectation([g1, g2], [w * (1 / nw), state], t, P_max=2 * max(state.max_particles(), 1))
            best = max(best, abs(val))
    return best
