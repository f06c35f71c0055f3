"""Conformal group of S^d as (d+2)x(d+2) matrices on R^{d+1,1}.

Coordinates are ordered (e_1, ..., e_d, e_+, e_-) with <e_+, e_-> = 1.  A point
x of R^d lifts to the null vector s0(x) = (x, -|x|^2/sqrt2, 1/sqrt2) and a
matrix g acts by g s0(x) = j_g(x) s0(g.x).  The conformal factor is 1/j_g.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import special_ortho_group

from .errors import (
    BoundaryTouching,
    ConfDiskError,
    DimensionMismatch,
    NonOrthogonalRotation,
    NonPositiveDilation,
    NotApplicable,
    NotInS,
    OutsideBigCell,
    OutsideDisk,
    OutsideDomain,
    PoleAtPoint,
    UnsupportedDimension,
)

TAU_GRP = 1e-10
TAU_NUM = 1e-9
TAU_GEO = 1e-9
TAU_FD = 1e-5
POLE_EPS = 1e-13
SQRT2 = math.sqrt(2.0)


class _Infinity:
    """The point at infinity, i.e. the class of e_+."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_inf(p) -> bool:
    return p is INF


def gram(d: int) -> np.ndarray:
    """Gram matrix of the signature (d+1,1) form in the null basis."""
    G = np.zeros((d + 2, d + 2))
    G[:d, :d] = np.eye(d)
    G[d, d + 1] = G[d + 1, d] = 1.0
    return G


def lift(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    v = np.empty(x.shape[:-1] + (d + 2,))
    v[..., :d] = x
    v[..., d] = -np.sum(x * x, axis=-1) / SQRT2
    v[..., d + 1] = 1.0 / SQRT2
    return v


@dataclass(frozen=True)
class MobiusMatrix:
    """Immutable group element; ``M`` preserves the Gram form."""

    M: np.ndarray
    d: int = field(default=0)

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 5:
            raise DimensionMismatch(f"bad matrix shape {M.shape}")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "d", M.shape[0] - 2)

    def __matmul__(self, other: "MobiusMatrix") -> "MobiusMatrix":
        return compose(self, other)

    def inverse(self) -> "MobiusMatrix":
        G = gram(self.d)
        return MobiusMatrix(G @ self.M.T @ G)

    def group_defect(self) -> float:
        G = gram(self.d)
        return float(np.max(np.abs(self.M.T @ G @ self.M - G)))

    def det(self) -> float:
        return float(np.linalg.det(self.M))

    def to_json(self) -> dict:
        return {"d": self.d, "rows": self.M.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MobiusMatrix":
        g = cls(np.array(obj["rows"], dtype=float))
        if g.d != int(obj["d"]):
            raise DimensionMismatch("row count does not match declared d")
        return g


def identity(d: int) -> MobiusMatrix:
    return MobiusMatrix(np.eye(d + 2))


def translation(a: Sequence[float]) -> MobiusMatrix:
    a = np.asarray(a, dtype=float)
    d = a.size
    M = np.eye(d + 2)
    M[:d, d + 1] = SQRT2 * a
    M[d, :d] = -SQRT2 * a
    M[d, d + 1] = -float(a @ a)
    return MobiusMatrix(M)


def dilation(lam: float, d: int) -> MobiusMatrix:
    if not lam > 0:
        raise NonPositiveDilation(f"dilation factor must be positive, got {lam}")
    M = np.eye(d + 2)
    M[d, d] = lam
    M[d + 1, d + 1] = 1.0 / lam
    return MobiusMatrix(M)


def rotation(R: np.ndarray) -> MobiusMatrix:
    R = np.asarray(R, dtype=float)
    d = R.shape[0]
    if R.shape != (d, d) or np.max(np.abs(R.T @ R - np.eye(d))) > TAU_GRP:
        raise NonOrthogonalRotation("rotation block is not orthogonal")
    if np.linalg.det(R) < 0:
        raise NonOrthogonalRotation("rotation block has determinant -1")
    M = np.eye(d + 2)
    M[:d, :d] = R
    return MobiusMatrix(M)


def special_conformal(c: Sequence[float]) -> MobiusMatrix:
    c = np.asarray(c, dtype=float)
    d = c.size
    M = np.eye(d + 2)
    M[:d, d] = SQRT2 * c
    M[d + 1, :d] = -SQRT2 * c
    M[d + 1, d] = -float(c @ c)
    return MobiusMatrix(M)


def inversion(d: int) -> MobiusMatrix:
    M = np.eye(d + 2)
    M[d:, d:] = [[0.0, -1.0], [-1.0, 0.0]]
    return MobiusMatrix(M)


def cayley(d: int) -> MobiusMatrix:
    """Cayley matrix: sends the upper half-space {x_d > 0} onto the unit ball."""
    M = np.eye(d + 2)
    s = 1.0 / SQRT2
    M[d - 1:, d - 1:] = [[0.0, -s, -s], [s, 0.5, -0.5], [s, -0.5, 0.5]]
    return MobiusMatrix(M)


def make_generator(kind: str, d: int, param=None) -> MobiusMatrix:
    """Build a generator by name.

    ``kind`` is one of Translation, Dilation, Rotation, SCT, InversionJ, Cayley.
    """
    if d < 3:
        raise UnsupportedDimension(f"d must be at least 3, got {d}")
    k = kind.lower()
    if k == "translation":
        p = np.zeros(d) if param is None else np.asarray(param, dtype=float)
        if p.size != d:
            raise DimensionMismatch("translation vector has wrong length")
        return translation(p)
    if k == "dilation":
        return dilation(float(param), d)
    if k == "rotation":
        R = np.asarray(param, dtype=float)
        if R.shape != (d, d):
            raise DimensionMismatch("rotation block has wrong shape")
        return rotation(R)
    if k in ("sct", "special_conformal"):
        p = np.asarray(param, dtype=float)
        if p.size != d:
            raise DimensionMismatch("special conformal vector has wrong length")
        return special_conformal(p)
    if k in ("inversionj", "inversion", "j"):
        return inversion(d)
    if k == "cayley":
        return cayley(d)
    raise ValueError(f"unknown generator kind {kind!r}")


def compose(g: MobiusMatrix, h: MobiusMatrix) -> MobiusMatrix:
    if g.d != h.d:
        raise DimensionMismatch(f"cannot compose d={g.d} with d={h.d}")
    return MobiusMatrix(g.M @ h.M)


def act(g: MobiusMatrix, p):
    """Image of a point and the scalar j_g(p).

    Returns ``(INF, 0.0)`` when the image is the point at infinity.  For
    ``p = INF`` the scalar is undefined and returned as nan.
    """
    d = g.d
    if is_inf(p):
        w = g.M[:, d]
        t = SQRT2 * w[d + 1]
        if abs(t) < POLE_EPS * max(1.0, float(np.max(np.abs(w)))):
            return INF, math.nan
        return w[:d] / t, math.nan
    x = np.asarray(p, dtype=float)
    if x.shape != (d,):
        raise DimensionMismatch(f"point has shape {x.shape}, expected ({d},)")
    v = g.M @ lift(x)
    j = SQRT2 * v[d + 1]
    if abs(j) < POLE_EPS:
        return INF, 0.0
    return v[:d] / j, float(j)


def act_many(g: MobiusMatrix, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized action on finite points; infinite images come back as nan rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = g.d
    V = lift(X) @ g.M.T
    j = SQRT2 * V[:, d + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = V[:, :d] / j[:, None]
    Y[np.abs(j) < POLE_EPS] = np.nan
    return Y, j


def conformal_factor(g: MobiusMatrix, x) -> float:
    y, j = act(g, x)
    if is_inf(y):
        raise PoleAtPoint(f"g sends {x} to infinity")
    return 1.0 / j


def numeric_jacobian(g: MobiusMatrix, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of the point action at x."""
    x = np.asarray(x, dtype=float)
    d = x.size
    E = np.eye(d) * h
    Yp, _ = act_many(g, x + E)
    Ym, _ = act_many(g, x - E)
    return ((Yp - Ym) / (2 * h)).T


# ----------------------------------------------------------------- geometry


@dataclass(frozen=True)
class BallRegion:
    """Image of the unit ball.

    ``kind`` is "ball" (interior of a sphere), "exterior" (complement of a
    closed ball, containing infinity) or "halfspace" {y : normal.y > offset}.
    """

    kind: str
    center: np.ndarray | None = None
    radius: float | None = None
    normal: np.ndarray | None = None
    offset: float | None = None

    def contains_closure(self, y, tol: float = 0.0) -> bool:
        """Membership in the closed region, with slack ``tol``."""
        if is_inf(y):
            return self.kind != "ball"
        y = np.asarray(y, dtype=float)
        if self.kind == "ball":
            return float(np.linalg.norm(y - self.center)) <= self.radius + tol
        if self.kind == "exterior":
            return float(np.linalg.norm(y - self.center)) >= self.radius - tol
        return float(self.normal @ y) >= self.offset - tol


def _boundary_samples(d: int) -> np.ndarray:
    pts = [np.eye(d)[i] * s for i in range(d) for s in (1.0, -1.0)]
    diag = np.ones(d) / math.sqrt(d)
    pts += [diag, -diag]
    return np.array(pts)


def image_ball(g: MobiusMatrix) -> BallRegion:
    """Fit the image of the unit sphere and decide which side is g(D)."""
    d = g.d
    X = _boundary_samples(d)
    Y, j = act_many(g, X)
    finite = np.all(np.isfinite(Y), axis=1)
    y0, j0 = act(g, np.zeros(d))
    radius = math.inf
    if finite.all():
        A = np.hstack([2 * Y, np.ones((len(Y), 1))])
        rhs = np.sum(Y * Y, axis=1)
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        c, k = sol[:d], sol[d]
        r2 = k + c @ c
        if r2 > 0:
            radius = math.sqrt(r2)
    if radius < 1.0 / TAU_GEO:
        resid = np.max(np.abs(np.linalg.norm(Y - c, axis=1) - radius))
        if resid > TAU_GEO * max(1.0, radius) * 1e3:
            raise ConfDiskError(f"sphere fit residual {resid:.3e} too large")
        inside = (not is_inf(y0)) and np.linalg.norm(y0 - c) < radius
        return BallRegion("ball" if inside else "exterior", center=c, radius=radius)
    # boundary passes through infinity: fit the hyperplane through finite images
    F = Y[finite]
    mu = F.mean(axis=0)
    _, _, vt = np.linalg.svd(F - mu)
    n = vt[-1]
    off = float(n @ mu)
    if is_inf(y0):
        raise ConfDiskError("centre of the ball maps to a boundary point at infinity")
    if n @ y0 < off:
        n, off = -n, -off
    return BallRegion("halfspace", normal=n, offset=off)


IN_G = "InG"
IN_S_NOT_G = "InSNotG"
NOT_IN_S = "NotInS"


def classify(g: MobiusMatrix) -> str:
    if g.det() < 0:
        return NOT_IN_S
    b = image_ball(g)
    if b.kind != "ball":
        return NOT_IN_S
    cn = float(np.linalg.norm(b.center))
    if cn < TAU_GEO and abs(b.radius - 1.0) < TAU_GEO:
        return IN_G
    if cn + b.radius <= 1.0 + TAU_GEO:
        return IN_S_NOT_G
    return NOT_IN_S


def ball_automorphism(p: Sequence[float]) -> MobiusMatrix:
    """Element of G sending p to 0 and 0 to -p."""
    p = np.asarray(p, dtype=float)
    n2 = float(p @ p)
    if n2 >= 1.0:
        raise OutsideDisk(f"point {p} is not inside the unit ball")
    gam = 1.0 / (1.0 - n2)
    d = p.size
    return dilation(gam, d) @ special_conformal(gam * p) @ translation(-p)


def decompose_S(g: MobiusMatrix) -> tuple[np.ndarray, float, MobiusMatrix]:
    """g = T(x0) D(r) h with h in G, for g in S but not in G."""
    cls = classify(g)
    if cls != IN_S_NOT_G:
        raise NotApplicable(f"decompose_S needs an element of S outside G, got {cls}")
    b = image_ball(g)
    x0, r = b.center.copy(), float(b.radius)
    h = dilation(1.0 / r, g.d) @ translation(-x0) @ g
    return x0, r, h


def translated_dilation_parts(g: MobiusMatrix) -> tuple[np.ndarray, float, MobiusMatrix]:
    """Like decompose_S but also accepts g in G (returning x0=0, r=1, h=g)."""
    cls = classify(g)
    if cls == IN_G:
        return np.zeros(g.d), 1.0, g
    if cls == NOT_IN_S:
        raise NotInS("element does not map the unit ball into itself")
    return decompose_S(g)


def decompose_interior(g: MobiusMatrix) -> tuple[MobiusMatrix, float, MobiusMatrix]:
    """g = h1 D(r) h2 with h1, h2 in G, when the closed image lies inside D."""
    cls = classify(g)
    if cls == NOT_IN_S:
        raise NotInS("element does not map the unit ball into itself")
    b = image_ball(g)
    cn = float(np.linalg.norm(b.center))
    if cn + b.radius >= 1.0 - TAU_GEO:
        raise BoundaryTouching("image ball is internally tangent to the unit sphere")
    d = g.d
    if cn < 1e-15:
        h1 = identity(d)
    else:
        u, v = cn - b.radius, cn + b.radius
        t = ((1 + u * v) - math.sqrt((1 - u * u) * (1 - v * v))) / (u + v)
        h1 = ball_automorphism(t * b.center / cn)
    moved = image_ball(h1 @ g)
    R = float(moved.radius)
    h2 = dilation(1.0 / R, d) @ h1 @ g
    return h1.inverse(), R, h2


def gauss_decompose(g: MobiusMatrix) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """g = T(b) D(lam) R~ K(c) on the big cell."""
    d = g.d
    y0, j0 = act(g, np.zeros(d))
    if is_inf(y0) or not j0 > 0:
        raise OutsideBigCell("g sends the origin to infinity or flips the null cone")
    b, lam = y0, 1.0 / j0
    h = (dilation(1.0 / lam, d) @ translation(-b) @ g).M
    R = h[:d, :d].copy()
    c = -h[d + 1, :d] / SQRT2
    if np.max(np.abs(R.T @ R - np.eye(d))) > 1e3 * TAU_GRP:
        raise OutsideBigCell("residual factor is not a rotation times SCT")
    rebuilt = translation(b) @ dilation(lam, d) @ rotation(_nearest_rotation(R)) @ special_conformal(c)
    if np.max(np.abs(rebuilt.M - g.M)) > TAU_GRP * max(1.0, float(np.max(np.abs(g.M)))):
        raise OutsideBigCell("factorization does not reproduce g")
    return b, lam, _nearest_rotation(R), c


def _nearest_rotation(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    return u @ vt


# --------------------------------------------------------------- configurations


@dataclass(frozen=True)
class DiskConfig:
    elements: tuple
    balls: tuple
    sigma: np.ndarray
    strict: bool

    @property
    def arity(self) -> int:
        return len(self.elements)


def is_CE_config(gs: Iterable[MobiusMatrix]) -> DiskConfig:
    gs = tuple(gs)
    balls = []
    for i, g in enumerate(gs):
        if classify(g) == NOT_IN_S:
            raise NotInS(f"element {i} does not map the unit ball into itself")
        balls.append(image_ball(g))
    n = len(gs)
    sigma = np.zeros((n, n))
    strict = all(float(np.linalg.norm(b.center)) + b.radius <= 1.0 + TAU_GEO for b in balls)
    for i in range(n):
        for k in range(i + 1, n):
            dist = float(np.linalg.norm(balls[i].center - balls[k].center))
            s = (balls[i].radius + balls[k].radius) / dist if dist > 0 else math.inf
            sigma[i, k] = sigma[k, i] = s
            if not s < 1.0:
                strict = False
    return DiskConfig(gs, tuple(balls), sigma, strict)


def hyperbolic_invariant(x, y, model: str = "disk") -> float:
    """Isometry invariant of the hyperbolic metric (squared-distance form)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = float(np.sum((x - y) ** 2))
    if model == "disk":
        nx, ny = float(x @ x), float(y @ y)
        if nx >= 1.0 or ny >= 1.0:
            raise OutsideDomain("points must lie in the open unit ball")
        return 4.0 * diff / ((1.0 - nx) * (1.0 - ny))
    if model == "halfspace":
        if x[-1] <= 0 or y[-1] <= 0:
            raise OutsideDomain("points must lie in the upper half-space")
        return diff / (x[-1] * y[-1])
    raise ValueError(f"unknown model {model!r}")


# ------------------------------------------------------------------ sampling


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    return special_ortho_group.rvs(d, random_state=rng)


def _ball_vector(d: int, rng: np.random.Generator, rmax: float) -> np.ndarray:
    v = rng.normal(size=d)
    return v / np.linalg.norm(v) * rmax * rng.uniform() ** (1.0 / d)


def random_word(d: int, rng: np.random.Generator, max_len: int = 6) -> MobiusMatrix:
    """Product of up to ``max_len`` random generators with bounded parameters."""
    g = identity(d)
    for _ in range(int(rng.integers(1, max_len + 1))):
        k = int(rng.integers(4))
        if k == 0:
            f = translation(_ball_vector(d, rng, 0.5))
        elif k == 1:
            f = dilation(float(rng.uniform(0.5, 2.0)), d)
        elif k == 2:
            f = rotation(random_rotation(d, rng))
        else:
            f = special_conformal(_ball_vector(d, rng, 0.5))
        g = g @ f
    return g


def random_G(d: int, rng: np.random.Generator, pmax: float = 0.5) -> MobiusMatrix:
    """Random ball automorphism: rotation times a hyperbolic translation."""
    return rotation(random_rotation(d, rng)) @ ball_automorphism(_ball_vector(d, rng, pmax))


def random_S(d: int, rng: np.random.Generator, interior: bool = False, tries: int = 10000) -> MobiusMatrix:
    """Random element of S obtained by filtering random words.

    Words are pre-composed with a random element of G (so the result is
    generic, never affine) and post-composed with a random similarity so
    that the filter accepts a useful fraction of them.
    """
    for _ in range(tries):
        w = random_word(d, rng) @ random_G(d, rng)
        b = image_ball(w)
        if b.kind != "ball":
            continue
        # move the image into the unit ball by an affine similarity, then test
        c, r = b.center, b.radius
        target_r = float(rng.uniform(0.25, 0.7))
        target_c = _ball_vector(d, rng, max(0.0, 0.95 - target_r))
        sim = translation(target_c) @ dilation(target_r / r, d) @ translation(-c)
        g = sim @ w
        cls = classify(g)
        if cls == IN_S_NOT_G:
            if interior:
                bb = image_ball(g)
                if np.linalg.norm(bb.center) + bb.radius > 1.0 - 1e-3:
                    continue
            return g
    raise RuntimeError("failed to sample an element of S")


def random_conformal(d: int, rng: np.random.Generator, with_inversion: bool = True) -> MobiusMatrix:
    """Random orientation-preserving conformal map of S^d (may move infinity)."""
    g = random_word(d, rng)
    if with_inversion and rng.uniform() < 0.5:
        # inversion composed with a reflection keeps det = +1
        refl = np.eye(d + 2)
        refl[0, 0] = -1.0
        g = g @ MobiusMatrix(refl @ inversion(d).M) @ translation(_ball_vector(d, rng, 0.5))
    return g
