"""Command line front end: verification suite, norm sweeps, correlators."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import click
import numpy as np

from . import __version__
from . import contraction as ct
from . import fock as fk
from . import harmonic as hm
from . import mobius as mb
from . import rkhs
from .errors import ConfDiskError, NoFreePoint, UnsupportedDimension

SWEEP_SCHEMA = "confdisk-sweep v1"
SWEEP_COLUMNS = ["d", "sigma", "N", "hs_norm", "lower_bound", "max_entry_ratio"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ConfDiskError):
    pass


# ----------------------------------------------------------------- config


@dataclass
class RunConfig:
    d: int = 3
    N_max: int = 16
    P_max: int = 6
    tol: float = 1e-9
    seed: int = 0
    out: str | None = None
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if not isinstance(self.d, int) or self.d < 3:
            raise UnsupportedDimension(f"field 'd': dimension must be an integer >= 3, got {self.d!r}")
        if self.N_max < 0 or self.P_max < 0:
            raise UsageError("fields 'N_max' and 'P_max' must be non-negative")
        if not self.tol > 0:
            raise UsageError("field 'tol' must be positive")
        return self

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"config parse error at line {e.lineno}, column {e.colno}: {e.msg}") from e
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise UsageError(f"unknown config field(s): {', '.join(unknown)}")
        merged = dataclasses.asdict(base or cls())
        merged.update(obj)
        types = {"d": int, "N_max": int, "P_max": int, "seed": int}
        for name, tp in types.items():
            if not isinstance(merged[name], tp) or isinstance(merged[name], bool):
                raise UsageError(f"field '{name}' must be an integer")
        return cls(**merged)


def _load_config(ctx_obj: dict, path: str | None) -> RunConfig:
    cfg = RunConfig(**ctx_obj)
    if path:
        with open(path) as fh:
            cfg = RunConfig.from_json(fh.read(), cfg)
    return cfg.validate()


# ----------------------------------------------------------------- reports


@dataclass
class Record:
    name: str
    anchor: str
    value: float
    bound: float
    passed: bool


def environment_stamp() -> dict:
    return {
        "confdisk": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


def report_json(suite: str, records: list, cfg: RunConfig) -> dict:
    return {
        "suite": suite,
        "config": dataclasses.asdict(cfg),
        "records": [dataclasses.asdict(r) for r in records],
        "passed": all(r.passed for r in records),
        "environment": environment_stamp(),
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(type(o).__name__)


# ------------------------------------------------------------ verify checks


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def check_group_identities(cfg: RunConfig, rng, cases: int = 200) -> list:
    d = cfg.d
    coc = dist = gid = 0.0
    for _ in range(cases):
        g, h = mb.random_word(d, rng), mb.random_word(d, rng)
        x, y = rng.uniform(-0.5, 0.5, d), rng.uniform(-0.5, 0.5, d)
        hx, jh = mb.act(h, x)
        _, jg_hx = mb.act(g, hx)
        _, jgh = mb.act(g @ h, x)
        coc = max(coc, _rel(jg_hx * jh, jgh))
        gx, jx = mb.act(g, x)
        gy, jy = mb.act(g, y)
        dist = max(dist, _rel(jx * jy * np.sum((gx - gy) ** 2), np.sum((x - y) ** 2)))
        a = mb.random_G(d, rng)
        ax, jax = mb.act(a, x)
        ay, jay = mb.act(a, y)
        lhs = 1 - 2 * ax @ ay + (ax @ ax) * (ay @ ay)
        rhs = (1 - 2 * x @ y + (x @ x) * (y @ y)) / (jax * jay)
        gid = max(gid, _rel(lhs, rhs))
    tol = 1e-8
    return [
        Record("cocycle law", "cocycle law for the lift factor", coc, tol, coc < tol),
        Record("distance identity", "chordal distance rescaling", dist, tol, dist < tol),
        Record("ball-automorphism identity", "kernel denominator invariance under G", gid, tol, gid < tol),
    ]


def check_fisher_factor(cfg: RunConfig, max_degree: int = 6) -> list:
    """The zonal polynomial at e1 reproduces itself: its H norm^2 is C_N(1).

    Its Fisher norm is computed exactly, so the conversion factor is tested
    without going through ``h_inner``.
    """
    bad = 0
    for n in range(max_degree + 1):
        z = hm.zonal_gegenbauer_poly(n, cfg.d)
        if hm.fisher_inner(z, z) != hm.fisher_h_factor(cfg.d, n) * hm.gegenbauer_at_one(n, cfg.d):
            bad += 1
    return [Record("Fisher/H factor (exact)", "Fisher and H products differ by 2^m (alpha)_m", bad, 0, bad == 0)]


def check_kernel(cfg: RunConfig, rng) -> list:
    t = rkhs.Truncation(cfg.d, cfg.N_max)
    worst = 0.0
    for _ in range(5):
        a, b = rng.uniform(-0.3, 0.3, cfg.d), rng.uniform(-0.3, 0.3, cfg.d)
        partial = float(rkhs.e_vector(a, t) @ rkhs.e_vector(b, t))
        tail = math.sqrt(rkhs.e_tail_sq(a @ a, cfg.d, cfg.N_max) * rkhs.e_tail_sq(b @ b, cfg.d, cfg.N_max))
        worst = max(worst, abs(partial - rkhs.kernel(a, b)) / (tail + 1e-15))
    return [Record("kernel reproduction", "reproducing kernel closed form", worst, 1.0, worst <= 1.0)]


def check_trace(cfg: RunConfig) -> list:
    r, N = 0.5, 200
    err = abs(rkhs.trace_partial(r, cfg.d, N) - rkhs.trace_closed(r, cfg.d))
    tail = sum(hm.dim_harm(cfg.d, n) * r ** (n + (cfg.d - 2) / 2) for n in range(N + 1, N + 400))
    return [Record("dilation trace", "trace of the dilation operator", err, tail + 1e-12, err <= tail + 1e-12)]


def check_rho(cfg: RunConfig, rng) -> list:
    t = rkhs.Truncation(cfg.d, min(cfg.N_max, 12))
    worst = 0.0
    for _ in range(5):
        g = mb.random_S(cfg.d, rng)
        xs = [rng.standard_normal(cfg.d) for _ in range(3)]
        xs = [0.28 * x / np.linalg.norm(x) for x in xs]
        worst = max(worst, rkhs.validate_rho(g, t, xs).max_ratio)
    return [Record("rho validation", "monoid action on reproducing vectors", worst, 1.5, worst <= 1.5)]


def check_contraction(cfg: RunConfig) -> list:
    t = rkhs.Truncation(cfg.d, 6)
    a, r = np.array([0.5] + [0.0] * (cfg.d - 1)), 0.2
    b, s = np.array([-0.4] + [0.1] * (cfg.d - 1)), 0.25
    core = ct.contraction_core(a, r, b, s, t).matrix
    green = ct.contraction_green_matrix(a, r, b, s, t, 6)
    deg = t.degrees()
    mask = (deg[:, None] + deg[None, :]) <= 6
    gap = float(np.max(np.abs(core - green)[mask]))
    return [Record("contraction dual path", "Wick contraction from the Green function", gap, 1e-10, gap < 1e-10)]


def _two_disk(d: int):
    e = np.zeros(d)
    e[0] = 0.5
    return mb.translation(e) @ mb.dilation(0.2, d), mb.translation(-e) @ mb.dilation(0.3, d)


def check_fock(cfg: RunConfig, rng) -> list:
    d = cfg.d
    t = rkhs.Truncation(d, min(cfg.N_max, 8))
    g1, g2 = _two_disk(d)
    g3 = mb.translation([0.0, 0.5] + [0.0] * (d - 2)) @ mb.dilation(0.15, d)
    g4 = mb.translation([0.0, -0.5] + [0.1] * (d - 2)) @ mb.dilation(0.15, d)
    phis = [rng.standard_normal(t.size) * 0.5 ** t.degrees() for _ in range(4)]
    cfgs = [g1, g2, g3, g4]
    val = fk.vacuum_expectation(cfgs, phis, t, cfg.P_max)
    oracle = fk.npoint_wick_oracle(cfgs, phis, t)
    gap = _rel(val, oracle)
    v = fk.FockState.word([phis[0], phis[1]])
    unit, ref = fk.difference_norm(fk.product_rho([mb.identity(d)], [v], t, cfg.P_max), v)
    empty = fk.sphere_state([], [], t).value
    return [
        Record("Wick duality", "vacuum expectation as a sum over pairings", gap, 1e-9, gap < 1e-9),
        Record("unit law", "identity disk acts as the identity", unit / ref, 1e-9, unit / ref < 1e-9),
        Record("empty sphere state", "sphere state of the empty configuration", empty, 1.0, empty == 1.0),
    ]


def run_verify(cfg: RunConfig) -> list:
    rng = np.random.default_rng(cfg.seed)
    recs = []
    recs += check_group_identities(cfg, rng)
    recs += check_fisher_factor(cfg)
    recs += check_kernel(cfg, rng)
    recs += check_trace(cfg)
    recs += check_rho(cfg, rng)
    recs += check_contraction(cfg)
    recs += check_fock(cfg, rng)
    return recs


# ------------------------------------------------------------ query files


def parse_word(spec, d: int) -> mb.MobiusMatrix:
    """A word is a list of generator specs composed left to right, or a raw {"d", "rows"} matrix."""
    if isinstance(spec, dict) and "rows" in spec:
        g = mb.MobiusMatrix.from_json(spec)
        if g.d != d:
            raise UsageError(f"matrix has d={g.d}, run uses d={d}")
        return g
    if isinstance(spec, dict):
        spec = [spec]
    g = mb.identity(d)
    for k, gen in enumerate(spec):
        try:
            g = g @ mb.make_generator(gen["kind"], d, gen.get("param"))
        except KeyError as e:
            raise UsageError(f"generator {k}: missing field {e}") from e
    return g


def parse_input(spec, t: rkhs.Truncation):
    """null -> vacuum; {"basis": [i, ...], "coef": c} multiset; {"vector": [...]}; {"point": x} for E_x."""
    if spec is None:
        return fk.FockState.vacuum(t.size)
    if "basis" in spec:
        return fk.FockVector.basis_vector(t.size, spec["basis"]) * float(spec.get("coef", 1.0))
    if "vector" in spec:
        v = np.zeros(t.size)
        raw = np.asarray(spec["vector"], float)
        v[: raw.size] = raw
        return fk.FockState.word([v])
    if "point" in spec:
        return fk.FockState.word([rkhs.e_vector(np.asarray(spec["point"], float), t)])
    raise UsageError(f"unrecognized input spec {spec!r}")


def _single_particle(x) -> np.ndarray | None:
    s = fk.as_state(x)
    if len(s.terms) == 1 and len(s.terms[0][1]) == 1:
        c, w = s.terms[0]
        return c * w[0]
    return None


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def run_npoint(cfg: RunConfig, query: dict) -> dict:
    t = rkhs.Truncation(cfg.d, cfg.N_max)
    results = []
    for q in query.get("queries", [query]):
        elems = [parse_word(w, cfg.d) for w in q.get("config", [])]
        inputs = [parse_input(s, t) for s in q.get("inputs", [None] * len(elems))]
        value = fk.vacuum_expectation(elems, inputs, t, cfg.P_max, twist=bool(q.get("twist", False)))
        row = {"value": value, "twist": bool(q.get("twist", False)), "config_hash": config_hash(q)}
        singles = [_single_particle(x) for x in inputs]
        if all(s is not None for s in singles):
            oracle = fk.npoint_wick_oracle(elems, singles, t)
            row.update(oracle=oracle, gap=abs(value - oracle))
        results.append(row)
    return {"d": cfg.d, "N_max": cfg.N_max, "P_max": cfg.P_max, "results": results}


def run_sphere(cfg: RunConfig, spec: dict, probes: int) -> dict:
    t = rkhs.Truncation(cfg.d, cfg.N_max)
    elems = [parse_word(w, cfg.d) for w in spec.get("config", [])]
    inputs = [parse_input(s, t) for s in spec.get("inputs", [None] * len(elems))]
    res = fk.sphere_state(elems, inputs, t, cfg.P_max, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    residuals = []
    if elems:
        for k in range(probes):
            gamma = mb.random_conformal(cfg.d, rng)
            moved = [gamma @ f for f in elems]
            other = fk.sphere_state(moved, inputs, t, cfg.P_max, mode="transport", seed=cfg.seed + k + 1)
            residuals.append(abs(other.value - res.value) / max(abs(res.value), 1e-300))
    return {
        "d": cfg.d,
        "N_max": cfg.N_max,
        "value": res.value,
        "mode": res.mode,
        "free_point": None if res.free_point is None or mb.is_inf(res.free_point) else np.asarray(res.free_point).tolist(),
        "residuals": residuals,
        "max_residual": max(residuals, default=0.0),
        "config_hash": config_hash(spec),
    }


def sweep_csv(rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# {SWEEP_SCHEMA}\n")
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(r[k])) if isinstance(r[k], float) else r[k]) for k in SWEEP_COLUMNS})
    return buf.getvalue()


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


# ------------------------------------------------------------------- click


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON file; its fields override the flags.")(f)
    f = click.option("--out", default=None, help="Write output here instead of stdout.")(f)
    f = click.option("--seed", default=0, show_default=True, type=int)(f)
    f = click.option("--tol", default=1e-9, show_default=True, type=float)(f)
    f = click.option("--particles", "P_max", default=6, show_default=True, type=int)(f)
    f = click.option("--degree", "N_max", default=None, type=int, help="One-particle degree cutoff.")(f)
    f = click.option("--dim", "d", default=3, show_default=True, type=int)(f)
    return f


def _base(d, N_max, P_max, tol, seed, out) -> dict:
    if N_max is None:
        N_max = 16 if d == 3 else 12
    return dict(d=d, N_max=N_max, P_max=P_max, tol=tol, seed=seed, out=out)


def _guard(fn):
    """Map library and usage errors onto exit codes."""
    try:
        return fn()
    except (UnsupportedDimension, UsageError, click.BadParameter, FileNotFoundError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    except NoFreePoint as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_FAIL)


@click.group()
@click.version_option(__version__)
def main():
    """Conformal disk operad numerics."""


@main.command()
@_common
def verify(d, N_max, P_max, tol, seed, out, config_path):
    """Run the verification suite and print a JSON report."""

    def go():
        cfg = _load_config(_base(d, N_max, P_max, tol, seed, out), config_path)
        recs = run_verify(cfg)
        rep = report_json("verify", recs, cfg)
        _emit(json.dumps(rep, indent=2, sort_keys=True, default=_json_default) + "\n", cfg.out)
        for r in recs:
            if not r.passed:
                click.echo(f"FAIL {r.name} [{r.anchor}]: {r.value:.3e} vs {r.bound:.3e}", err=True)
        return rep["passed"]

    sys.exit(EXIT_OK if _guard(go) else EXIT_FAIL)


@main.command("norm-sweep")
@_common
@click.option("--sigmas", default="0.5,0.9,0.99,1.0", show_default=True)
@click.option("--Ns", "ns", default="20,40,60,80", show_default=True)
@click.option("--workers", default=4, show_default=True, type=int)
def norm_sweep(d, N_max, P_max, tol, seed, out, config_path, sigmas, ns, workers):
    """Hilbert-Schmidt norms of truncated contractions over a sigma x N grid (CSV)."""

    def go():
        cfg = _load_config(_base(d, N_max, P_max, tol, seed, out), config_path)
        sg = cfg.params.get("sigmas", _floats(sigmas))
        Ns = [int(x) for x in cfg.params.get("Ns", _floats(ns))]
        if not sg or not Ns:
            raise UsageError("sigma and N grids must be nonempty")
        grid = [(s, n) for s in sg for n in Ns]
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            parts = list(pool.map(lambda p: ct.boundedness_sweep([p[0]], [p[1]], cfg.d), grid))
        rows = sorted((r for part in parts for r in part), key=lambda r: (r["sigma"], r["N"]))
        _emit(sweep_csv(rows), cfg.out)
        return True

    _guard(go)
    sys.exit(EXIT_OK)


@main.command()
@_common
@click.argument("query_file", type=click.Path(exists=True, dir_okay=False))
def npoint(d, N_max, P_max, tol, seed, out, config_path, query_file):
    """Vacuum expectations for the configurations in QUERY_FILE (JSON)."""

    def go():
        cfg = _load_config(_base(d, N_max, P_max, tol, seed, out), config_path)
        try:
            with open(query_file) as fh:
                query = json.load(fh)
        except json.JSONDecodeError as e:
            raise UsageError(f"{query_file}: line {e.lineno}, column {e.colno}: {e.msg}") from e
        res = run_npoint(cfg, query)
        _emit(json.dumps(res, indent=2, sort_keys=True, default=_json_default) + "\n", cfg.out)
        return all(r.get("gap", 0.0) <= max(cfg.tol, 1e-9) * max(1.0, abs(r["value"])) for r in res["results"])

    sys.exit(EXIT_OK if _guard(go) else EXIT_FAIL)


@main.command()
@_common
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--probes", default=5, show_default=True, type=int, help="Random conformal transports to test.")
def sphere(d, N_max, P_max, tol, seed, out, config_path, config_file, probes):
    """Sphere state of the disk configuration in CONFIG_FILE plus invariance residuals."""

    def go():
        cfg = _load_config(_base(d, N_max, P_max, tol, seed, out), config_path)
        try:
            with open(config_file) as fh:
                spec = json.load(fh)
        except json.JSONDecodeError as e:
            raise UsageError(f"{config_file}: line {e.lineno}, column {e.colno}: {e.msg}") from e
        res = run_sphere(cfg, spec, probes)
        _emit(json.dumps(res, indent=2, sort_keys=True, default=_json_default) + "\n", cfg.out)
        return res["max_residual"] < max(cfg.tol, 1e-7)

    sys.exit(EXIT_OK if _guard(go) else EXIT_FAIL)


if __name__ == "__main__":
    main()
