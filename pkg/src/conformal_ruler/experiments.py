"""Configuration parsing and experiment runners behind the command line.

A run configuration (TOML or JSON) declares one backend, named regions and
rulers, and a list of experiments.  Each experiment returns a flat dict of
metrics; tolerances are checked generically by key suffix:

* ``<metric>_max``: ``metric <= bound``
* ``<metric>_min``: ``metric >= bound``
* ``<metric>_range``: ``lo <= metric <= hi``

Default tolerances come in two profiles.  ``desk`` holds the acceptance
bounds for desk-scale lattices; ``paper`` holds the precision reported for
large lattices and is expected to fail on small ones.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .cftmodel import CFTBackend, CFTCircle, CFTError, casini_huerta_estimate
from .crossratio import (
    CrossRatioError,
    EtaTable,
    all_keys,
    build_eta_table,
    circle_embed,
    complement_check,
    constant_c_check,
    decomposition_check,
    decomposition_keys,
    five_partition_check,
    interval_sites,
    verify_embedding,
)
from .edoracle import (
    DenseBackend,
    OracleError,
    pairstate_subsystems,
    statevector_from_gaussian,
    statevector_from_pairstate,
)
from .gaussian import (
    BdGModel,
    GaussianBackend,
    GaussianError,
    ground_state_covariance,
    load_covariance,
    random_pure_covariance,
)
from .lattice import (
    EMPTY,
    BulkMove,
    ConformalRuler,
    Lattice,
    LatticeError,
    Region,
    build_square_lattice,
    edge_strip_regions,
    region_from_rects,
    union,
    validate_ruler,
)
from .pairstates import (
    BondLayout,
    PairState,
    PairStateBackend,
    PairStateError,
    interval_entropy,
    arc,
    chord as ring_chord,
    solve_exotic_weights,
    solve_exotic_weights_dense,
    validity_grid,
)
from .ruler import (
    BackendCapabilityError,
    RulerError,
    bulk_a1_residual,
    combo_delta_I,
    deformation_residual,
    eta_J_pair,
    find_eta_K,
    forward_delta_i,
    genericity_gram,
    kd_combo,
    modular_commutator,
    ruler_1d,
    sigma_of_combo,
    solve_c_eta,
)

PROFILES = ("desk", "paper")


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str, kind: str = "config-parse"):
        self.key = key
        self.kind = kind
        super().__init__(f"{kind} at {key!r}: {message}")


# ---------------------------------------------------------------------------
# Loading


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), str(exc)) from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    except ValueError as exc:
        raise ConfigError(str(path), str(exc)) from None


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def experiment_rng(seed: int, name: str) -> np.random.Generator:
    """Generator depending only on the run seed and the experiment name."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


# ---------------------------------------------------------------------------
# Backends


@dataclass
class Context:
    """Parsed run: backend, lattice (if any), regions and rulers."""

    config: dict
    backend: Any
    kind: str
    lattice: Lattice | None = None
    n_sites: int = 0
    regions: dict[str, Region] = field(default_factory=dict)
    rulers: dict[str, ConformalRuler] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def region(self, spec, key: str) -> Region:
        return parse_region(spec, key, self)

    def ruler(self, name, key: str) -> ConformalRuler:
        if name not in self.rulers:
            raise ConfigError(key, f"unknown ruler {name!r}")
        return self.rulers[name]

    def require_moments(self, key: str) -> None:
        if not getattr(self.backend, "supports_moments", False):
            raise ConfigError(key, f"backend {self.kind!r} answers entropy queries only", "capability-mismatch")


def _get(d: dict, name: str, key: str, default=None, typ=None):
    if name not in d:
        if default is None:
            raise ConfigError(f"{key}.{name}", "missing")
        return default
    v = d[name]
    if typ is not None:
        try:
            v = typ(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}.{name}", f"expected {typ.__name__}, got {v!r}") from None
    return v


def _pairstate(spec: dict, key: str) -> PairState:
    N = _get(spec, "N", key, typ=int)
    if "p" in spec:
        p = list(spec["p"])
        if len(p) != N:
            raise ConfigError(f"{key}.p", f"need {N} bond parameters")
        return PairState(BondLayout(N), {k + 1: float(v) for k, v in enumerate(p)})
    w = solve_exotic_weights(N, _get(spec, "alpha", key, typ=float), _get(spec, "beta", key, typ=float))
    return PairState.from_weights(w)


def _gaussian_state(spec: dict, key: str, rng: np.random.Generator):
    kind = spec.get("kind")
    if kind == "gaussian-p+ip":
        lat = build_square_lattice(_get(spec, "width", key, typ=int), _get(spec, "height", key, typ=int))
        model = BdGModel(
            lat,
            t=_get(spec, "t", key, 1.0, float),
            delta=_get(spec, "delta", key, 1.0, float),
            mu=_get(spec, "mu", key, 1.3, float),
        )
        return ground_state_covariance(model), lat
    if kind == "gaussian-file":
        return load_covariance(_get(spec, "path", key)), None
    if kind == "gaussian-random":
        return random_pure_covariance(_get(spec, "n_modes", key, typ=int), rng), None
    raise ConfigError(f"{key}.kind", f"unknown backend kind {kind!r}")


def build_backend(spec: dict, seed: int, key: str = "backend"):
    """Return ``(backend, lattice, n_sites, extra)`` for a backend table."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(key, "backend table with a 'kind' entry required")
    kind = spec["kind"]
    rng = experiment_rng(seed, "backend")
    try:
        if kind == "pairstate":
            state = _pairstate(spec, key)
            return PairStateBackend(state), None, state.layout.n_sites, {"pairstate": state}
        if kind == "cft":
            c = _get(spec, "c", key, typ=float)
            eps = _get(spec, "epsilon", key, 1e-3, float)
            if "angles" in spec:
                model = CFTCircle(c, eps, tuple(float(a) for a in spec["angles"]))
            else:
                model = CFTCircle.equally_spaced(c, _get(spec, "n", key, typ=int), eps)
            return CFTBackend(model), None, model.n_endpoints, {"cft": model}
        if kind == "edoracle":
            inner = _get(spec, "state", key)
            if not isinstance(inner, dict):
                raise ConfigError(f"{key}.state", "inner backend table required")
            if inner.get("kind") == "pairstate":
                ps = _pairstate(inner, f"{key}.state")
                dense = statevector_from_pairstate(ps)
                return DenseBackend(dense, pairstate_subsystems(ps)), None, ps.layout.n_sites, {"pairstate": ps}
            cov, lat = _gaussian_state(inner, f"{key}.state", rng)
            dense = statevector_from_gaussian(cov)
            return DenseBackend(dense), lat, len(cov.modes), {"covariance": cov}
        cov, lat = _gaussian_state(spec, key, rng)
        n = lat.n_sites if lat is not None else len(cov.modes)
        return GaussianBackend(cov, _get(spec, "eps_ker", key, 1e-12, float)), lat, n, {"covariance": cov}
    except (LatticeError, GaussianError, PairStateError, CFTError, OracleError) as exc:
        raise ConfigError(key, str(exc)) from None


# ---------------------------------------------------------------------------
# Regions and rulers


def _is_int_list(v) -> bool:
    return isinstance(v, list) and all(isinstance(i, int) and not isinstance(i, bool) for i in v)


def parse_region(spec, key: str, ctx: Context) -> Region:
    """Region from a name, a site list, a rectangle list or a table.

    Tables accept ``sites`` (indices), ``coords`` (``[x, y]`` pairs),
    ``rects`` (inclusive ``[x0, y0, x1, y1]``) and ``union`` (names); the
    parts are joined.
    """
    if isinstance(spec, str):
        if spec not in ctx.regions:
            raise ConfigError(key, f"unknown region {spec!r}")
        return ctx.regions[spec]
    if _is_int_list(spec):
        spec = {"sites": spec}
    elif isinstance(spec, list):
        spec = {"rects": spec}
    if not isinstance(spec, dict):
        raise ConfigError(key, f"cannot parse region {spec!r}")
    unknown = set(spec) - {"sites", "coords", "rects", "union"}
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown region field")
    parts = []
    try:
        if "sites" in spec:
            sites = Region.of(spec["sites"])
            if sites and ctx.n_sites and sites.sites[-1] >= ctx.n_sites:
                raise ConfigError(f"{key}.sites", f"site {sites.sites[-1]} out of range")
            parts.append(sites)
        if "coords" in spec or "rects" in spec:
            if ctx.lattice is None:
                raise ConfigError(key, "coordinates need a lattice backend")
            if "coords" in spec:
                parts.append(Region.of(ctx.lattice.index(int(x), int(y)) for x, y in spec["coords"]))
            if "rects" in spec:
                parts.append(region_from_rects(ctx.lattice, [tuple(int(v) for v in r) for r in spec["rects"]]))
        for j, name in enumerate(spec.get("union", [])):
            parts.append(parse_region(name, f"{key}.union[{j}]", ctx))
    except (LatticeError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, str(exc)) from None
    return union(*parts)


def parse_ruler(spec: dict, key: str, ctx: Context) -> ConformalRuler:
    if not isinstance(spec, dict):
        raise ConfigError(key, "ruler table required")
    regs = {}
    for name in ("A", "A_prime", "B", "C", "C_prime"):
        if name in spec:
            regs[name] = parse_region(spec[name], f"{key}.{name}", ctx)
        elif name in ("A_prime", "C_prime"):
            regs[name] = EMPTY
        else:
            raise ConfigError(f"{key}.{name}", "missing")
    ruler = ConformalRuler(**regs)
    if ctx.lattice is not None and spec.get("validate", True):
        rep = validate_ruler(ctx.lattice, ruler)
        if not rep.ok:
            raise ConfigError(key, f"invalid ruler, failed checks {rep.failures()}")
    return ruler


def build_context(config: dict, seed: int) -> Context:
    backend, lat, n, extra = build_backend(config.get("backend"), seed)
    ctx = Context(config, backend, config["backend"]["kind"], lat, n, extra=extra)
    layout = config.get("layout")
    if layout is not None:
        if layout.get("kind") != "edge-strip" or lat is None:
            raise ConfigError("layout.kind", "only 'edge-strip' on a lattice backend is supported")
        try:
            ctx.regions.update(
                edge_strip_regions(lat, *(_get(layout, k, "layout", typ=int) for k in ("x0", "w", "h")))
            )
        except LatticeError as exc:
            raise ConfigError("layout", str(exc)) from None
    for name, spec in (config.get("regions") or {}).items():
        ctx.regions[name] = parse_region(spec, f"regions.{name}", ctx)
    for name, spec in (config.get("rulers") or {}).items():
        ctx.rulers[name] = parse_ruler(spec, f"rulers.{name}", ctx)
    return ctx


# ---------------------------------------------------------------------------
# Tolerances


DEFAULT_TOLERANCES: dict[str, dict[str, dict]] = {
    "ruler": {
        "desk": {"eta_J_dev_max": 5e-3, "eta_K_dev_max": 5e-3, "sigma_at_eta_max": 0.05, "eta_K_vertex_dev_max": 1e-5},
        "paper": {"eta_J_dev_max": 1e-4, "eta_K_dev_max": 1e-4, "sigma_at_eta_max": 5e-3, "eta_K_vertex_dev_max": 1e-6},
    },
    "bulk-j": {"desk": {"c_minus_range": [0.45, 0.55]}, "paper": {"c_minus_range": [0.499, 0.501]}},
    "bulk-a1": {"desk": {"scalar_max": 1e-2}, "paper": {"scalar_max": 1e-4}},
    "decomposition": {"desk": {"max_dev_max": 1e-3, "embedding_max": 1e-2}, "paper": {"max_dev_max": 1e-5, "embedding_max": 1e-5}},
    "constant-c": {"desk": {"spread_max": 0.02}, "paper": {"spread_max": 1e-4}},
    "deformation": {"desk": {"max_residual_max": 5e-3, "a1_ratio_max": 5.0}, "paper": {"max_residual_max": 1e-5}},
    "genericity": {"desk": {"gram_det_min": 1e-4, "relative_error_max": 0.1}, "paper": {"gram_det_min": 1e-4, "relative_error_max": 1e-3}},
    "cross-ratio-table": {
        "desk": {"c_spread_max": 1e-9, "complement_max": 1e-9, "decomposition_max": 1e-9, "five_partition_max": 1e-9, "embedding_max": 1e-8},
        "paper": {"c_spread_max": 1e-12, "complement_max": 1e-12, "decomposition_max": 1e-12, "five_partition_max": 1e-12, "embedding_max": 1e-10},
    },
    "exotic": {
        "desk": {"entropy_dev_max": 1e-10, "c_spread_max": 1e-9, "c_dev_max": 1e-9, "table_dev_max": 1e-9, "embedding_max": 1e-8, "sigma_ratio_min": 1e-2},
        "paper": {"entropy_dev_max": 1e-12, "c_spread_max": 1e-12, "c_dev_max": 1e-12, "table_dev_max": 1e-12, "embedding_max": 1e-10, "sigma_ratio_min": 1e-2},
    },
    "casini-huerta": {"desk": {"scaled_error_max": 10.0}, "paper": {"scaled_error_max": 10.0}},
    "oracle": {
        "desk": {"entropy_dev_max": 1e-8, "commutator_dev_max": 1e-6, "variance_dev_max": 1e-6, "pairstate_dev_max": 1e-10},
        "paper": {"entropy_dev_max": 1e-10, "commutator_dev_max": 1e-8, "variance_dev_max": 1e-8, "pairstate_dev_max": 1e-12},
    },
    "solver-roundtrip": {"desk": {"c_err_max": 1e-10, "eta_err_max": 1e-10}, "paper": {"c_err_max": 1e-12, "eta_err_max": 1e-12}},
}


def resolve_tolerances(exp: dict, kind: str, profile: str) -> dict:
    """Profile defaults updated by the experiment's own ``tolerances`` table."""
    tol = dict(DEFAULT_TOLERANCES.get(kind, {}).get(profile, {}))
    own = exp.get("tolerances") or {}
    tol.update({k: v for k, v in own.items() if k not in PROFILES})
    tol.update(own.get(profile) or {})
    return tol


def evaluate_checks(metrics: dict, tolerances: dict, key: str) -> dict[str, dict]:
    checks = {}
    for name, bound in sorted(tolerances.items()):
        for suffix in ("_max", "_min", "_range"):
            if name.endswith(suffix):
                metric = name[: -len(suffix)]
                break
        else:
            raise ConfigError(f"{key}.tolerances.{name}", "tolerance keys end in _max, _min or _range")
        value = metrics.get(metric)
        if value is None:
            checks[name] = {"metric": metric, "value": None, "bound": bound, "status": "not-applicable"}
            continue
        if suffix == "_max":
            ok = value <= bound
        elif suffix == "_min":
            ok = value >= bound
        else:
            lo, hi = bound
            ok = lo <= value <= hi
        checks[name] = {"metric": metric, "value": value, "bound": bound, "status": "pass" if ok else "fail"}
    return checks


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ExperimentOutput:
    metrics: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    attachments: dict[str, dict] = field(default_factory=dict)


def _ruler_metrics(ctx: Context, ruler: ConformalRuler, exp: dict, key: str) -> ExperimentOutput:
    combo = combo_delta_I(ctx.backend, ruler)
    sol = solve_c_eta(combo)
    m = {"delta": combo.delta, "i": combo.i_cond, "c_tot": sol.c_tot, "eta": sol.eta, "degenerate": sol.degenerate}
    tables = {}
    if getattr(ctx.backend, "supports_moments", False) and exp.get("moments", True):
        try:
            chir = eta_J_pair(ctx.backend, ruler)
            m.update(eta_J=chir.eta_J, c_minus_edge=chir.c_minus_edge, j_inner=chir.j_inner, j_outer=chir.j_outer)
        except RulerError as exc:
            m.update(eta_J=None, chirality_note=str(exc))
        scan = find_eta_K(ctx.backend, ruler, int(exp.get("grid_n", 101)), float(exp.get("refine_width", 1e-6)))
        m.update(eta_K=scan.eta_K, sigma_min=scan.sigma_min, sigma_flat=scan.flat, quad_vertex=scan.quad_vertex)
        if sol.eta is not None:
            m["sigma_at_eta"] = sigma_of_combo(ctx.backend, kd_combo(ruler, sol.eta))
        if scan.quad_vertex is not None:
            m["eta_K_vertex_dev"] = abs(scan.eta_K - scan.quad_vertex)
        tables["sigma_scan"] = (["x", "sigma"], [list(r) for r in scan.to_rows()])
        if sol.eta is not None:
            if m.get("eta_J") is not None:
                m["eta_J_dev"] = abs(sol.eta - m["eta_J"])
            m["eta_K_dev"] = abs(sol.eta - scan.eta_K)
    return ExperimentOutput(m, tables)


def run_ruler(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    return _ruler_metrics(ctx, ctx.ruler(_get(exp, "ruler", key), f"{key}.ruler"), exp, key)


def _three(ctx: Context, exp: dict, key: str, names: tuple[str, ...]) -> list[Region]:
    return [ctx.region(_get(exp, n, key), f"{key}.{n}") for n in names]


def run_bulk_j(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    ctx.require_moments(key)
    A, B, C = _three(ctx, exp, key, ("A", "B", "C"))
    j = modular_commutator(ctx.backend, A, B, C)
    return ExperimentOutput({"j": j, "c_minus": 3 * j / math.pi})


def run_bulk_a1(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    B, C, D = _three(ctx, exp, key, ("B", "C", "D"))
    scalar, vector = bulk_a1_residual(ctx.backend, B, C, D, ctx.lattice)
    return ExperimentOutput({"scalar": scalar, "vector": vector})


def _eta_of(ctx: Context, ruler: ConformalRuler) -> tuple[float, float]:
    sol = solve_c_eta(combo_delta_I(ctx.backend, ruler))
    return sol.c_tot, sol.eta


def run_decomposition(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    names = ("abc", "bcd", "ab_c_d", "a_b_cd", "a_bc_d")
    rulers = exp.get("rulers") or {}
    eta = {}
    table = EtaTable(5)
    for n, k in decomposition_keys(range(5)).items():
        if n not in rulers:
            raise ConfigError(f"{key}.rulers.{n}", "missing")
        sol = solve_c_eta(combo_delta_I(ctx.backend, ctx.ruler(rulers[n], f"{key}.rulers.{n}")))
        table.set(k, sol)
        eta[n] = sol.eta
    e1, e2 = eta["abc"], eta["bcd"]
    pred = {"ab_c_d": e2 / (1 - e1), "a_b_cd": e1 / (1 - e2)}
    pred["a_bc_d"] = pred["ab_c_d"] * pred["a_b_cd"]
    m = {f"eta_{n}": eta[n] for n in names}
    for n, p in pred.items():
        m[f"pred_{n}"] = p
        m[f"dev_{n}"] = abs(eta[n] - p)
    m["max_dev"] = max(m[f"dev_{n}"] for n in pred)
    # five endpoints on the edge: the two elementary entries fix the circle
    emb = circle_embed(table, closure_tol=None)
    m["embedding"] = verify_embedding(emb, table)
    return ExperimentOutput(m, attachments={"eta_table": table.to_json(), "embedding": emb.to_json()})


def run_constant_c(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    names = _get(exp, "rulers", key)
    cs = {n: _eta_of(ctx, ctx.ruler(n, f"{key}.rulers"))[0] for n in names}
    vals = list(cs.values())
    m = {f"c_{n}": c for n, c in cs.items()}
    m.update(spread=max(vals) - min(vals), c_mean=float(np.mean(vals)))
    return ExperimentOutput(m)


def run_deformation(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    if ctx.lattice is None:
        raise ConfigError(key, "deformations need a lattice backend", "capability-mismatch")
    ruler = ctx.ruler(_get(exp, "ruler", key), f"{key}.ruler")
    rows, m = [], {}
    for j, mv in enumerate(_get(exp, "moves", key)):
        mk = f"{key}.moves[{j}]"
        move = BulkMove(
            _get(mv, "kind", mk), ctx.region(_get(mv, "sites", mk), f"{mk}.sites"), mv.get("source"), mv.get("target")
        )
        try:
            dd, di = deformation_residual(ctx.backend, ctx.lattice, ruler, move)
        except LatticeError as exc:
            raise ConfigError(mk, str(exc)) from None
        label = mv.get("label", str(j))
        m[f"delta_change_{label}"], m[f"i_change_{label}"] = dd, di
        rows.append([label, dd, di])
    m["max_residual"] = max(max(r[1], r[2]) for r in rows)
    if "a1" in exp:
        B, C, D = _three(ctx, exp["a1"], f"{key}.a1", ("B", "C", "D"))
        m["a1_scalar"] = bulk_a1_residual(ctx.backend, B, C, D, ctx.lattice)[0]
        m["a1_ratio"] = m["max_residual"] / max(m["a1_scalar"], 1e-300)
    return ExperimentOutput(m, {"moves": (["move", "delta_change", "i_change"], rows)})


def run_genericity(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    ctx.require_moments(key)
    r1 = ctx.ruler(_get(exp, "ruler1", key), f"{key}.ruler1")
    r2 = ctx.ruler(_get(exp, "ruler2", key), f"{key}.ruler2")
    c_minus = eta_J_pair(ctx.backend, r1).c_minus_edge
    out = genericity_gram(ctx.backend, r1, r2, c_minus, _eta_of(ctx, r1)[1], _eta_of(ctx, r2)[1])
    out["c_minus_edge"] = c_minus
    return ExperimentOutput(out)


def _table_checks(table: EtaTable, n: int) -> dict:
    comp = max(complement_check(table, q) for q in itertools.combinations(range(n), 4))
    dec, five = 0.0, 0.0
    for x in itertools.combinations(range(n), 5):
        dec = max(dec, max(decomposition_check(table, x).values()))
        five = max(five, five_partition_check(table, x))
    return {"complement": comp, "decomposition": dec, "five_partition": five}


def _one_d_sites(ctx: Context, key: str) -> int:
    if ctx.kind not in ("cft", "pairstate") and "pairstate" not in ctx.extra:
        raise ConfigError(key, "cross-ratio tables need a 1D backend (cft or pairstate)", "capability-mismatch")
    return ctx.n_sites


def run_cross_ratio_table(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    n = _one_d_sites(ctx, key)
    table = build_eta_table(ctx.backend, n)
    hi, lo, spread = constant_c_check(table)
    m = {"n_endpoints": n, "c_max": hi, "c_min": lo, "c_spread": spread}
    m.update(_table_checks(table, n))
    try:
        emb = circle_embed(table)
        m["embedding"] = verify_embedding(emb, table)
        att = {"eta_table": table.to_json(), "embedding": emb.to_json()}
    except CrossRatioError as exc:
        m["embedding"], m["embedding_error"] = None, str(exc)
        att = {"eta_table": table.to_json()}
    if "cft" in ctx.extra:
        m["c_dev"] = max(abs(hi - ctx.extra["cft"].c), abs(lo - ctx.extra["cft"].c))
    return ExperimentOutput(m, attachments=att)


def run_exotic(ctx: Context, exp: dict, key: str, rng) -> ExperimentOutput:
    spec = ctx.config["backend"]
    if spec.get("kind") != "pairstate" or "alpha" not in spec:
        raise ConfigError(f"{key}.kind", "exotic runs need a pairstate backend with alpha and beta")
    N, alpha, beta = int(spec["N"]), float(spec["alpha"]), float(spec["beta"])
    state = ctx.extra["pairstate"]
    w = solve_exotic_weights(N, alpha, beta)
    dense = solve_exotic_weights_dense(N, alpha, beta)
    n = 2 * N
    ent_dev = max(
        abs(interval_entropy(state, arc(0, L, n)) - (alpha * math.log(ring_chord(L, N) / ring_chord(1, N)) + beta))
        for L in range(1, n)
    )
    table = build_eta_table(ctx.backend, n)
    hi, lo, spread = constant_c_check(table)
    checks = _table_checks(table, n)
    emb = circle_embed(table)
    ratios = []
    for k in all_keys(n):
        if k[0] != 0:
            continue
        i, j, kk, l = k
        r = ruler_1d(interval_sites(i, j, n), interval_sites(j, kk, n), interval_sites(kk, l, n))
        combo = combo_delta_I(ctx.backend, r)
        scan = find_eta_K(ctx.backend, r, int(exp.get("grid_n", 51)), float(exp.get("refine_width", 1e-6)))
        ratios.append([*k, scan.eta_K, scan.sigma_min, scan.sigma_min / (combo.delta + combo.i_cond)])
    best = max(ratios, key=lambda r: r[-1])
    m = {
        "N": N,
        "alpha": alpha,
        "beta": beta,
        "chi": list(w.chi),
        "valid": True,
        "dense_solve_dev": float(np.max(np.abs(dense - np.array(w.chi)))),
        "entropy_dev": ent_dev,
        "c_expected": 6 * alpha,
        "c_spread": spread,
        "c_dev": max(abs(hi - 6 * alpha), abs(lo - 6 * alpha)),
        "table_dev": max(checks.values()),
        "embedding": verify_embedding(emb, table),
        "sigma_ratio": best[-1],
        "sigma_ratio_ruler": best[:4],
        "fixed_point_violated": best[-1] > 1e-2,
    }
    m.update({f"table_{k}": v for k, v in checks.items()})
    tables = {"sigma_min": (["i", "j", "k", "l", "eta_K", "sigma_min", "ratio"], ratios)}
    if "grid" in exp:
        g = exp["grid"]
        rows = validity_grid(N, g.get("alpha", [alpha]), g.get("beta", [beta]))
        cols = list(rows[0])
        tables["validity"] = (cols, [[r[c] for c in cols] for r in rows])
    return ExperimentOutput(m, tables, {"embedding": emb.to_json()})


def run_casini_huerta(ctx: Context | None, exp: dict, key: str, rng) -> ExperimentOutput:
    r = float(exp.get("r", 1.0))
    rows, worst = [], 0.0
    for c in exp.get("c", [1.0, 2.0]):
        for dr in exp.get("dr", [1e-2, 1e-3, 1e-4]):
            est = casini_huerta_estimate(lambda x, c=c: c / 6 * math.log(x), r, dr)
            rows.append([c, dr, est, abs(est - c)])
            worst = max(worst, abs(est - c) / dr)
    return ExperimentOutput({"scaled_error": worst}, {"estimates": (["c", "dr", "estimate", "error"], rows)})


def run_solver_roundtrip(ctx: Context | None, exp: dict, key: str, rng) -> ExperimentOutput:
    cs = exp.get("c", [0.25, 0.5, 1.0, 1.5, 3.0])
    etas = exp.get("eta", [round(0.05 * k, 2) for k in range(1, 20)])
    ce = ee = 0.0
    for c in cs:
        for e in etas:
            sol = solve_c_eta(forward_delta_i(c, e))
            ce, ee = max(ce, abs(sol.c_tot - c)), max(ee, abs(sol.eta - e))
    return ExperimentOutput({"c_err": ce, "eta_err": ee, "points": len(cs) * len(etas)})


def _random_split(rng, n: int, parts: int) -> list[Region]:
    labels = rng.integers(0, parts + 1, n)
    labels[rng.permutation(n)[:parts]] = np.arange(parts)  # every part nonempty
    return [Region.of(np.flatnonzero(labels == p)) for p in range(parts)]


def oracle_compare(n_states: int, min_modes: int, max_modes: int, rng, pairstate_check: bool = True) -> ExperimentOutput:
    """Gaussian backend against dense diagonalization on random pure states."""
    if not 3 <= min_modes <= max_modes <= 10:
        raise ConfigError("oracle.modes", "need 3 <= min_modes <= max_modes <= 10")
    ent = com = var = 0.0
    rows = []
    for s in range(n_states):
        n = int(rng.integers(min_modes, max_modes + 1))
        cov = random_pure_covariance(n, rng)
        g, d = GaussianBackend(cov), DenseBackend(statevector_from_gaussian(cov))
        A, B, C = _random_split(rng, n, 3)
        e = max(abs(g.entropy(R) - d.entropy(R)) for R in (A, B, C, A | B, B | C, A | C, union(A, B, C)))
        j = abs(g.modular_commutator(A, B, C) - d.modular_commutator(A, B, C))
        combo = kd_combo(ruler_1d(A, B, C), float(rng.uniform()))
        v = abs(g.combo_variance(combo) - d.combo_variance(combo))
        ent, com, var = max(ent, e), max(com, j), max(var, v)
        rows.append([s, n, e, j, v])
    m = {"n_states": n_states, "entropy_dev": ent, "commutator_dev": com, "variance_dev": var}
    if pairstate_check:
        ps = PairState.from_weights(solve_exotic_weights(2, 0.2, 0.9))
        pb, db = PairStateBackend(ps), DenseBackend(statevector_from_pairstate(ps), pairstate_subsystems(ps))
        dev = 0.0
        for k in all_keys(4):
            r = ruler_1d(*(interval_sites(k[a], k[a + 1], 4) for a in range(3)))
            dev = max(dev, abs(pb.entropy(r.A | r.B) - db.entropy(r.A | r.B)))
            for x in (0.0, 0.3, 1.0):
                c = kd_combo(r, x)
                dev = max(dev, abs(pb.combo_variance(c) - db.combo_variance(c)))
                dev = max(dev, abs(pb.modular_combo_mean(c) - db.modular_combo_mean(c)))
        m["pairstate_dev"] = dev
    return ExperimentOutput(m, {"states": (["state", "modes", "entropy_dev", "commutator_dev", "variance_dev"], rows)})


def run_oracle(ctx: Context | None, exp: dict, key: str, rng) -> ExperimentOutput:
    return oracle_compare(
        int(exp.get("n_states", 30)),
        int(exp.get("min_modes", 4)),
        int(exp.get("max_modes", 10)),
        rng,
        bool(exp.get("pairstate_check", True)),
    )


RUNNERS: dict[str, Callable] = {
    "ruler": run_ruler,
    "bulk-j": run_bulk_j,
    "bulk-a1": run_bulk_a1,
    "decomposition": run_decomposition,
    "constant-c": run_constant_c,
    "deformation": run_deformation,
    "genericity": run_genericity,
    "cross-ratio-table": run_cross_ratio_table,
    "exotic": run_exotic,
    "casini-huerta": run_casini_huerta,
    "solver-roundtrip": run_solver_roundtrip,
    "oracle": run_oracle,
}
NEEDS_MOMENTS = {"ruler", "bulk-j", "genericity", "exotic"}
STANDALONE = {"casini-huerta", "solver-roundtrip", "oracle"}


def plan_experiments(config: dict) -> list[tuple[str, dict]]:
    """Validate the experiment list and return ``(name, table)`` pairs."""
    exps = config.get("experiments")
    if not isinstance(exps, list) or not exps:
        raise ConfigError("experiments", "non-empty list of experiment tables required")
    seen, out = set(), []
    for j, exp in enumerate(exps):
        key = f"experiments[{j}]"
        if not isinstance(exp, dict):
            raise ConfigError(key, "table required")
        kind = _get(exp, "kind", key)
        if kind not in RUNNERS:
            raise ConfigError(f"{key}.kind", f"unknown experiment kind {kind!r}")
        name = str(exp.get("name", f"{kind}-{j}"))
        if name in seen:
            raise ConfigError(f"{key}.name", f"duplicate experiment name {name!r}")
        seen.add(name)
        out.append((name, exp))
    return out


def needs_backend(plan: list[tuple[str, dict]]) -> bool:
    return any(exp["kind"] not in STANDALONE for _, exp in plan)


def run_experiment(ctx: Context | None, name: str, exp: dict, index: int, seed: int, profile: str) -> tuple[ExperimentOutput, dict]:
    key = f"experiments[{index}]"
    kind = exp["kind"]
    if kind in NEEDS_MOMENTS and kind != "ruler":
        ctx.require_moments(key)
    try:
        out = RUNNERS[kind](ctx, exp, key, experiment_rng(seed, name))
    except BackendCapabilityError as exc:
        raise ConfigError(key, str(exc), "capability-mismatch") from None
    except (LatticeError, PairStateError, CFTError) as exc:
        raise ConfigError(key, str(exc)) from None
    checks = evaluate_checks(out.metrics, resolve_tolerances(exp, kind, profile), key)
    return out, checks


# ---------------------------------------------------------------------------
# Output


def plain(v):
    """Convert numpy scalars and containers into JSON-ready values."""
    if isinstance(v, dict):
        return {str(k): plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(plain(data), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """CSV with floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
