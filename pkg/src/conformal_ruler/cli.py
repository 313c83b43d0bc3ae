"""Command-line entry point ``conformal-ruler``.

Subcommands
-----------
run
    Execute every experiment of a configuration file and write one JSON
    report per experiment plus CSV side files.
scan-sigma
    Tabulate ``sigma(K_D(x))`` for a named ruler.
embed
    Place the edge endpoints on a circle from a cross-ratio table.
oracle-compare
    Compare the Gaussian backend with dense diagonalization.

Exit codes: 0 when every tolerance holds, 2 on a tolerance or numerical
failure, 1 on a configuration error (the offending key is printed).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .crossratio import CrossRatioError, EtaTable, build_eta_table, circle_embed, verify_embedding
from .edoracle import OracleError
from .experiments import (
    PROFILES,
    ConfigError,
    build_context,
    config_hash,
    load_config,
    needs_backend,
    plan_experiments,
    run_experiment,
    write_csv,
    write_json,
)
from .gaussian import GaussianError
from .ruler import RulerError, find_eta_K

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 1, 2
EMBED_TOL = {"desk": 1e-8, "paper": 1e-10}
NUMERICAL_ERRORS = (RulerError, CrossRatioError, GaussianError, OracleError)


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _header(config: dict, seed: int, profile: str) -> dict:
    return {
        "config_hash": config_hash({"config": config, "seed": seed, "profile": profile}),
        "version": __version__,
        "seed": seed,
        "tolerance_profile": profile,
    }


def _resolve(args) -> tuple[dict, int, Path]:
    path = args.config or args.config_pos
    if path is None:
        raise ConfigError("--config", "a configuration file is required")
    config = load_config(path)
    if not isinstance(config, dict):
        raise ConfigError(str(path), "top level must be a table")
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = Path(args.out or config.get("output", "reports"))
    out.mkdir(parents=True, exist_ok=True)
    return config, seed, out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run(args) -> int:
    config, seed, out = _resolve(args)
    profile = args.tolerance_profile
    plan = plan_experiments(config)
    ctx = build_context(config, seed) if needs_backend(plan) else None
    head = _header(config, seed, profile)

    def one(item):
        idx, (name, exp) = item
        try:
            result, checks = run_experiment(ctx, name, exp, idx, seed, profile)
        except NUMERICAL_ERRORS as exc:
            return name, exp, None, {}, str(exc)
        return name, exp, result, checks, None

    items = list(enumerate(plan))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(one, items))
    else:
        done = [one(it) for it in items]

    status = EXIT_OK
    for name, exp, result, checks, error in sorted(done, key=lambda d: d[0]):
        report = dict(head, experiment=name, kind=exp["kind"], checks=checks, files=[])
        if error is not None:
            report.update(results=None, error=error, passed=False)
        else:
            report["results"] = result.metrics
            for tag, (cols, rows) in sorted(result.tables.items()):
                fname = f"{name}_{tag}.csv"
                write_csv(out / fname, cols, rows)
                report["files"].append(fname)
            for tag, data in sorted(result.attachments.items()):
                fname = f"{name}_{tag}.json"
                write_json(out / fname, data)
                report["files"].append(fname)
            report["passed"] = all(c["status"] != "fail" for c in checks.values())
        report["timestamp"] = _timestamp()
        write_json(out / f"{name}.json", report)
        failed = [k for k, c in checks.items() if c["status"] == "fail"]
        verdict = "PASS" if report["passed"] else "FAIL"
        print(f"{verdict} {name} ({exp['kind']})" + (f": {', '.join(failed) or error}" if not report["passed"] else ""))
        if not report["passed"]:
            status = EXIT_TOLERANCE
    return status


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:n`` or a comma-separated list; all points in ``[0, 1]``."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            xs = np.linspace(float(a), float(b), int(n))
        else:
            xs = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise ConfigError("--grid", f"cannot parse {spec!r}") from None
    if len(xs) < 3:
        raise ConfigError("--grid", "at least three points required")
    if xs.min() < 0 or xs.max() > 1:
        raise ConfigError("--grid", f"x must lie in [0, 1], got [{xs.min()}, {xs.max()}]")
    return xs


def cmd_scan_sigma(args) -> int:
    config, seed, out = _resolve(args)
    xs = parse_grid(args.grid)
    ctx = build_context(config, seed)
    ctx.require_moments("backend")
    ruler = ctx.ruler(args.ruler, "--ruler")
    scan = find_eta_K(ctx.backend, ruler, width=args.refine_width, xs=xs)
    write_csv(out / f"scan_{args.ruler}.csv", ["x", "sigma"], [list(r) for r in scan.to_rows()])
    side = dict(_header(config, seed, args.tolerance_profile), ruler=args.ruler, minimum=scan.summary())
    side["timestamp"] = _timestamp()
    write_json(out / f"scan_{args.ruler}.json", side)
    print(f"eta_K = {scan.eta_K:.10f}  sigma_min = {scan.sigma_min:.6e}  flat = {scan.flat}")
    return EXIT_OK


def cmd_embed(args) -> int:
    path = args.config or args.config_pos
    if args.table:
        try:
            table = EtaTable.load(args.table)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("--table", str(exc)) from None
        config, seed = {"table": str(args.table)}, args.seed or 0
        out = Path(args.out or "reports")
        out.mkdir(parents=True, exist_ok=True)
    elif path:
        config, seed, out = _resolve(args)
        ctx = build_context(config, seed)
        if ctx.kind not in ("cft", "pairstate"):
            raise ConfigError("backend.kind", "embedding needs a 1D backend or --table", "capability-mismatch")
        table = build_eta_table(ctx.backend, ctx.n_sites)
    else:
        raise ConfigError("--table", "give a configuration or a table file")
    anchors = tuple(float(v) for v in args.anchors.split(",")) if args.anchors else None
    if anchors is not None and len(anchors) != 3:
        raise ConfigError("--anchors", "three angles required")
    report = dict(_header(config, seed, args.tolerance_profile), n_endpoints=table.n_endpoints)
    try:
        emb = circle_embed(table, anchors) if anchors else circle_embed(table)
    except CrossRatioError as exc:
        report.update(error=str(exc), passed=False, timestamp=_timestamp())
        write_json(out / "embedding.json", report)
        print(f"FAIL embed: {exc}")
        return EXIT_TOLERANCE
    dev = verify_embedding(emb, table)
    tol = EMBED_TOL[args.tolerance_profile]
    report.update(emb.to_json(), max_deviation=dev, tolerance=tol, passed=dev <= tol)
    report["timestamp"] = _timestamp()
    write_json(out / "embedding.json", report)
    emb.save_csv(out / "embedding.csv")
    print(f"{'PASS' if dev <= tol else 'FAIL'} embed: max |eta - eta_g| = {dev:.3e}")
    return EXIT_OK if dev <= tol else EXIT_TOLERANCE


def cmd_oracle_compare(args) -> int:
    path = args.config or args.config_pos
    opts: dict = {}
    if path:
        config, seed, out = _resolve(args)
        opts = config.get("oracle", {})
    else:
        seed = args.seed or 0
        out = Path(args.out or "reports")
        out.mkdir(parents=True, exist_ok=True)
        config = {}
    n_states = args.n_states or int(opts.get("n_states", 30))
    max_modes = args.max_modes or int(opts.get("max_modes", 10))
    min_modes = min(int(opts.get("min_modes", 4)), max_modes)
    exp = {"kind": "oracle", "n_states": n_states, "min_modes": min_modes, "max_modes": max_modes}
    exp.update({k: v for k, v in opts.items() if k == "tolerances"})
    result, checks = run_experiment(None, "oracle-compare", exp, 0, seed, args.tolerance_profile)
    passed = all(c["status"] != "fail" for c in checks.values())
    report = dict(_header(dict(config, oracle=exp), seed, args.tolerance_profile), results=result.metrics, checks=checks)
    report.update(passed=passed, timestamp=_timestamp())
    write_json(out / "oracle_compare.json", report)
    cols, rows = result.tables["states"]
    write_csv(out / "oracle_compare_states.csv", cols, rows)
    m = result.metrics
    print(
        f"{'PASS' if passed else 'FAIL'} oracle-compare: entropy {m['entropy_dev']:.2e}, "
        f"commutator {m['commutator_dev']:.2e}, variance {m['variance_dev']:.2e}"
    )
    return EXIT_OK if passed else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config_pos", nargs="?", metavar="CONFIG", help="TOML or JSON run configuration")
    common.add_argument("--config", help="configuration file (alternative to the positional argument)")
    common.add_argument("--out", help="output directory (default: config 'output' or ./reports)")
    common.add_argument("--seed", type=int, help="override the configuration seed")
    common.add_argument("--jobs", type=int, default=1, help="experiments run in parallel (default 1)")
    common.add_argument("--tolerance-profile", choices=PROFILES, default="desk")

    ap = argparse.ArgumentParser(prog="conformal-ruler", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run all experiments of a configuration")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scan-sigma", parents=[common], help="sigma(K_D(x)) over a grid for one ruler")
    p.add_argument("--ruler", required=True)
    p.add_argument("--grid", default="0:1:101", help="start:stop:n or comma-separated x values")
    p.add_argument("--refine-width", type=float, default=1e-6)
    p.set_defaults(func=cmd_scan_sigma)

    p = sub.add_parser("embed", parents=[common], help="circle embedding from a cross-ratio table")
    p.add_argument("--table", help="eta table JSON (instead of building one from CONFIG)")
    p.add_argument("--anchors", help="three anchor angles, comma-separated")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("oracle-compare", parents=[common], help="Gaussian backend against dense diagonalization")
    p.add_argument("--n-states", type=int)
    p.add_argument("--max-modes", type=int)
    p.set_defaults(func=cmd_oracle_compare)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: config-parse at '--jobs': must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
