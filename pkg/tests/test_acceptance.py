"""Acceptance criteria, one test per criterion.

Tolerances are pinned here rather than read from the tolerance profiles so
that a change of defaults cannot loosen the contract.
"""

import itertools
import math
import time

import numpy as np

from conformal_ruler.cftmodel import CFTBackend, casini_huerta_estimate, random_circle
from conformal_ruler.crossratio import (
    all_keys,
    build_eta_table,
    circle_embed,
    complement_check,
    constant_c_check,
    decomposition_check,
    verify_embedding,
)
from conformal_ruler.experiments import build_context, oracle_compare, run_experiment
from conformal_ruler.gaussian import correlation_length
from conformal_ruler.ruler import (
    bulk_a1_residual,
    combo_delta_I,
    eta_J_pair,
    find_eta_K,
    forward_delta_i,
    kd_combo,
    modular_commutator,
    sigma_of_combo,
    solve_c_eta,
)

from .test_properties import check_anchor_gauge, check_gaussian_entropies, check_quadratic_variance, check_solver

SEED = 20261017


def test_criterion_1_solver_round_trip():
    start = time.perf_counter()
    for c in (0.25, 0.5, 1.0, 1.5, 3.0):
        for k in range(1, 20):
            eta = 0.05 * k
            sol = solve_c_eta(forward_delta_i(c, eta))
            assert abs(sol.c_tot - c) < 1e-10 and abs(sol.eta - eta) < 1e-10, (c, eta)
    assert time.perf_counter() - start < 1.0


def test_criterion_2_degenerate_limits():
    a, b, z = solve_c_eta((0.0, 0.3)), solve_c_eta((0.3, 0.0)), solve_c_eta((0.0, 0.0))
    assert (a.c_tot, a.eta) == (0.0, 1.0)
    assert (b.c_tot, b.eta) == (0.0, 0.0)
    assert z.c_tot == 0.0 and z.eta_undetermined


def test_criterion_3_cft_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    for _ in range(50):
        n = int(rng.integers(8, 17))
        c = float(rng.uniform(0.5, 3.0))
        model = random_circle(rng, n, c, min_arc=0.05)
        table = build_eta_table(CFTBackend(model), n)
        hi, lo, _ = constant_c_check(table)
        assert max(hi - c, c - lo) < 1e-12
        for q in itertools.combinations(range(n), 4):
            assert complement_check(table, q) < 1e-9
        for x in itertools.combinations(range(n), 5):
            assert max(decomposition_check(table, x).values()) < 1e-9
        # every cyclic quadruple: wrap-around and composite intervals included
        assert len(table.keys()) == len(all_keys(n))
        assert verify_embedding(circle_embed(table, closure_tol=None), table) < 1e-10
    assert time.perf_counter() - start < 10.0


def test_criterion_4_gaussian_dense_oracle():
    start = time.perf_counter()
    m = oracle_compare(30, 4, 10, np.random.default_rng(SEED), pairstate_check=False).metrics
    assert m["entropy_dev"] < 1e-8
    assert m["commutator_dev"] < 1e-6
    assert m["variance_dev"] < 1e-6
    assert time.perf_counter() - start < 120.0


def test_criterion_5_pip_desk(pip_desk):
    ctx, b = pip_desk, pip_desk.backend
    lat = ctx.lattice
    assert lat.width >= 20 and lat.height >= 10

    jA, jB, jC = (ctx.region(n, n) for n in ("jA", "jB", "jC"))
    assert 0.45 <= 3 * modular_commutator(b, jA, jB, jC) / math.pi <= 0.55

    xi = correlation_length(b.state, lat)
    aB, aC, aD = (ctx.region(n, n) for n in ("aB", "aC", "aD"))
    for reg in (aB, aC, aD):
        xs, ys = zip(*(lat.coords(s) for s in reg))
        assert min(max(xs) - min(xs), max(ys) - min(ys)) + 1 >= 3 * xi
    assert bulk_a1_residual(b, aB, aC, aD, lat)[0] < 1e-2

    cs = []
    for name in ("corner", "abc"):
        r = ctx.ruler(name, name)
        sol = solve_c_eta(combo_delta_I(b, r))
        assert 0.45 <= sol.c_tot <= 0.55
        cs.append(sol.c_tot)
        assert abs(sol.eta - eta_J_pair(b, r).eta_J) < 5e-3
        scan = find_eta_K(b, r, grid_n=101, width=1e-6)
        assert abs(sol.eta - scan.eta_K) < 5e-3
        s_eta = sigma_of_combo(b, kd_combo(r, sol.eta))
        assert s_eta < 0.05
        # eta beats every scan point, and the refined minimum sits on the
        # variance vertex within the refinement width
        assert s_eta <= scan.sigmas.min()
        assert abs(scan.eta_K - scan.quad_vertex) < scan.refine_width
    assert abs(cs[0] - cs[1]) < 0.02

    exp = next(e for e in ctx.config["experiments"] if e["kind"] == "decomposition")
    out, _ = run_experiment(ctx, "decomposition", exp, 0, 0, "desk")
    assert out.metrics["max_dev"] < 1e-3


def test_criterion_6_exotic_non_example():
    start = time.perf_counter()
    alpha, beta = 0.1, 0.6
    for N in (3, 4, 5, 6):
        ctx = build_context({"backend": {"kind": "pairstate", "N": N, "alpha": alpha, "beta": beta}}, 0)
        m, _ = run_experiment(ctx, f"exotic_{N}", {"kind": "exotic", "grid_n": 51}, 0, 0, "desk")
        m = m.metrics
        assert m["entropy_dev"] < 1e-10
        assert m["c_dev"] < 1e-9 and m["c_spread"] < 1e-9
        assert m["table_complement"] < 1e-9 and m["table_decomposition"] < 1e-9
        assert m["embedding"] < 1e-8
        assert m["sigma_ratio"] > 1e-2
    toy = oracle_compare(0, 4, 4, np.random.default_rng(SEED), pairstate_check=True).metrics
    assert toy["pairstate_dev"] < 1e-10
    assert time.perf_counter() - start < 30.0


def test_criterion_7_casini_huerta():
    start = time.perf_counter()
    for c in (1.0, 2.0):
        for dr in (1e-2, 1e-3, 1e-4):
            est = casini_huerta_estimate(lambda r, c=c: c / 6 * math.log(r), 1.0, dr)
            assert abs(est - c) < 10 * dr
    assert time.perf_counter() - start < 1.0


def test_criterion_8_deformation_invariance(pip_desk):
    exp = next(e for e in pip_desk.config["experiments"] if e["kind"] == "deformation")
    m = run_experiment(pip_desk, "deformation", exp, 0, 0, "desk")[0].metrics
    labels = [mv["label"] for mv in exp["moves"]]
    assert labels == ["i", "ii", "iii", "iv"]
    for lab in labels:
        assert m[f"delta_change_{lab}"] < 5e-3 and m[f"i_change_{lab}"] < 5e-3
    assert m["max_residual"] < 5 * m["a1_scalar"]


def test_criterion_9_property_suite():
    rng = np.random.default_rng(SEED)
    for c, eta in zip(rng.uniform(0.1, 5.0, 50), rng.uniform(0.01, 0.99, 50)):
        check_solver(float(c), float(eta))
    for seed in rng.integers(0, 2**32, 40):
        check_gaussian_entropies(int(seed))
    for seed in rng.integers(0, 2**32, 20):
        check_quadratic_variance(int(seed))
    for seed in rng.integers(0, 2**32, 10):
        check_anchor_gauge(int(seed))
