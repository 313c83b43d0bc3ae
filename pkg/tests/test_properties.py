"""Randomized invariants.

Each ``check_*`` helper draws its inputs from a seed and asserts one family
of invariants; hypothesis drives the seeds here and the acceptance suite
replays a fixed list.
"""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_ruler.cftmodel import CFTBackend, random_circle
from conformal_ruler.crossratio import all_keys, build_eta_table, circle_embed, geometric_cross_ratio
from conformal_ruler.gaussian import GaussianBackend, random_pure_covariance
from conformal_ruler.lattice import ConformalRuler, Region
from conformal_ruler.ruler import (
    combo_variance,
    find_eta_K,
    forward_delta_i,
    kd_combo,
    quadratic_variance,
    solve_c_eta,
)

SETTINGS = settings(max_examples=25, deadline=None, derandomize=True)


def _random_parts(rng, n, k):
    """``k`` disjoint non-empty regions of ``range(n)`` plus the rest."""
    labels = rng.integers(0, k + 1, n)
    labels[rng.permutation(n)[:k]] = np.arange(k)
    return [Region.of(np.flatnonzero(labels == j).tolist()) for j in range(k + 1)]


def check_solver(c, eta):
    d, i = forward_delta_i(c, eta)
    sol = solve_c_eta((d, i))
    assert abs(sol.c_tot - c) < 1e-10 and abs(sol.eta - eta) < 1e-10
    swapped = solve_c_eta((i, d))
    assert abs(swapped.c_tot - sol.c_tot) < 1e-12 * max(1.0, c)
    assert abs(swapped.eta - (1 - sol.eta)) < 1e-12


def check_gaussian_entropies(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    b = GaussianBackend(random_pure_covariance(n, rng))
    A, B, C, rest = _random_parts(rng, n, 3)
    S = b.entropy
    assert S(A | B) + S(B | C) - S(B) - S(A | B | C) >= -1e-8
    assert S(A | B) + S(B | C) - S(A) - S(C) >= -1e-8
    X = A | C
    assert abs(S(X) - S(Region.of(set(range(n)) - set(X.sites)))) < 1e-8
    assert abs(b.modular_commutator(A, B, C) + b.modular_commutator(C, B, A)) < 1e-10


def check_quadratic_variance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 11))
    b = GaussianBackend(random_pure_covariance(n, rng))
    A, Ap, B, C, Cp = _random_parts(rng, n, 5)[:5]
    r = ConformalRuler(A, Ap, B, C, Cp)
    q = quadratic_variance(b, r)
    for x in rng.uniform(0, 1, 4):
        direct = combo_variance(b, kd_combo(r, float(x)))
        assert abs(direct - (q[0] + q[1] * x + q[2] * x * x)) < 1e-8 * max(1.0, abs(direct))
    scan = find_eta_K(b, r, grid_n=21)
    if scan.quad_vertex is not None and not scan.flat:
        assert abs(scan.eta_K - scan.quad_vertex) < 1e-6


def check_anchor_gauge(seed):
    rng = np.random.default_rng(seed)
    model = random_circle(rng, int(rng.integers(5, 11)), float(rng.uniform(0.5, 3)))
    table = build_eta_table(CFTBackend(model), model.n_endpoints)
    a = np.sort(rng.uniform(0, 2 * math.pi, 3))
    e1, e2 = circle_embed(table), circle_embed(table, tuple(a))
    for k in all_keys(model.n_endpoints):
        assert abs(geometric_cross_ratio(e1, k) - geometric_cross_ratio(e2, k)) < 1e-10


seeds = st.integers(0, 2**32 - 1)


@SETTINGS
@given(st.floats(0.1, 5.0), st.floats(0.01, 0.99))
def test_solver_round_trip_and_symmetry(c, eta):
    check_solver(c, eta)


@SETTINGS
@given(st.floats(1e-3, 2.0), st.floats(1e-3, 2.0))
def test_solver_root_unique(d, i):
    x = 6 / solve_c_eta((d, i)).c_tot
    f = lambda t: math.exp(-d * t) + math.exp(-i * t) - 1  # noqa: E731
    lo, hi = math.log(2) / max(d, i), math.log(2) / min(d, i)
    assert lo * (1 - 1e-12) <= x <= hi * (1 + 1e-12)
    assert f(lo) >= 0 >= f(hi)


@SETTINGS
@given(seeds)
def test_ssa_purity_and_antisymmetry(seed):
    check_gaussian_entropies(seed)


@SETTINGS
@given(seeds)
def test_variance_is_quadratic(seed):
    check_quadratic_variance(seed)


@settings(max_examples=10, deadline=None, derandomize=True)
@given(seeds)
def test_anchor_gauge_invariance(seed):
    check_anchor_gauge(seed)
