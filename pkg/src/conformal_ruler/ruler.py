"""Entropy combinations, the (c_tot, eta) solver and modular-operator diagnostics.

A *backend* is any object exposing

* ``entropy(region) -> float`` (nats);
* ``supports_moments`` (bool);
* when moments are supported: ``modular_combo_moment(c1, c2) -> complex``
  (``<O1 O2>``), ``modular_combo_mean(c) -> float``,
  ``combo_variance(c) -> float`` and ``modular_commutator(A, B, C) -> float``.

Regions are :class:`~conformal_ruler.lattice.Region` objects; for the 1D
backends (CFT circle, pair states) a "site" is an elementary interval and a
ruler has empty ``A_prime`` and ``C_prime``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .lattice import EMPTY, BulkMove, ConformalRuler, Lattice, Region, deform_ruler, union

TOL_SSA = 1e-8
C_MINUS_THRESHOLD = 0.05
LN2 = math.log(2.0)


class RulerError(ValueError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class BackendCapabilityError(RulerError):
    def __init__(self, message: str = "backend does not support operator moments"):
        super().__init__("backend-capability", message)


class NonchiralStateError(RulerError):
    def __init__(self, message: str = ""):
        super().__init__("nonchiral-state", message)


def _require_moments(backend) -> None:
    if not getattr(backend, "supports_moments", False):
        raise BackendCapabilityError(f"{getattr(backend, 'name', type(backend).__name__)} is entropy-only")


# ---------------------------------------------------------------------------
# Modular combinations


@dataclass(frozen=True)
class ModularCombo:
    """Formal sum ``sum_X w_X K_X`` over distinct regions."""

    terms: tuple[tuple[Region, float], ...]
    provenance: str = "custom"

    def __post_init__(self):
        merged: dict[tuple[int, ...], float] = {}
        regions: dict[tuple[int, ...], Region] = {}
        for region, w in self.terms:
            if not region:
                continue  # K of the empty region is 0
            merged[region.sites] = merged.get(region.sites, 0.0) + float(w)
            regions[region.sites] = region
        terms = tuple((regions[k], w) for k, w in merged.items() if w != 0.0)
        object.__setattr__(self, "terms", terms)

    @property
    def regions(self) -> list[Region]:
        return [r for r, _ in self.terms]

    def weight(self, region: Region) -> float:
        return dict((r.sites, w) for r, w in self.terms).get(region.sites, 0.0)

    def scaled(self, s: float) -> "ModularCombo":
        return ModularCombo(tuple((r, s * w) for r, w in self.terms), self.provenance)

    def __add__(self, other: "ModularCombo") -> "ModularCombo":
        return ModularCombo(self.terms + other.terms, "custom")

    def entropy_value(self, backend) -> float:
        """``sum_X w_X S_X``, the expectation value of the combo."""
        return float(sum(w * backend.entropy(r) for r, w in self.terms))


def delta_hat(ruler: ConformalRuler) -> ModularCombo:
    AAp, CCp = ruler.A | ruler.A_prime, ruler.C | ruler.C_prime
    return ModularCombo(
        ((AAp | ruler.B, 1.0), (CCp | ruler.B, 1.0), (AAp, -1.0), (CCp, -1.0)), "Delta-hat"
    )


def i_hat(ruler: ConformalRuler) -> ModularCombo:
    A, B, C = ruler.A, ruler.B, ruler.C
    return ModularCombo(((A | B, 1.0), (B | C, 1.0), (B, -1.0), (union(A, B, C), -1.0)), "I-hat")


def kd_combo(ruler: ConformalRuler, x: float) -> ModularCombo:
    """``K_D(x) = x Delta_hat + (1 - x) I_hat``."""
    if not 0.0 <= x <= 1.0:
        raise RulerError("x-out-of-range", f"{x}")
    terms = delta_hat(ruler).scaled(x).terms + i_hat(ruler).scaled(1.0 - x).terms
    return ModularCombo(terms, "K-D-of-x")


def ruler_1d(a: Region, b: Region, c: Region) -> ConformalRuler:
    """Ruler of three consecutive intervals with empty primes."""
    return ConformalRuler(a, EMPTY, b, c, EMPTY)


# ---------------------------------------------------------------------------
# Entropy combinations


@dataclass(frozen=True)
class EntropyCombo:
    delta: float
    i_cond: float
    raw_delta: float = float("nan")
    raw_i: float = float("nan")

    @classmethod
    def from_raw(cls, delta: float, i_cond: float, tol_ssa: float = TOL_SSA) -> "EntropyCombo":
        for name, v in (("delta", delta), ("i_cond", i_cond)):
            if v < -tol_ssa:
                raise RulerError("ssa-violation", f"{name} = {v:.3e}")
        return cls(max(delta, 0.0), max(i_cond, 0.0), delta, i_cond)


def combo_delta_I(backend, ruler: ConformalRuler, tol_ssa: float = TOL_SSA) -> EntropyCombo:
    """``Delta = S_AA'B + S_BCC' - S_AA' - S_CC'`` and ``I = S_AB + S_BC - S_B - S_ABC``."""
    return EntropyCombo.from_raw(
        delta_hat(ruler).entropy_value(backend), i_hat(ruler).entropy_value(backend), tol_ssa
    )


# ---------------------------------------------------------------------------
# (c_tot, eta) solver


@dataclass(frozen=True)
class CEtaSolution:
    c_tot: float
    eta: float | None
    degenerate: str = "none"  # none | delta-zero | i-zero | both-zero

    @property
    def eta_undetermined(self) -> bool:
        return self.eta is None


def solve_c_eta(combo: EntropyCombo | tuple[float, float]) -> CEtaSolution:
    """Solve ``exp(-6 Delta / c) + exp(-6 I / c) = 1`` and ``eta = exp(-6 Delta / c)``.

    The root ``x*`` of ``f(x) = exp(-Delta x) + exp(-I x) - 1`` lies in
    ``[ln 2 / max, ln 2 / min]``; it is bracketed, refined with Brent's method
    to 1e-9 relative and polished by Newton steps.  Then ``c = 6 / x*``.
    """
    if isinstance(combo, EntropyCombo):
        d, i = combo.delta, combo.i_cond
    else:
        d, i = (float(v) for v in combo)
    if d < 0 or i < 0:
        raise RulerError("invalid-combo", f"negative input ({d}, {i})")
    if d == 0 and i == 0:
        return CEtaSolution(0.0, None, "both-zero")
    if d == 0:
        return CEtaSolution(0.0, 1.0, "delta-zero")
    if i == 0:
        return CEtaSolution(0.0, 0.0, "i-zero")

    def f(x):
        return math.expm1(-d * x) + math.exp(-i * x)

    lo, hi = LN2 / max(d, i), LN2 / min(d, i)
    if lo == hi:
        x = lo
    else:
        x = brentq(f, lo, hi, xtol=1e-300, rtol=1e-9, maxiter=500)
    for _ in range(3):
        df = -d * math.exp(-d * x) - i * math.exp(-i * x)
        step = f(x) / df
        if not math.isfinite(step) or abs(step) > 0.5 * x:
            break
        x -= step
    return CEtaSolution(6.0 / x, math.exp(-d * x), "none")


def solve_c_eta_batch(delta: np.ndarray, i_cond: np.ndarray) -> list[CEtaSolution]:
    """Vectorized :func:`solve_c_eta` for many ``(Delta, I)`` pairs.

    ``f`` is convex and decreasing, so Newton's method started at the left
    bracket end ``ln 2 / max(Delta, I)`` (where ``f >= 0``) increases
    monotonically to the root without overshooting.  All pairs are iterated
    together until every relative step is below 1e-15.
    """
    d = np.asarray(delta, dtype=float)
    i = np.asarray(i_cond, dtype=float)
    if np.any(d < 0) or np.any(i < 0):
        raise RulerError("invalid-combo", "negative input")
    good = (d > 0) & (i > 0)
    x = np.zeros_like(d)
    if good.any():
        dg, ig = d[good], i[good]
        def f(t):
            return np.expm1(-dg * t) + np.exp(-ig * t)

        def df(t):
            return -dg * np.exp(-dg * t) - ig * np.exp(-ig * t)

        # scipy's array Newton has no relative tolerance, so iterate directly
        t = LN2 / np.maximum(dg, ig)
        for _ in range(200):
            step = f(t) / df(t)
            t = t - step
            if np.all(np.abs(step) <= 1e-15 * t):
                break
        x[good] = t
    out = []
    for k in range(d.size):
        if good.flat[k]:
            out.append(CEtaSolution(6.0 / x.flat[k], math.exp(-d.flat[k] * x.flat[k]), "none"))
        else:
            out.append(solve_c_eta((d.flat[k], i.flat[k])))
    return out


def forward_delta_i(c: float, eta: float) -> tuple[float, float]:
    """``Delta = -(c/6) ln eta`` and ``I = -(c/6) ln(1 - eta)``."""
    return -c / 6 * math.log(eta), -c / 6 * math.log1p(-eta)


def c_eta_properties(combo: EntropyCombo | tuple[float, float], sol: CEtaSolution) -> dict:
    """Residuals of the tangent-line identities and the upper bound on c."""
    d, i = (combo.delta, combo.i_cond) if isinstance(combo, EntropyCombo) else combo
    if sol.degenerate != "none":
        raise RulerError("degenerate-solution", sol.degenerate)
    c, eta = sol.c_tot, sol.eta
    h = -eta * math.log(eta) - (1 - eta) * math.log1p(-eta)
    bound = 3 * (d + i) / LN2
    return {
        "intercept_residual": abs((d - i) * eta + i - c / 6 * h),
        "slope_residual": abs(d - i - c / 6 * (math.log1p(-eta) - math.log(eta))),
        "upper_bound": bound,
        "bound_ok": c <= bound * (1 + 1e-12),
    }


# ---------------------------------------------------------------------------
# Variance scans


def combo_variance(backend, combo: ModularCombo) -> float:
    _require_moments(backend)
    if hasattr(backend, "combo_variance"):
        return float(backend.combo_variance(combo))
    second = backend.modular_combo_moment(combo, combo).real
    mean = backend.modular_combo_mean(combo)
    return float(second - mean**2)


def sigma_of_combo(backend, combo: ModularCombo) -> float:
    """``sqrt(<O^2> - <O>^2)``; tiny negative variances are clipped."""
    v = combo_variance(backend, combo)
    if v < -1e-10:
        raise RulerError("negative-variance", f"{v:.3e}")
    return math.sqrt(max(v, 0.0))


@dataclass
class SigmaScan:
    xs: np.ndarray
    sigmas: np.ndarray
    eta_K: float
    sigma_min: float
    flat: bool = False
    quad_vertex: float | None = None
    quad_fit_error: float = 0.0
    refine_width: float = 1e-6

    def to_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.sigmas.tolist()))

    def summary(self) -> dict:
        return {
            "eta_K": self.eta_K,
            "sigma_min": self.sigma_min,
            "flat": self.flat,
            "quad_vertex": self.quad_vertex,
            "quad_fit_error": self.quad_fit_error,
            "grid_n": len(self.xs),
        }


def _golden_min(f, a: float, b: float, width: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def quadratic_variance(backend, ruler: ConformalRuler) -> np.ndarray:
    """Coefficients ``(q0, q1, q2)`` of ``var(x) = q0 + q1 x + q2 x^2`` from three points."""
    v0 = combo_variance(backend, kd_combo(ruler, 0.0))
    vh = combo_variance(backend, kd_combo(ruler, 0.5))
    v1 = combo_variance(backend, kd_combo(ruler, 1.0))
    q2 = 2 * (v1 + v0 - 2 * vh)
    q1 = v1 - v0 - q2
    return np.array([v0, q1, q2])


def find_eta_K(
    backend, ruler: ConformalRuler, grid_n: int = 101, width: float = 1e-6, xs: Sequence[float] | None = None
) -> SigmaScan:
    """Minimize ``sigma(K_D(x))`` over ``[0, 1]``.

    A grid scan seeds golden-section refinement around the global grid
    minimum.  The vertex of the three-point quadratic fit of the variance is
    stored as a cross-check.  ``xs`` replaces the default uniform grid.
    """
    _require_moments(backend)
    if xs is None:
        if grid_n < 11:
            raise RulerError("grid-too-small", f"grid_n = {grid_n}")
        xs = np.linspace(0.0, 1.0, grid_n)
    else:
        xs = np.asarray(sorted(float(x) for x in xs))
        if len(xs) < 3:
            raise RulerError("grid-too-small", f"{len(xs)} points")
        if xs[0] < 0 or xs[-1] > 1:
            raise RulerError("x-out-of-range", f"grid spans [{xs[0]}, {xs[-1]}]")
        grid_n = len(xs)
    var = np.array([combo_variance(backend, kd_combo(ruler, float(x))) for x in xs])
    sig = np.sqrt(np.clip(var, 0.0, None))
    q = quadratic_variance(backend, ruler)
    fit = q[0] + q[1] * xs + q[2] * xs**2
    fit_err = float(np.max(np.abs(fit - var)))
    vertex = float(np.clip(-q[1] / (2 * q[2]), 0, 1)) if q[2] > 0 else None
    scale = max(float(np.max(sig)), 1e-300)
    if np.max(sig) - np.min(sig) < 1e-12 * max(1.0, scale) or np.max(sig) < 1e-12:
        k = int(np.argmin(sig))
        return SigmaScan(xs, sig, float(xs[k]), float(sig[k]), True, vertex, fit_err, width)
    k = int(np.argmin(var))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid_n - 1)]

    def f(x):
        return combo_variance(backend, kd_combo(ruler, float(min(max(x, 0.0), 1.0))))

    x_star = _golden_min(f, float(a), float(b), width)
    v_star = f(x_star)
    if v_star > var[k]:
        x_star, v_star = float(xs[k]), float(var[k])
    return SigmaScan(xs, sig, x_star, math.sqrt(max(v_star, 0.0)), False, vertex, fit_err, width)


# ---------------------------------------------------------------------------
# Modular commutators


@dataclass
class ChiralityReport:
    j_inner: float
    j_outer: float
    c_minus_edge: float
    eta_J: float | None
    j_bulk: float | None = None
    threshold: float = C_MINUS_THRESHOLD

    @property
    def j_edge(self) -> float:
        return self.j_inner

    @property
    def c_minus(self) -> float:
        return 3 * self.j_bulk / math.pi if self.j_bulk is not None else self.c_minus_edge

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_minus"] = self.c_minus
        return d


def modular_commutator(backend, A: Region, B: Region, C: Region) -> float:
    _require_moments(backend)
    return float(backend.modular_commutator(A, B, C))


def eta_J_pair(
    backend, ruler: ConformalRuler, j_bulk: float | None = None, threshold: float = C_MINUS_THRESHOLD
) -> ChiralityReport:
    """Solve ``J(AA',B,CC') = (pi c/3)(1 - eta_J)`` and ``J(A,B,C) = -(pi c/3) eta_J``."""
    _require_moments(backend)
    j_in = backend.modular_commutator(ruler.A, ruler.B, ruler.C)
    j_out = backend.modular_commutator(ruler.A | ruler.A_prime, ruler.B, ruler.C | ruler.C_prime)
    gap = j_out - j_in
    c_minus = 3 * gap / math.pi
    if abs(c_minus) < threshold:
        raise NonchiralStateError(f"|c_minus| = {abs(c_minus):.3g} below {threshold}")
    return ChiralityReport(float(j_in), float(j_out), float(c_minus), float(-j_in / gap), j_bulk, threshold)


# ---------------------------------------------------------------------------
# Bulk checks


def bulk_delta_hat(B: Region, C: Region, D: Region) -> ModularCombo:
    return ModularCombo(((B | C, 1.0), (C | D, 1.0), (B, -1.0), (D, -1.0)), "A1-vector")


def bulk_a1_residual(
    backend, B: Region, C: Region, D: Region, lattice: Lattice | None = None
) -> tuple[float, float | None]:
    """Scalar ``Delta(B,C,D)`` and vector ``sigma(Delta_hat(B,C,D))`` residuals.

    The vector residual is ``None`` for entropy-only backends.
    """
    if lattice is not None and any(lattice.is_boundary(s) for s in union(B, C, D)):
        raise RulerError("region-touches-boundary")
    combo = bulk_delta_hat(B, C, D)
    scalar = combo.entropy_value(backend)
    if scalar < -TOL_SSA:
        raise RulerError("ssa-violation", f"Delta(B,C,D) = {scalar:.3e}")
    vector = sigma_of_combo(backend, combo) if getattr(backend, "supports_moments", False) else None
    return max(scalar, 0.0), vector


def deformation_residual(
    backend, lattice: Lattice, ruler: ConformalRuler, move: BulkMove
) -> tuple[float, float]:
    """``(|change of Delta|, |change of I|)`` under a bulk move."""
    new = deform_ruler(lattice, ruler, move)
    a, b = combo_delta_I(backend, ruler), combo_delta_I(backend, new)
    return abs(b.raw_delta - a.raw_delta), abs(b.raw_i - a.raw_i)


def genericity_gram(
    backend,
    ruler1: ConformalRuler,
    ruler2: ConformalRuler,
    c_minus: float | None = None,
    eta1: float | None = None,
    eta2: float | None = None,
) -> dict:
    """Gram determinant of normalized ``{Delta1|psi>, Delta2|psi>, |psi>}`` and the commutator check.

    ``ruler1`` and ``ruler2`` are the rulers of two overlapping triples
    ``(a, b, c)`` and ``(b, c, d)``.  The commutator
    ``i <[Delta1, Delta2]>`` is compared with ``(pi c/3)(1 - eta1 - eta2)``
    when ``c_minus`` and both etas are given.
    """
    _require_moments(backend)
    d1, d2 = delta_hat(ruler1), delta_hat(ruler2)
    m11 = backend.modular_combo_moment(d1, d1).real
    m22 = backend.modular_combo_moment(d2, d2).real
    m12 = backend.modular_combo_moment(d1, d2)
    e1, e2 = backend.modular_combo_mean(d1), backend.modular_combo_mean(d2)
    norms = np.sqrt(np.maximum([m11, m22, 1.0], 0.0))
    G = np.array([[m11, m12, e1], [np.conj(m12), m22, e2], [e1, e2, 1.0]], dtype=complex)
    if np.min(norms) < 1e-14:
        gram = 0.0
    else:
        G = G / np.outer(norms, norms)
        gram = float(np.linalg.det(G).real)
    comm = float(-2 * m12.imag)
    out = {"gram_det": gram, "commutator": comm, "prediction": None, "relative_error": None}
    if c_minus is not None and eta1 is not None and eta2 is not None:
        pred = math.pi * c_minus / 3 * (1 - eta1 - eta2)
        out["prediction"] = pred
        out["relative_error"] = abs(comm - pred) / max(abs(pred), 1e-300)
    return out
