"""Cross-ratio tables, their consistency relations and the circle embedding.

Edge endpoints are labelled ``0 .. n-1`` counterclockwise; elementary
interval ``i`` runs from endpoint ``i`` to endpoint ``i + 1`` (mod n).  A
triple of consecutive intervals ``(a, b, c)`` is keyed by its endpoint
quadruple ``(i, j, k, l)`` with ``a = (i, j)``, ``b = (j, k)``,
``c = (k, l)``.  The reversed triple ``(c, b, a)`` maps to the same key.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .lattice import Region
from .ruler import CEtaSolution, EntropyCombo, combo_delta_I, ruler_1d, solve_c_eta, solve_c_eta_batch

TWO_PI = 2 * math.pi


class CrossRatioError(ValueError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


Key = tuple[int, int, int, int]


def interval_sites(i: int, j: int, n: int) -> Region:
    """Elementary intervals making up the arc from endpoint ``i`` to ``j``."""
    m = (j - i) % n
    return Region.of((i + t) % n for t in range(m))


def all_keys(n: int) -> list[Key]:
    """Every cyclically ordered quadruple of distinct endpoints."""
    keys = []
    for quad in combinations(range(n), 4):
        for r in range(4):
            keys.append(quad[r:] + quad[:r])
    return keys


@dataclass
class EtaTable:
    """Quantum cross-ratios ``eta`` and ``c_tot`` indexed by endpoint quadruples."""

    n_endpoints: int
    eta: dict[Key, float | None] = field(default_factory=dict)
    c_tot: dict[Key, float] = field(default_factory=dict)
    degenerate: dict[Key, str] = field(default_factory=dict)

    def set(self, key: Sequence[int], sol: CEtaSolution) -> None:
        key = tuple(int(k) for k in key)
        self.eta[key] = sol.eta
        self.c_tot[key] = sol.c_tot
        self.degenerate[key] = sol.degenerate

    def _get(self, store: dict, key: Sequence[int]):
        key = tuple(int(k) for k in key)
        if key not in store:
            raise CrossRatioError("missing-entry", f"{key}")
        return store[key]

    def get_eta(self, key: Sequence[int]) -> float:
        v = self._get(self.eta, key)
        if v is None:
            raise CrossRatioError("missing-entry", f"eta undetermined at {tuple(key)}")
        return v

    def get_c(self, key: Sequence[int]) -> float:
        return self._get(self.c_tot, key)

    def keys(self) -> list[Key]:
        return list(self.eta)

    def to_json(self) -> dict:
        return {
            "n_endpoints": self.n_endpoints,
            "entries": [
                {"key": list(k), "eta": self.eta[k], "c_tot": self.c_tot[k], "degenerate": self.degenerate.get(k, "none")}
                for k in self.eta
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "EtaTable":
        t = cls(int(data["n_endpoints"]))
        for e in data["entries"]:
            k = tuple(int(v) for v in e["key"])
            t.eta[k] = e["eta"]
            t.c_tot[k] = e["c_tot"]
            t.degenerate[k] = e.get("degenerate", "none")
        return t

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "EtaTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_eta_table(backend, n_endpoints: int, keys: Iterable[Key] | None = None) -> EtaTable:
    """Solve for ``(c_tot, eta)`` on every key, using a 1D backend.

    The backend's sites are the elementary intervals.  With ``A' = C' = 0``
    the combinations reduce to interval entropies ``S(i, j)``:
    ``Delta = S(i,k) + S(j,l) - S(i,j) - S(k,l)`` and
    ``I = S(i,k) + S(j,l) - S(j,k) - S(i,l)``.
    """
    n = n_endpoints
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                S[i, j] = backend.entropy(interval_sites(i, j, n))
    keys = list(keys) if keys is not None else all_keys(n)
    combos = []
    for i, j, k, l in keys:
        common = S[i, k] + S[j, l]
        combos.append(EntropyCombo.from_raw(common - S[i, j] - S[k, l], common - S[j, k] - S[i, l]))
    sols = solve_c_eta_batch(np.array([c.delta for c in combos]), np.array([c.i_cond for c in combos]))
    table = EtaTable(n)
    for key, sol in zip(keys, sols):
        table.set(key, sol)
    return table


def build_eta_table_rulers(backend, n_endpoints: int, keys: Iterable[Key] | None = None) -> EtaTable:
    """Same as :func:`build_eta_table` but through full ruler combos (slower)."""
    table = EtaTable(n_endpoints)
    for key in keys if keys is not None else all_keys(n_endpoints):
        i, j, k, l = key
        r = ruler_1d(
            interval_sites(i, j, n_endpoints),
            interval_sites(j, k, n_endpoints),
            interval_sites(k, l, n_endpoints),
        )
        table.set(key, solve_c_eta(combo_delta_I(backend, r)))
    return table


# ---------------------------------------------------------------------------
# Relations


def complement_check(table: EtaTable, partition: Sequence[int]) -> float:
    """Max deviation of ``eta(a,b,c) = 1 - eta(b,c,d) = eta(c,d,a) = 1 - eta(d,a,b)``.

    ``partition`` is the endpoint quadruple ``(i, j, k, l)`` of the four
    intervals ``a, b, c, d``.  Equality of the four ``c_tot`` values is
    included in the deviation.
    """
    i, j, k, l = partition
    keys = [(i, j, k, l), (j, k, l, i), (k, l, i, j), (l, i, j, k)]
    e = [table.get_eta(q) for q in keys]
    c = [table.get_c(q) for q in keys]
    devs = [abs(e[0] - (1 - e[1])), abs(e[0] - e[2]), abs(e[0] - (1 - e[3]))]
    devs += [abs(c[0] - c[m]) for m in (1, 2, 3)]
    return float(max(devs))


def decomposition_predict(eta1: float, eta2: float) -> tuple[float, float, float]:
    """Predicted ``eta(ab,c,d)``, ``eta(a,b,cd)`` and ``eta(a,bc,d)``."""
    for v in (eta1, eta2):
        if not 0 < v < 1:
            raise CrossRatioError("input-at-endpoint", f"eta = {v}")
    e3 = eta2 / (1 - eta1)
    e4 = eta1 / (1 - eta2)
    return e3, e4, e3 * e4


def decomposition_keys(x: Sequence[int]) -> dict[str, Key]:
    """Keys of the five rulers on consecutive intervals ``a, b, c, d``.

    ``x`` lists the five endpoints ``x0 .. x4`` bounding ``a .. d``.
    """
    x0, x1, x2, x3, x4 = x
    return {
        "abc": (x0, x1, x2, x3),
        "bcd": (x1, x2, x3, x4),
        "ab_c_d": (x0, x2, x3, x4),
        "a_b_cd": (x0, x1, x2, x4),
        "a_bc_d": (x0, x1, x3, x4),
    }


def decomposition_check(table: EtaTable, endpoints: Sequence[int]) -> dict[str, float]:
    """``|direct - predicted|`` for the three decomposition identities."""
    k = decomposition_keys(endpoints)
    pred = decomposition_predict(table.get_eta(k["abc"]), table.get_eta(k["bcd"]))
    direct = [table.get_eta(k[n]) for n in ("ab_c_d", "a_b_cd", "a_bc_d")]
    return {n: abs(d - p) for n, d, p in zip(("ab_c_d", "a_b_cd", "a_bc_d"), direct, pred)}


def five_partition_check(table: EtaTable, endpoints: Sequence[int]) -> float:
    """Max deviation of ``eta_i = (1 - eta_{i-1})(1 - eta_{i+1})`` on a 5-partition.

    ``eta_i = eta(a_{i-1}, a_i, a_{i+1})`` with indices mod 5; ``endpoints``
    are the five boundaries, interval ``a_i`` running from ``endpoints[i]``.
    """
    x = list(endpoints)
    eta = [table.get_eta((x[(i - 1) % 5], x[i], x[(i + 1) % 5], x[(i + 2) % 5])) for i in range(5)]
    return float(max(abs(eta[i] - (1 - eta[i - 1]) * (1 - eta[(i + 1) % 5])) for i in range(5)))


def constant_c_check(table: EtaTable) -> tuple[float, float, float]:
    """``(max, min, spread)`` of the non-degenerate ``c_tot`` values."""
    vals = [c for k, c in table.c_tot.items() if table.degenerate.get(k, "none") == "none"]
    if len(vals) < 2:
        raise CrossRatioError("all-degenerate", f"{len(vals)} non-degenerate entries")
    hi, lo = max(vals), min(vals)
    return hi, lo, hi - lo


# ---------------------------------------------------------------------------
# Circle geometry


def chord(t1: float, t2: float) -> float:
    return 2 * abs(math.sin((t2 - t1) / 2))


def _eta_g(t: Sequence[float]) -> float:
    ti, tj, tk, tl = t
    num = chord(ti, tj) * chord(tk, tl)
    den = chord(ti, tk) * chord(tj, tl)
    if den == 0:
        raise CrossRatioError("coincident-endpoints")
    return num / den


@dataclass
class CircleEmbedding:
    """Angles of edge endpoints on the unit circle."""

    angles: dict[int, float]

    def angle_array(self) -> np.ndarray:
        return np.array([self.angles[k] for k in sorted(self.angles)])

    def to_json(self) -> dict:
        return {"angles": {str(k): v for k, v in sorted(self.angles.items())}}

    @classmethod
    def from_json(cls, data: dict) -> "CircleEmbedding":
        return cls({int(k): float(v) for k, v in data["angles"].items()})

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["endpoint", "angle"])
            for k in sorted(self.angles):
                w.writerow([k, f"{self.angles[k]:.17g}"])


def geometric_cross_ratio(embedding: CircleEmbedding, key: Sequence[int]) -> float:
    """``eta_g = l_a l_c / (l_ab l_bc)`` from chord lengths."""
    try:
        t = [embedding.angles[int(k)] for k in key]
    except KeyError as exc:
        raise CrossRatioError("missing-endpoint", str(exc)) from None
    if len(set(round(v % TWO_PI, 15) for v in t)) < 4:
        raise CrossRatioError("coincident-endpoints", f"{tuple(key)}")
    return _eta_g(t)


def equally_spaced(n: int, offset: float = 0.0) -> CircleEmbedding:
    return CircleEmbedding({i: (offset + TWO_PI * i / n) % TWO_PI for i in range(n)})


def circle_embed(
    table: EtaTable,
    anchor_angles: Sequence[float] = (0.0, TWO_PI / 3, 2 * TWO_PI / 3),
    closure_tol: float | None = 1e-6,
    allow_degenerate: bool = False,
) -> CircleEmbedding:
    """Place endpoints on the circle so elementary cross-ratios match the table.

    The first three endpoints sit at ``anchor_angles``.  Each further angle
    solves ``eta_g(i-2, i-1, i, i+1) = eta(i-2, i-1, i, i+1)`` by bisection on
    ``(theta_i, theta_0 + 2 pi)``, where ``eta_g`` increases from 0 to 1.  If
    ``closure_tol`` is set, every stored entry is then checked and a
    deviation above it raises ``inconsistent-table``.
    """
    n = table.n_endpoints
    if n < 4:
        raise CrossRatioError("too-few-endpoints", f"{n}")
    a = [float(v) for v in anchor_angles]
    if not (a[0] < a[1] < a[2] < a[0] + TWO_PI):
        raise CrossRatioError("bad-anchors", f"{a}")
    theta = a[:]
    for i in range(2, n - 1):
        key = (i - 2, i - 1, i, i + 1)
        target = table.get_eta(key)
        lo, hi = theta[i] + 1e-12, theta[0] + TWO_PI - 1e-12
        if lo >= hi:
            raise CrossRatioError("inconsistent-table", f"no room left on the circle at endpoint {i + 1}")
        if target <= 0 or target >= 1:
            if not allow_degenerate:
                raise CrossRatioError("inconsistent-table", f"eta{key} = {target} not in (0, 1)")
            theta.append(lo if target <= 0 else hi)
            continue

        def g(t):
            return _eta_g((theta[i - 2], theta[i - 1], theta[i], t)) - target

        glo, ghi = g(lo), g(hi)
        if not (glo < 0 < ghi):
            raise CrossRatioError("inconsistent-table", f"bracket empty at endpoint {i + 1}")
        theta.append(brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))
    emb = CircleEmbedding({k: theta[k] % TWO_PI for k in range(n)})
    if closure_tol is not None:
        dev = verify_embedding(emb, table)
        if dev > closure_tol:
            raise CrossRatioError("inconsistent-table", f"closure deviation {dev:.3e} > {closure_tol:.1e}")
    return emb


def verify_embedding(embedding: CircleEmbedding, table: EtaTable) -> float:
    """Max ``|eta - eta_g|`` over every non-degenerate stored entry."""
    dev = 0.0
    for key, eta in table.eta.items():
        if eta is None or table.degenerate.get(key, "none") != "none":
            continue
        dev = max(dev, abs(eta - geometric_cross_ratio(embedding, key)))
    return float(dev)
