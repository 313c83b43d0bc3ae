"""Square-lattice geometry, regions, edge intervals and conformal rulers.

Sites of a ``width x height`` open rectangle are indexed row-major,
``index = y * width + x``.  Boundary sites are ordered counterclockwise
starting from the corner ``(0, 0)``: along the bottom row to the right,
up the right column, back along the top row and down the left column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class LatticeError(ValueError):
    """Raised for invalid lattice geometry (``kind`` names the failure)."""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


@dataclass(frozen=True)
class Region:
    """An immutable, strictly sorted set of site indices."""

    sites: tuple[int, ...] = ()

    def __post_init__(self):
        s = tuple(sorted({int(i) for i in self.sites}))
        if len(s) != len(self.sites):
            raise LatticeError("duplicate-site", f"{self.sites}")
        if s and s[0] < 0:
            raise LatticeError("out-of-bounds", f"negative index {s[0]}")
        object.__setattr__(self, "sites", s)

    @classmethod
    def of(cls, sites: Iterable[int]) -> "Region":
        return cls(tuple(sorted(set(int(i) for i in sites))))

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return site in self._set

    @property
    def _set(self) -> frozenset:
        return frozenset(self.sites)

    def __or__(self, other: "Region") -> "Region":
        return Region.of(self._set | other._set)

    def __and__(self, other: "Region") -> "Region":
        return Region.of(self._set & other._set)

    def __sub__(self, other: "Region") -> "Region":
        return Region.of(self._set - other._set)

    def isdisjoint(self, other: "Region") -> bool:
        return self._set.isdisjoint(other._set)

    def __bool__(self) -> bool:
        return bool(self.sites)


EMPTY = Region()


def union(*regions: Region) -> Region:
    out: set[int] = set()
    for r in regions:
        out.update(r.sites)
    return Region.of(out)


@dataclass(frozen=True)
class Lattice:
    width: int
    height: int
    boundary: str = "open-open"

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise LatticeError(
                "dimension-too-small", f"need width, height >= 4, got {self.width}x{self.height}"
            )
        if self.boundary != "open-open":
            raise LatticeError("unsupported-boundary", self.boundary)

    @property
    def n_sites(self) -> int:
        return self.width * self.height

    def index(self, x: int, y: int) -> int:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise LatticeError("out-of-bounds", f"({x}, {y})")
        return y * self.width + x

    def coords(self, site: int) -> tuple[int, int]:
        if not 0 <= site < self.n_sites:
            raise LatticeError("out-of-bounds", f"site {site}")
        return site % self.width, site // self.width

    def neighbors(self, site: int) -> list[int]:
        x, y = self.coords(site)
        out = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            u, v = x + dx, y + dy
            if 0 <= u < self.width and 0 <= v < self.height:
                out.append(v * self.width + u)
        return out

    def bonds(self) -> list[tuple[int, int, tuple[int, int]]]:
        """Nearest-neighbour bonds ``(r, r + a, a)`` with ``a`` in {(1,0), (0,1)}."""
        out = []
        for y in range(self.height):
            for x in range(self.width):
                r = y * self.width + x
                if x + 1 < self.width:
                    out.append((r, r + 1, (1, 0)))
                if y + 1 < self.height:
                    out.append((r, r + self.width, (0, 1)))
        return out

    def is_boundary(self, site: int) -> bool:
        x, y = self.coords(site)
        return x == 0 or y == 0 or x == self.width - 1 or y == self.height - 1

    def boundary_loop(self) -> list[int]:
        """Boundary sites in counterclockwise order starting at corner (0, 0)."""
        W, H = self.width, self.height
        loop = [self.index(x, 0) for x in range(W)]
        loop += [self.index(W - 1, y) for y in range(1, H)]
        loop += [self.index(x, H - 1) for x in range(W - 2, -1, -1)]
        loop += [self.index(0, y) for y in range(H - 2, 0, -1)]
        return loop

    def all_sites(self) -> Region:
        return Region(tuple(range(self.n_sites)))

    def complement(self, region: Region) -> Region:
        return self.all_sites() - region

    def check_region(self, region: Region) -> None:
        if region.sites and region.sites[-1] >= self.n_sites:
            raise LatticeError("out-of-bounds", f"site {region.sites[-1]} on {self.width}x{self.height}")


def build_square_lattice(width: int, height: int) -> Lattice:
    return Lattice(int(width), int(height))


def region_from_rect(lattice: Lattice, x0: int, y0: int, x1: int, y1: int) -> Region:
    """Sites of the inclusive rectangle ``[x0, x1] x [y0, y1]``."""
    if x0 > x1 or y0 > y1:
        raise LatticeError("out-of-bounds", f"empty rectangle ({x0},{y0},{x1},{y1})")
    if x0 < 0 or y0 < 0 or x1 >= lattice.width or y1 >= lattice.height:
        raise LatticeError("out-of-bounds", f"rectangle ({x0},{y0},{x1},{y1})")
    return Region(tuple(y * lattice.width + x for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)))


def region_from_rects(lattice: Lattice, rects: Iterable[Sequence[int]]) -> Region:
    return union(*(region_from_rect(lattice, *r) for r in rects))


@dataclass(frozen=True)
class EdgeInterval:
    """A contiguous arc of boundary sites, as positions ``[start, stop)`` on the loop."""

    label: str
    endpoints: tuple[int, int]
    anchored_region: Region = EMPTY


@dataclass(frozen=True)
class ConformalRuler:
    """Five-region partition (A, A', B, C, C') anchored on three edge intervals."""

    A: Region
    A_prime: Region
    B: Region
    C: Region
    C_prime: Region
    edge_triple: tuple[str, str, str] = ("a", "b", "c")

    def regions(self) -> dict[str, Region]:
        return {"A": self.A, "A_prime": self.A_prime, "B": self.B, "C": self.C, "C_prime": self.C_prime}

    @property
    def support(self) -> Region:
        return union(self.A, self.A_prime, self.B, self.C, self.C_prime)

    def reversed(self) -> "ConformalRuler":
        """The same ruler read in the opposite direction, ``(C, C', B, A, A')``."""
        a, b, c = self.edge_triple
        return ConformalRuler(self.C, self.C_prime, self.B, self.A, self.A_prime, (c, b, a))

    def replace(self, **kw) -> "ConformalRuler":
        d = dict(self.regions(), edge_triple=self.edge_triple)
        d.update(kw)
        return ConformalRuler(**d)


@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    offending: dict[str, list[int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def _record(self, name: str, bad: Iterable[int]) -> None:
        bad = sorted(set(bad))
        self.checks[name] = not bad
        self.offending[name] = bad


def _connected(lattice: Lattice, region: Region) -> bool:
    if not region:
        return True
    members = region._set
    seen = {region.sites[0]}
    stack = [region.sites[0]]
    while stack:
        s = stack.pop()
        for n in lattice.neighbors(s):
            if n in members and n not in seen:
                seen.add(n)
                stack.append(n)
    return len(seen) == len(members)


def _boundary_arc_ok(lattice: Lattice, region: Region) -> bool:
    """True if the region meets the boundary loop in one nonempty contiguous arc."""
    loop = lattice.boundary_loop()
    hits = [s in region for s in loop]
    n = len(loop)
    if not any(hits):
        return False
    if all(hits):
        return True
    starts = sum(1 for i in range(n) if hits[i] and not hits[i - 1])
    return starts == 1


def validate_ruler(lattice: Lattice, ruler: ConformalRuler) -> ValidationReport:
    """Check every ruler invariant; failures are reported, never raised."""
    rep = ValidationReport()
    regs = ruler.regions()
    for r in regs.values():
        lattice.check_region(r)

    names = list(regs)
    overlap = []
    for i, p in enumerate(names):
        for q in names[i + 1:]:
            overlap += list((regs[p] & regs[q]).sites)
    rep._record("disjoint", overlap)

    for key in ("A", "B", "C"):
        rep.checks[f"{key}_nonempty"] = bool(regs[key])
        rep.offending[f"{key}_nonempty"] = []

    sup = ruler.support
    rep.checks["connected"] = _connected(lattice, sup)
    rep.offending["connected"] = [] if rep.checks["connected"] else list(sup.sites)

    C_set = ruler.C._set
    adj = [s for s in ruler.A.sites if any(n in C_set for n in lattice.neighbors(s))]
    rep._record("A_C_not_adjacent", adj)

    shield = union(ruler.A, ruler.A_prime, ruler.C, ruler.C_prime)._set
    B_set = ruler.B._set
    leaks = [
        n
        for s in ruler.B.sites
        for n in lattice.neighbors(s)
        if n not in B_set and n not in shield
    ]
    rep._record("B_shielded", leaks)

    for key in ("A", "B", "C"):
        ok = _boundary_arc_ok(lattice, regs[key])
        rep.checks[f"{key}_anchored"] = ok
        rep.offending[f"{key}_anchored"] = [] if ok else list(regs[key].sites)
    primes = [s for s in union(ruler.A_prime, ruler.C_prime).sites if lattice.is_boundary(s)]
    rep._record("primes_off_edge", primes)

    loop = lattice.boundary_loop()
    pos = {s: i for i, s in enumerate(loop)}
    arcs = []
    for key in ("A", "B", "C"):
        arcs.append(sorted(pos[s] for s in regs[key].sites if s in pos))
    order_ok = all(arcs) and _arcs_consecutive(arcs, len(loop))
    rep.checks["edge_intervals_consecutive"] = order_ok
    rep.offending["edge_intervals_consecutive"] = []
    return rep


def _arc_bounds(positions: list[int], n: int) -> tuple[int, int]:
    """Return (start, stop) of a contiguous cyclic arc given its member positions."""
    s = set(positions)
    if len(s) == n:
        return 0, n
    start = next(p for p in positions if (p - 1) % n not in s)
    return start, (start + len(s)) % n


def _arcs_consecutive(arcs: list[list[int]], n: int) -> bool:
    """True if the arcs follow each other along the loop, in either direction."""
    try:
        b = [_arc_bounds(a, n) for a in arcs]
    except StopIteration:
        return False
    ccw = b[0][1] == b[1][0] and b[1][1] == b[2][0]
    cw = b[2][1] == b[1][0] and b[1][1] == b[0][0]
    return ccw or cw


@dataclass(frozen=True)
class BulkMove:
    """Move bulk sites between ruler regions (or in/out of the ruler)."""

    kind: str  # transfer | grow | shrink
    moved: Region
    source: str | None = None
    target: str | None = None


_RULER_KEYS = ("A", "A_prime", "B", "C", "C_prime")


def deform_ruler(lattice: Lattice, ruler: ConformalRuler, move: BulkMove) -> ConformalRuler:
    """Apply a bulk move; raise ``invalid-move`` if the result is not a valid ruler."""
    if move.kind not in ("transfer", "grow", "shrink"):
        raise LatticeError("invalid-move", f"unknown kind {move.kind!r}")
    if any(lattice.is_boundary(s) for s in move.moved):
        raise LatticeError("invalid-move", "moved sites touch the boundary")
    regs = ruler.regions()
    if move.kind in ("transfer", "shrink"):
        if move.source not in _RULER_KEYS or not set(move.moved.sites) <= regs[move.source]._set:
            raise LatticeError("invalid-move", f"moved sites not in source {move.source!r}")
        regs[move.source] = regs[move.source] - move.moved
    if move.kind in ("transfer", "grow"):
        if move.target not in _RULER_KEYS:
            raise LatticeError("invalid-move", f"bad target {move.target!r}")
        if move.kind == "grow" and not move.moved.isdisjoint(ruler.support):
            raise LatticeError("invalid-move", "grown sites already belong to the ruler")
        regs[move.target] = regs[move.target] | move.moved
    new = ConformalRuler(edge_triple=ruler.edge_triple, **regs)
    rep = validate_ruler(lattice, new)
    if not rep.ok:
        raise LatticeError("invalid-move", f"result violates {rep.failures()}")
    return new


def edge_strip_regions(lattice: Lattice, x0: int, w: int, h: int) -> dict[str, Region]:
    """Two-layer family of regions along the bottom edge.

    Layer one (``0 <= y < h``) holds ``A | B | C | D``, each ``w`` columns
    wide from ``x0``.  Layer two (``h <= y < 2h``) holds ``X`` (over A and
    the left half of B), ``Y`` (right half of B to the middle of C) and
    ``Z`` (the rest of C and all of D).  The rulers ``(A,X,B,C,Y)``,
    ``(B,Y,C,D,Z)``, ``(AB,XY,C,D,Z)``, ``(A,X,B,CD,YZ)`` and
    ``(A,XY,BC,D,Z)`` are all valid.
    """
    if x0 < 1 or x0 + 4 * w > lattice.width - 1 or 2 * h > lattice.height - 1:
        raise LatticeError("out-of-bounds", "edge strip does not fit away from the corners")

    def rect(a, b, y0, y1):
        return region_from_rect(lattice, a, y0, b - 1, y1 - 1)

    mb, mc = x0 + w + w // 2, x0 + 2 * w + w // 2
    return {
        "A": rect(x0, x0 + w, 0, h),
        "B": rect(x0 + w, x0 + 2 * w, 0, h),
        "C": rect(x0 + 2 * w, x0 + 3 * w, 0, h),
        "D": rect(x0 + 3 * w, x0 + 4 * w, 0, h),
        "X": rect(x0, mb, h, 2 * h),
        "Y": rect(mb, mc, h, 2 * h),
        "Z": rect(mc, x0 + 4 * w, h, 2 * h),
    }


def site_grid(lattice: Lattice, labels: dict[str, Region]) -> np.ndarray:
    """Character grid of region labels, row 0 at the bottom (debugging aid)."""
    grid = np.full((lattice.height, lattice.width), ".", dtype="<U2")
    for name, reg in labels.items():
        for s in reg:
            x, y = lattice.coords(s)
            grid[y, x] = name[:2]
    return grid[::-1]
