"""Analytic 1+1D CFT entropies on a circle and the Casini-Huerta estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Region
from .ruler import BackendCapabilityError


class CFTError(ValueError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


@dataclass(frozen=True)
class CFTCircle:
    """Ground state of a CFT with central charge ``c`` on the unit circle.

    ``angles`` are the edge endpoints; elementary interval ``i`` is the arc
    from ``angles[i]`` to ``angles[i + 1]`` (cyclically).
    """

    c: float
    epsilon: float
    angles: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in self.angles)
        object.__setattr__(self, "angles", a)
        if self.c <= 0 or self.epsilon <= 0:
            raise CFTError("invalid-model", f"c = {self.c}, epsilon = {self.epsilon}")
        if len(a) < 2 or any(not 0 <= v < 2 * math.pi for v in a):
            raise CFTError("invalid-model", "angles must lie in [0, 2 pi)")
        if any(b <= x for x, b in zip(a, a[1:])):
            raise CFTError("invalid-model", "angles must increase")
        arcs = np.diff(list(a) + [a[0] + 2 * math.pi])
        if 2 * math.sin(min(arcs) / 2) <= self.epsilon:
            raise CFTError("invalid-model", "epsilon is not below the smallest chord")

    @classmethod
    def equally_spaced(cls, c: float, n: int, epsilon: float = 1e-3) -> "CFTCircle":
        return cls(c, epsilon, tuple(2 * math.pi * i / n for i in range(n)))

    @property
    def n_endpoints(self) -> int:
        return len(self.angles)

    def chord(self, i: int, j: int) -> float:
        return 2 * abs(math.sin((self.angles[j % self.n_endpoints] - self.angles[i % self.n_endpoints]) / 2))


def cft_entropy(model: CFTCircle, interval: tuple[int, int]) -> float:
    """``(c/6) ln(l / epsilon)`` for the arc between endpoints ``interval``."""
    i, j = interval
    if i % model.n_endpoints == j % model.n_endpoints:
        raise CFTError("empty-interval", f"{interval}")
    return model.c / 6 * math.log(model.chord(i, j) / model.epsilon)


def _arc_endpoints(region: Region, n: int) -> tuple[int, int] | None:
    s = set(region.sites)
    if any(not 0 <= v < n for v in s):
        raise CFTError("unknown-interval", f"{sorted(s)}")
    if len(s) == n:
        return None
    starts = [v for v in s if (v - 1) % n not in s]
    if len(starts) != 1:
        raise CFTError("non-contiguous-interval", f"{sorted(s)}")
    return starts[0], (starts[0] + len(s)) % n


class CFTBackend:
    """Entropy-only backend; regions are sets of elementary intervals."""

    supports_moments = False
    name = "cft"

    def __init__(self, model: CFTCircle):
        self.model = model

    def entropy(self, region: Region) -> float:
        if not region:
            return 0.0
        ends = _arc_endpoints(region, self.model.n_endpoints)
        if ends is None:
            return 0.0  # pure global state
        return cft_entropy(self.model, ends)

    def _refuse(self, *args, **kw):
        raise BackendCapabilityError("the CFT backend answers entropy queries only")

    modular_combo_moment = modular_combo_mean = combo_variance = modular_commutator = _refuse


def cft_backend(model: CFTCircle) -> CFTBackend:
    return CFTBackend(model)


def casini_huerta_estimate(entropy_profile: Callable[[float], float], r: float, dr: float) -> float:
    """Backward-difference estimate of ``c_CH = 6 r dS/dr``.

    ``6 r (S(r) - S(r - dr)) / dr``; the error is first order in ``dr``.
    """
    if not 0 < dr < r:
        raise CFTError("invalid-window", f"r = {r}, dr = {dr}")
    return 6 * r * (entropy_profile(r) - entropy_profile(r - dr)) / dr


def random_circle(rng: np.random.Generator, n: int, c: float, epsilon: float | None = None, min_arc: float = 0.05) -> CFTCircle:
    """CFT circle with ``n`` random endpoints separated by at least ``min_arc``.

    The default cutoff is half the smallest chord, which keeps entropies of
    order one and limits cancellation in ``Delta`` and ``I``.
    """
    while True:
        a = np.sort(rng.uniform(0, 2 * math.pi, n))
        arcs = np.diff(np.append(a, a[0] + 2 * math.pi))
        if arcs.min() > min_arc:
            eps = epsilon if epsilon is not None else math.sin(arcs.min() / 2)
            return CFTCircle(c, eps, tuple(a))
