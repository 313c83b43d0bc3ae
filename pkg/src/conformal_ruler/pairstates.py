"""Exotic pair states on a ring of 2N sites.

Each site holds 2N - 1 qubits.  Site ``i`` is joined to sites ``i +- k``
(k = 1..N-1) and to its diametral partner ``i + N`` by two-qubit pairs
``sqrt(p_k)|00> + sqrt(1 - p_k)|11>`` of entanglement ``chi_k = h(p_k)``.
Every modular Hamiltonian of a union of sites is diagonal in the
computational basis, so all moments reduce to independent classical
two-outcome variables, one per bond.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

from .lattice import Region

LN2 = float(np.log(2.0))


class PairStateError(ValueError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


def binary_entropy(p: float) -> float:
    return float(-xlogy(p, p) - xlogy(1 - p, 1 - p))


def chi_to_p(chi: float) -> float:
    """Invert ``chi = h(p)`` on ``p in (0, 1/2]``; ``chi = 0`` maps to 0."""
    if not -1e-15 <= chi <= LN2 + 1e-15:
        raise PairStateError("chi-out-of-range", f"{chi}")
    if chi <= 0:
        return 0.0
    if chi >= LN2:
        return 0.5
    return float(brentq(lambda p: binary_entropy(p) - chi, 1e-300, 0.5, xtol=1e-16, rtol=1e-15))


@dataclass(frozen=True)
class BondLayout:
    """Bonds ``(qubit_a, qubit_b, k)`` of the 2N-site ring."""

    N: int
    bonds: tuple[tuple[int, int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 2:
            raise PairStateError("invalid-size", f"N = {self.N}")
        N, Q = self.N, self.qubits_per_site
        bonds = []
        for k in range(1, N):
            for i in range(2 * N):
                j = (i + k) % (2 * N)
                bonds.append((i * Q + 2 * (k - 1), j * Q + 2 * (k - 1) + 1, k))
        for i in range(N):
            bonds.append((i * Q + 2 * N - 2, (i + N) * Q + 2 * N - 2, N))
        object.__setattr__(self, "bonds", tuple(bonds))

    @property
    def n_sites(self) -> int:
        return 2 * self.N

    @property
    def qubits_per_site(self) -> int:
        return 2 * self.N - 1

    @property
    def n_qubits(self) -> int:
        return self.n_sites * self.qubits_per_site

    def site_of(self, qubit: int) -> int:
        return qubit // self.qubits_per_site

    def bond_sites(self) -> np.ndarray:
        """``(n_bonds, 2)`` array of bond endpoint sites."""
        return np.array([(self.site_of(a), self.site_of(b)) for a, b, _ in self.bonds])

    def qubits(self, sites: Iterable[int]) -> list[int]:
        Q = self.qubits_per_site
        return [s * Q + j for s in sites for j in range(Q)]


@dataclass(frozen=True)
class ExoticWeights:
    alpha: float
    beta: float
    chi: tuple[float, ...]

    @property
    def N(self) -> int:
        return len(self.chi)


@dataclass(frozen=True)
class PairState:
    layout: BondLayout
    bond_params: dict = field(hash=False)

    def __post_init__(self):
        for k in range(1, self.layout.N + 1):
            p = self.bond_params.get(k)
            if p is None or not 0 < p <= 0.5:
                raise PairStateError("invalid-bond", f"p_{k} = {p}")

    @classmethod
    def from_weights(cls, weights: ExoticWeights) -> "PairState":
        return cls(BondLayout(weights.N), {k + 1: chi_to_p(c) for k, c in enumerate(weights.chi)})

    @classmethod
    def uniform(cls, N: int, p: float = 0.5) -> "PairState":
        return cls(BondLayout(N), {k: p for k in range(1, N + 1)})

    @property
    def chi(self) -> dict[int, float]:
        return {k: binary_entropy(p) for k, p in self.bond_params.items()}

    def bond_p(self) -> np.ndarray:
        return np.array([self.bond_params[k] for _, _, k in self.layout.bonds])


def chord(n: int, N: int) -> float:
    """Chord length of ``n`` consecutive sites on the 2N-site unit circle."""
    return 2 * np.sin(n * np.pi / (2 * N))


def solve_exotic_weights(N: int, alpha: float, beta: float) -> ExoticWeights:
    """Closed-form bond strengths reproducing ``S_n = alpha ln(l_n / l_1) + beta``.

    Raises ``invalid-weights`` if some ``chi_k`` leaves ``(0, ln 2]``.
    """
    if N < 2 or alpha <= 0 or beta <= 0:
        raise PairStateError("invalid-weights", f"N={N}, alpha={alpha}, beta={beta}")
    s = lambda k: np.sin(k * np.pi / (2 * N))  # noqa: E731
    chi = np.zeros(N)
    for k in range(2, N + 1):
        chi[k - 1] = alpha * np.log(s(k) / np.sqrt(s(k - 1) * s(k + 1)))
    chi[0] = (beta - 2 * chi[1 : N - 1].sum() - chi[N - 1]) / 2
    bad = [k + 1 for k, c in enumerate(chi) if not 0 < c <= LN2]
    if bad:
        raise PairStateError("invalid-weights", f"chi_{bad} outside (0, ln 2]: {chi}")
    return ExoticWeights(float(alpha), float(beta), tuple(float(c) for c in chi))


def exotic_system(N: int) -> np.ndarray:
    """Matrix ``M`` with ``S_n = (M chi)_n`` for n = 1..N."""
    M = np.zeros((N, N))
    for n in range(1, N + 1):
        for k in range(1, N):
            M[n - 1, k - 1] = 2 * min(n, k)
        M[n - 1, N - 1] = n
    return M


def solve_exotic_weights_dense(N: int, alpha: float, beta: float) -> np.ndarray:
    """Independent check: solve the N x N entropy system with a dense solver."""
    rhs = np.array([alpha * np.log(chord(n, N) / chord(1, N)) + beta for n in range(1, N + 1)])
    return np.linalg.solve(exotic_system(N), rhs)


def validity_grid(N: int, alphas: Sequence[float], betas: Sequence[float]) -> list[dict]:
    """Rows ``{alpha, beta, valid, chi_1..chi_N}`` over a parameter grid."""
    rows = []
    for a in alphas:
        for b in betas:
            try:
                chi = solve_exotic_weights(N, a, b).chi
                valid = True
            except PairStateError:
                chi = tuple(float(c) for c in solve_exotic_weights_dense(N, a, b))
                valid = False
            row = {"alpha": float(a), "beta": float(b), "valid": valid}
            row.update({f"chi_{k + 1}": c for k, c in enumerate(chi)})
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Entropies and moments


def _site_mask(state: PairState, sites: Iterable[int]) -> np.ndarray:
    n = state.layout.n_sites
    mask = np.zeros(n, dtype=bool)
    for s in sites:
        if not 0 <= s < n:
            raise PairStateError("partial-site-region", f"site {s} not in 0..{n - 1}")
        mask[s] = True
    return mask


def _cut_bonds(state: PairState, sites: Iterable[int]) -> np.ndarray:
    mask = _site_mask(state, sites)
    bs = state.layout.bond_sites()
    return mask[bs[:, 0]] != mask[bs[:, 1]]


def region_entropy(state: PairState, sites: Iterable[int]) -> float:
    """Sum of ``chi`` over bonds with exactly one endpoint in ``sites``."""
    cut = _cut_bonds(state, sites)
    chi = np.array([binary_entropy(p) for p in state.bond_p()])
    return float(chi[cut].sum())


def _is_arc(sites: Sequence[int], n: int) -> bool:
    s = set(sites)
    if not s or len(s) == n:
        return True
    starts = sum(1 for i in s if (i - 1) % n not in s)
    return starts == 1


def interval_entropy(state: PairState, interval: Sequence[int]) -> float:
    """Entropy of a contiguous arc of sites."""
    if not _is_arc(interval, state.layout.n_sites):
        raise PairStateError("non-contiguous-interval", f"{sorted(interval)}")
    return region_entropy(state, interval)


def arc(start: int, length: int, n: int) -> list[int]:
    return [(start + j) % n for j in range(length)]


def bond_combination(state: PairState, combo) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bond values of ``sum_X w_X K_X`` on the outcomes 00 and 11.

    Returns
    -------
    v00, v11 : ndarray
        Values of the combined operator when the bond is in ``|00>`` or ``|11>``.
    p : ndarray
        Probability of ``|00>`` for each bond.
    """
    p = state.bond_p()
    weight = np.zeros(len(p))
    for region, w in combo.terms:
        weight += w * _cut_bonds(state, region.sites)
    with np.errstate(divide="ignore"):
        v00 = np.where(weight != 0, -weight * np.log(p), 0.0)
        v11 = np.where(weight != 0, -weight * np.log1p(-p), 0.0)
    return v00, v11, p


def pair_mean_var(state: PairState, combo1, combo2) -> tuple[float, float, float]:
    """Means of both combos and their covariance, exactly."""
    a0, a1, p = bond_combination(state, combo1)
    b0, b1, _ = bond_combination(state, combo2)
    m1 = float(np.sum(p * a0 + (1 - p) * a1))
    m2 = float(np.sum(p * b0 + (1 - p) * b1))
    cov = float(np.sum(p * (1 - p) * (a0 - a1) * (b0 - b1)))
    return m1, m2, cov


class PairStateBackend:
    """Exact state backend; site regions index the 2N ring sites."""

    supports_moments = True
    name = "pairstate"

    def __init__(self, state: PairState):
        self.state = state

    def entropy(self, region: Region) -> float:
        return region_entropy(self.state, region.sites)

    def modular_combo_moment(self, combo1, combo2) -> complex:
        m1, m2, cov = pair_mean_var(self.state, combo1, combo2)
        return complex(cov + m1 * m2)

    def modular_combo_mean(self, combo) -> float:
        return pair_mean_var(self.state, combo, combo)[0]

    def combo_variance(self, combo) -> float:
        return pair_mean_var(self.state, combo, combo)[2]

    def modular_commutator(self, A: Region, B: Region, C: Region) -> float:
        # every K_X is diagonal in the computational basis
        return 0.0
