"""Fermionic Gaussian states in the Majorana representation.

Conventions (all pinned against the dense oracle in :mod:`edoracle`):

* complex mode ``j`` carries Majoranas ``2j`` and ``2j + 1`` with
  ``a_j = (gamma_{2j} + i gamma_{2j+1}) / 2``;
* the covariance is ``Gamma_kl = (i/2) <[gamma_k, gamma_l]>``, so that
  ``<gamma_k gamma_l> = delta_kl - i Gamma_kl``;
* a quadratic form is ``O = (i/4) gamma^T H gamma + s`` with ``H`` real
  antisymmetric.  A Gaussian state with modular Hamiltonian ``K`` of matrix
  ``H`` has ``i Gamma = -tanh(i H / 2)``.

A lattice site holds one complex fermion, so site ``s`` owns Majorana ids
``(2s, 2s + 1)`` and a :class:`~conformal_ruler.lattice.Region` of sites maps
directly onto Majorana modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .lattice import Lattice, Region

EPS_KER = 1e-12


class GaussianError(ValueError):
    """Raised by Gaussian-state operations (``kind`` names the failure)."""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


def site_modes(sites: Iterable[int]) -> list[int]:
    out = []
    for s in sites:
        out += [2 * s, 2 * s + 1]
    return out


# ---------------------------------------------------------------------------
# Data types


@dataclass(frozen=True)
class MajoranaCovariance:
    """Real antisymmetric covariance on an ordered list of Majorana ids."""

    modes: tuple[int, ...]
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        m = tuple(int(i) for i in self.modes)
        if g.shape != (len(m), len(m)):
            raise GaussianError("shape-mismatch", f"{g.shape} for {len(m)} modes")
        if len(set(m)) != len(m):
            raise GaussianError("duplicate-mode")
        if g.size and np.max(np.abs(g + g.T)) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise GaussianError("not-antisymmetric")
        g = 0.5 * (g - g.T)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "modes", m)

    @classmethod
    def from_matrix(cls, gamma: np.ndarray) -> "MajoranaCovariance":
        return cls(tuple(range(len(gamma))), gamma)

    @property
    def n_majorana(self) -> int:
        return len(self.modes)

    def index_of(self, modes: Sequence[int]) -> np.ndarray:
        pos = {m: i for i, m in enumerate(self.modes)}
        try:
            return np.array([pos[m] for m in modes], dtype=int)
        except KeyError as exc:
            raise GaussianError("unknown-mode", str(exc)) from None

    def purity_error(self) -> float:
        g = self.gamma
        return float(np.max(np.abs(g @ g + np.eye(len(g))))) if g.size else 0.0


@dataclass(frozen=True)
class QuadraticForm:
    """``(i/4) gamma^T H gamma + offset`` over the listed Majorana ids."""

    modes: tuple[int, ...]
    coefficient: np.ndarray = field(repr=False)
    scalar_offset: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.coefficient, dtype=float).reshape(len(self.modes), len(self.modes))
        if h.size and np.max(np.abs(h + h.T)) > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise GaussianError("not-antisymmetric")
        object.__setattr__(self, "coefficient", 0.5 * (h - h.T))
        object.__setattr__(self, "modes", tuple(int(i) for i in self.modes))

    @classmethod
    def identity(cls, scale: float = 1.0) -> "QuadraticForm":
        return cls((), np.zeros((0, 0)), float(scale))

    def embed(self, modes: Sequence[int]) -> np.ndarray:
        """Coefficient zero-padded onto ``modes`` (must contain ``self.modes``)."""
        pos = {m: i for i, m in enumerate(modes)}
        try:
            idx = np.array([pos[m] for m in self.modes], dtype=int)
        except KeyError as exc:
            raise GaussianError("embedding-mismatch", str(exc)) from None
        out = np.zeros((len(modes), len(modes)))
        if len(idx):
            out[np.ix_(idx, idx)] = self.coefficient
        return out


@dataclass(frozen=True)
class BdGModel:
    """p+ip superconductor on an open square lattice."""

    lattice: Lattice
    t: float = 1.0
    delta: float = 1.0
    mu: float = 1.3
    vector_potential: tuple[float, float] = (0.0, np.pi / 2)


# ---------------------------------------------------------------------------
# Canonical form


def canonical_form(gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real Schur canonical form of an antisymmetric matrix.

    Returns
    -------
    Z : ndarray
        Orthogonal matrix with ``gamma = Z @ T @ Z.T``.
    a : ndarray
        Block values; block ``k`` of ``T`` is ``[[0, a_k], [-a_k, 0]]`` on
        columns ``(2k, 2k + 1)`` of ``Z``.
    """
    n = len(gamma)
    if n == 0:
        return np.zeros((0, 0)), np.zeros(0)
    T, Z = sla.schur(gamma, output="real")
    scale = max(1.0, float(np.max(np.abs(T))))
    cols: list[int] = []
    vals: list[float] = []
    zeros: list[int] = []
    k = 0
    while k < n:
        if k + 1 < n and abs(T[k + 1, k]) > 1e-14 * scale:
            cols += [k, k + 1]
            vals.append(0.5 * (T[k, k + 1] - T[k + 1, k]))
            k += 2
        else:
            zeros.append(k)
            k += 1
    # unpaired zero eigenvalues; an antisymmetric matrix of even size has an even count
    for i in range(0, len(zeros) - 1, 2):
        cols += [zeros[i], zeros[i + 1]]
        vals.append(0.0)
    if len(zeros) % 2:
        raise GaussianError("odd-mode-count", "antisymmetric matrix of odd size")
    return Z[:, cols], np.asarray(vals)


def canonical_values(gamma: np.ndarray) -> np.ndarray:
    """Singular values ``nu`` of the canonical blocks (one per complex mode)."""
    return np.abs(canonical_form(gamma)[1])


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    from scipy.special import xlogy

    return -xlogy(p, p) - xlogy(1 - p, 1 - p)


# ---------------------------------------------------------------------------
# States


def bdg_majorana_matrix(model: BdGModel) -> np.ndarray:
    """Real antisymmetric ``A`` with ``H = (i/4) gamma^T A gamma + const``."""
    lat = model.lattice
    n = lat.n_sites
    h = np.zeros((n, n), dtype=complex)
    D = np.zeros((n, n), dtype=complex)
    ax, ay = model.vector_potential
    for r, r2, (dx, dy) in lat.bonds():
        h[r, r2] += -model.t
        h[r2, r] += -model.t
        phase = np.exp(1j * (dx * ax + dy * ay))
        D[r, r2] += model.delta * phase
        D[r2, r] -= model.delta * phase
    h[np.diag_indices(n)] += -(model.mu - 4 * model.t)
    # a_j = sum_k T[j, k] gamma_k
    T = np.zeros((n, 2 * n), dtype=complex)
    T[np.arange(n), 2 * np.arange(n)] = 0.5
    T[np.arange(n), 2 * np.arange(n) + 1] = 0.5j
    M = T.conj().T @ h @ T
    P = 0.5 * T.conj().T @ D @ T.conj()
    M = M + P + P.conj().T
    A = -4j * 0.5 * (M - M.T)
    if np.max(np.abs(A.imag)) > 1e-12:
        raise GaussianError("non-hermitian-model")
    return A.real


def ground_state_covariance_from_matrix(A: np.ndarray, modes=None) -> MajoranaCovariance:
    """Ground state of ``H = (i/4) gamma^T A gamma``."""
    lam, U = np.linalg.eigh(1j * A)
    if np.min(np.abs(lam)) < 1e-10:
        raise GaussianError("degenerate-ground-state", f"min |eps| = {np.min(np.abs(lam)):.3e}")
    G = 1j * (U * np.sign(lam)) @ U.conj().T
    if modes is None:
        modes = tuple(range(len(A)))
    return MajoranaCovariance(tuple(modes), G.real)


def ground_state_covariance(model: BdGModel) -> MajoranaCovariance:
    """Covariance of the unique ground state of the p+ip Hamiltonian.

    All negative-energy Bogoliubov modes are filled.  A Bogoliubov energy
    within 1e-10 of zero raises ``degenerate-ground-state``.
    """
    return ground_state_covariance_from_matrix(bdg_majorana_matrix(model))


def random_pure_covariance(n_modes: int, rng: np.random.Generator) -> MajoranaCovariance:
    """Haar-random pure Gaussian state on ``n_modes`` complex fermions."""
    from scipy.stats import ortho_group

    if n_modes == 0:
        return MajoranaCovariance((), np.zeros((0, 0)))
    g0 = np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    O = ortho_group.rvs(2 * n_modes, random_state=rng)
    return MajoranaCovariance.from_matrix(O @ g0 @ O.T)


def product_covariance(occupations: Sequence[int]) -> MajoranaCovariance:
    """Fock product state; occupied modes have ``Gamma_{2j,2j+1} = +1``."""
    n = len(occupations)
    g = np.zeros((2 * n, 2 * n))
    for j, occ in enumerate(occupations):
        v = 1.0 if occ else -1.0
        g[2 * j, 2 * j + 1] = v
        g[2 * j + 1, 2 * j] = -v
    return MajoranaCovariance.from_matrix(g)


def correlation_length(
    cov: MajoranaCovariance, lattice: Lattice, d_min: int = 3, d_max: int = 12
) -> float:
    """Decay length of covariance blocks along the central row.

    Fits ``log ||Gamma_{r, r + d x}|| = a - d / xi - (1/2) log d`` (the
    two-dimensional Ornstein-Zernike form) for ``d_min <= d <= d_max``,
    starting a quarter of the way in from the left edge.
    """
    y = lattice.height // 2
    x0 = lattice.width // 4
    d_max = min(d_max, lattice.width - x0 - 3)
    ds, logs = [], []
    for d in range(d_min, d_max + 1):
        i = site_modes([lattice.index(x0, y)])
        j = site_modes([lattice.index(x0 + d, y)])
        val = np.linalg.norm(cov.gamma[np.ix_(cov.index_of(i), cov.index_of(j))])
        if val < 1e-13:
            break
        ds.append(d)
        logs.append(np.log(val) + 0.5 * np.log(d))
    if len(ds) < 3:
        raise GaussianError("fit-failed", "too few nonzero correlations")
    slope = np.polyfit(ds, logs, 1)[0]
    return float(-1.0 / slope)


# ---------------------------------------------------------------------------
# Reduced states, entropies and modular generators


def reduce_modes(state: MajoranaCovariance, modes: Sequence[int]) -> MajoranaCovariance:
    idx = state.index_of(modes)
    return MajoranaCovariance(tuple(modes), state.gamma[np.ix_(idx, idx)])


def reduce_covariance(state: MajoranaCovariance, region: Region) -> MajoranaCovariance:
    """Principal submatrix on the Majorana modes of ``region``'s sites."""
    return reduce_modes(state, site_modes(region.sites))


def gaussian_entropy(cov: MajoranaCovariance) -> float:
    """Von Neumann entropy in nats, ``sum h((1 + nu) / 2)``."""
    if cov.n_majorana == 0:
        return 0.0
    nu = canonical_values(cov.gamma)
    if np.max(nu) > 1 + 1e-8:
        raise GaussianError("spectrum-out-of-range", f"nu = {np.max(nu)}")
    nu = np.clip(nu, 0.0, 1.0)
    return float(np.sum(_binary_entropy((1 + nu) / 2)))


def modular_generator(cov: MajoranaCovariance, eps_ker: float = EPS_KER) -> QuadraticForm:
    """``K = -ln rho`` as a quadratic form, with the kernel convention.

    Modes with ``nu >= 1 - eps_ker`` get weight 0 and contribute nothing to
    the offset, so ``Tr e^{-K} = 1`` holds on the support of ``rho``.
    """
    if cov.n_majorana == 0:
        return QuadraticForm((), np.zeros((0, 0)), 0.0)
    Z, a = canonical_form(cov.gamma)
    nu = np.abs(a)
    keep = nu < 1 - eps_ker
    w = np.zeros_like(a)
    # Gamma block a = -tanh(w / 2)
    w[keep] = -2 * np.arctanh(a[keep])
    n = len(a)
    W = np.zeros((2 * n, 2 * n))
    W[2 * np.arange(n), 2 * np.arange(n) + 1] = w
    W[2 * np.arange(n) + 1, 2 * np.arange(n)] = -w
    H = Z @ W @ Z.T
    offset = float(np.sum(np.logaddexp(w[keep] / 2, -w[keep] / 2)))
    return QuadraticForm(cov.modes, H, offset)


def quad_moment(state: MajoranaCovariance, O1: QuadraticForm, O2: QuadraticForm) -> complex:
    """Exact ``<O1 O2>`` by Wick's theorem."""
    modes = list(dict.fromkeys(O1.modes + O2.modes))
    G = reduce_modes(state, modes).gamma if modes else np.zeros((0, 0))
    H1, H2 = O1.embed(modes), O2.embed(modes)
    m1 = -0.25 * np.sum(H1 * G.T) + O1.scalar_offset
    m2 = -0.25 * np.sum(H2 * G.T) + O2.scalar_offset
    if not modes:
        return complex(m1 * m2)
    I = np.eye(len(modes))
    cov = -0.125 * np.trace(H1 @ (I - 1j * G) @ H2 @ (I + 1j * G))
    return complex(cov + m1 * m2)


def quad_mean(state: MajoranaCovariance, O: QuadraticForm) -> float:
    return quad_moment(state, O, QuadraticForm.identity()).real


def _check_disjoint(*regions: Region) -> None:
    for i, p in enumerate(regions):
        for q in regions[i + 1:]:
            if not p.isdisjoint(q):
                raise GaussianError("region-overlap")


def gaussian_modular_commutator(
    state: MajoranaCovariance, A: Region, B: Region, C: Region, eps_ker: float = EPS_KER
) -> float:
    """``J(A,B,C) = i <[K_AB, K_BC]> = -2 Im <K_AB K_BC>``."""
    _check_disjoint(A, B, C)
    K1 = modular_generator(reduce_covariance(state, A | B), eps_ker)
    K2 = modular_generator(reduce_covariance(state, B | C), eps_ker)
    return _commutator_from_forms(state, K1, K2)


def _commutator_from_forms(state, K1: QuadraticForm, K2: QuadraticForm) -> float:
    # Im <K1 K2> = -(1/8) tr([H1, H2] Gamma), so J = (1/4) tr([H1, H2] Gamma)
    modes = list(dict.fromkeys(K1.modes + K2.modes))
    if not modes:
        return 0.0
    G = reduce_modes(state, modes).gamma
    H1, H2 = K1.embed(modes), K2.embed(modes)
    return float(0.25 * np.trace((H1 @ H2 - H2 @ H1) @ G))


# ---------------------------------------------------------------------------
# Backend


class GaussianBackend:
    """State backend for :mod:`conformal_ruler.ruler` over a Gaussian state.

    Modular generators are cached per region.
    """

    supports_moments = True
    name = "gaussian"

    def __init__(self, state: MajoranaCovariance, eps_ker: float = EPS_KER):
        self.state = state
        self.eps_ker = eps_ker
        self._entropy: dict[tuple[int, ...], float] = {}
        self._forms: dict[tuple[int, ...], QuadraticForm] = {}

    def entropy(self, region: Region) -> float:
        key = region.sites
        if key not in self._entropy:
            self._entropy[key] = gaussian_entropy(reduce_covariance(self.state, region))
        return self._entropy[key]

    def modular_form(self, region: Region) -> QuadraticForm:
        key = region.sites
        if key not in self._forms:
            self._forms[key] = modular_generator(reduce_covariance(self.state, region), self.eps_ker)
        return self._forms[key]

    def combo_form(self, combo) -> QuadraticForm:
        """Weighted sum of modular generators as a single quadratic form."""
        modes: list[int] = []
        for region, _ in combo.terms:
            modes += site_modes(region.sites)
        modes = sorted(set(modes))
        H = np.zeros((len(modes), len(modes)))
        offset = 0.0
        for region, w in combo.terms:
            K = self.modular_form(region)
            H += w * K.embed(modes)
            offset += w * K.scalar_offset
        return QuadraticForm(tuple(modes), H, offset)

    def modular_combo_moment(self, combo1, combo2) -> complex:
        return quad_moment(self.state, self.combo_form(combo1), self.combo_form(combo2))

    def modular_combo_mean(self, combo) -> float:
        return quad_mean(self.state, self.combo_form(combo))

    def combo_variance(self, combo) -> float:
        O = self.combo_form(combo)
        if not O.modes:
            return 0.0
        G = reduce_modes(self.state, O.modes).gamma
        I = np.eye(len(O.modes))
        H = O.coefficient
        return float((-0.125 * np.trace(H @ (I - 1j * G) @ H @ (I + 1j * G))).real)

    def modular_commutator(self, A: Region, B: Region, C: Region) -> float:
        _check_disjoint(A, B, C)
        return _commutator_from_forms(self.state, self.modular_form(A | B), self.modular_form(B | C))


# ---------------------------------------------------------------------------
# Dumps


def save_covariance(cov: MajoranaCovariance, path: str | Path, fmt: str | None = None) -> None:
    """Write a row-major dump; CSV has a ``# modes=n`` header, binary an int64 count."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "bin")
    if fmt == "csv":
        header = f"modes={cov.n_majorana}\n" + ",".join(str(m) for m in cov.modes)
        np.savetxt(path, cov.gamma, delimiter=",", fmt="%.17g", header=header)
    else:
        with open(path, "wb") as fh:
            np.array([cov.n_majorana], dtype="<i8").tofile(fh)
            np.asarray(cov.modes, dtype="<i8").tofile(fh)
            np.ascontiguousarray(cov.gamma, dtype="<f8").tofile(fh)


def load_covariance(path: str | Path, fmt: str | None = None) -> MajoranaCovariance:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "bin")
    if fmt == "csv":
        with open(path) as fh:
            fh.readline()
            modes = tuple(int(m) for m in fh.readline().lstrip("# ").strip().split(",") if m)
        g = np.loadtxt(path, delimiter=",", ndmin=2).reshape(len(modes), len(modes))
        return MajoranaCovariance(modes, g)
    raw = np.fromfile(path, dtype="<i8", count=1)
    n = int(raw[0])
    with open(path, "rb") as fh:
        fh.seek(8)
        modes = tuple(np.fromfile(fh, dtype="<i8", count=n).tolist())
        g = np.fromfile(fh, dtype="<f8", count=n * n).reshape(n, n)
    return MajoranaCovariance(modes, g)
