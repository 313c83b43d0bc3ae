"""Dense brute-force oracle for small systems.

States are complex vectors on ``n`` two-level subsystems, subsystem 0 being
the most significant tensor factor.  A fermionic state is a Jordan-Wigner
image: subsystem ``j`` is complex mode ``j``, ``|1>`` is occupied and the
Majoranas are ``gamma_{2j} = Z_{<j} X_j`` and ``gamma_{2j+1} = Z_{<j} Y_j``.
Reduced states of fermionic mode subsets are taken after a signed
reordering that brings the subset to the front, so they are the genuine
fermionic reduced density matrices.

Modular Hamiltonians use the kernel convention: ``-ln`` on eigenvalues
``>= eps_ker`` and 0 elsewhere.  Moments never build full-space operators;
``K_R`` is applied to the state vector after reshaping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .gaussian import EPS_KER, MajoranaCovariance

MAX_SUBSYSTEMS = 20
MAX_FERMION_MODES = 10


class OracleError(ValueError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


@dataclass(frozen=True)
class DenseState:
    """Normalized state vector on ``n`` qubits (or Jordan-Wigner modes)."""

    amplitudes: np.ndarray = field(repr=False)
    fermionic: bool = False

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex).ravel()
        n = int(round(np.log2(len(psi)))) if len(psi) else -1
        if n < 0 or 2**n != len(psi):
            raise OracleError("bad-dimension", f"length {len(psi)} is not a power of 2")
        if n > MAX_SUBSYSTEMS:
            raise OracleError("too-large", f"{n} subsystems")
        if abs(np.linalg.norm(psi) - 1) > 1e-12:
            raise OracleError("not-normalized", f"norm {np.linalg.norm(psi)}")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    @property
    def n(self) -> int:
        return int(round(np.log2(len(self.amplitudes))))

    @property
    def dims(self) -> list[int]:
        return [2] * self.n


@dataclass(frozen=True)
class DenseOperator:
    support: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)
    hermitian: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if self.hermitian and m.size and np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise OracleError("not-hermitian")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "support", tuple(self.support))


# ---------------------------------------------------------------------------
# Jordan-Wigner Majoranas


_X = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
_Y = sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex))
_Z = sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex))
_I = sp.identity(2, dtype=complex, format="csr")


def majorana_operators(n_modes: int) -> list[sp.csr_matrix]:
    """Sparse Jordan-Wigner Majoranas ``gamma_0 .. gamma_{2n-1}``."""
    ops = []
    for j in range(n_modes):
        for P in (_X, _Y):
            factors = [_Z] * j + [P] + [_I] * (n_modes - j - 1)
            op = sp.csr_matrix(np.ones((1, 1), dtype=complex))
            for f in factors:
                op = sp.kron(op, f, format="csr")
            ops.append(op)
    return ops


def statevector_from_gaussian(cov: MajoranaCovariance, tol: float = 1e-8) -> DenseState:
    """Dense ground state of ``-(i/4) gamma^T Gamma gamma`` (pure input only)."""
    nm = cov.n_majorana // 2
    if nm > MAX_FERMION_MODES:
        raise OracleError("too-large", f"{nm} modes > {MAX_FERMION_MODES}")
    if cov.purity_error() > tol:
        raise OracleError("impure-input", f"|Gamma^2 + 1| = {cov.purity_error():.2e}")
    if nm == 0:
        return DenseState(np.ones(1), fermionic=True)
    g = majorana_operators(nm)
    G = cov.gamma
    H = sp.csr_matrix((2**nm, 2**nm), dtype=complex)
    for k in range(2 * nm):
        for l in range(k + 1, 2 * nm):
            if G[k, l] != 0:
                H = H + (-0.5j * G[k, l]) * (g[k] @ g[l])
    w, v = np.linalg.eigh(H.toarray())
    psi = v[:, 0]
    # fix the global phase for reproducibility
    i = int(np.argmax(np.abs(psi)))
    psi = psi * np.exp(-1j * np.angle(psi[i]))
    return DenseState(psi / np.linalg.norm(psi), fermionic=True)


def covariance_from_statevector(state: DenseState) -> MajoranaCovariance:
    """``Gamma_kl = i <gamma_k gamma_l>`` for ``k != l``."""
    nm = state.n
    g = majorana_operators(nm)
    psi = state.amplitudes
    gpsi = [op @ psi for op in g]
    G = np.zeros((2 * nm, 2 * nm))
    for k in range(2 * nm):
        for l in range(k + 1, 2 * nm):
            val = 1j * np.vdot(gpsi[k], gpsi[l])
            G[k, l] = val.real
            G[l, k] = -val.real
    return MajoranaCovariance.from_matrix(G)


# ---------------------------------------------------------------------------
# Reduced states


def _check_region(state: DenseState, region: Sequence[int]) -> list[int]:
    region = [int(r) for r in region]
    if len(set(region)) != len(region):
        raise OracleError("region-overlap", f"repeated subsystem in {region}")
    for r in region:
        if not 0 <= r < state.n:
            raise OracleError("unknown-subsystem", str(r))
    return region


def _reorder_signs(n: int, order: Sequence[int]) -> np.ndarray:
    """Fermionic sign of each basis state when modes are reordered to ``order``."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    parity = np.zeros(2**n, dtype=np.int64)
    for p in range(n):
        for q in range(p + 1, n):
            if order[p] > order[q]:
                parity += bits[:, order[p]] * bits[:, order[q]]
    return np.where(parity % 2, -1.0, 1.0)


def _front_matrix(state: DenseState, region: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """State as a ``(2^|R|, 2^rest)`` matrix with ``region`` moved to the front."""
    n = state.n
    rest = [j for j in range(n) if j not in set(region)]
    order = list(region) + rest
    psi = state.amplitudes
    if state.fermionic:
        psi = psi * _reorder_signs(n, order)
    t = psi.reshape((2,) * n).transpose(order) if n else psi
    return t.reshape(2 ** len(region), -1), order


def _from_front(mat: np.ndarray, order: list[int], fermionic: bool) -> np.ndarray:
    n = len(order)
    t = mat.reshape((2,) * n).transpose(np.argsort(order)).ravel() if n else mat.ravel()
    if fermionic:
        t = t * _reorder_signs(n, order)
    return t


def reduced_density(state: DenseState, region: Sequence[int]) -> DenseOperator:
    """Reduced density matrix on ``region`` (in the listed order)."""
    region = _check_region(state, region)
    M, _ = _front_matrix(state, region)
    rho = M @ M.conj().T
    return DenseOperator(tuple(region), 0.5 * (rho + rho.conj().T))


def dense_entropy(state: DenseState, region: Sequence[int]) -> float:
    lam = np.linalg.eigvalsh(reduced_density(state, region).matrix)
    lam = lam[lam > 1e-300]
    return float(-np.sum(lam * np.log(lam)))


def dense_modular_hamiltonian(rho: DenseOperator, eps_ker: float = EPS_KER) -> DenseOperator:
    """``-ln rho`` on eigenvalues ``>= eps_ker`` and 0 on the rest."""
    lam, U = np.linalg.eigh(rho.matrix)
    w = np.zeros_like(lam)
    keep = lam >= eps_ker
    w[keep] = -np.log(lam[keep])
    return DenseOperator(rho.support, (U * w) @ U.conj().T)


def apply_modular(state: DenseState, region: Sequence[int], eps_ker: float = EPS_KER) -> np.ndarray:
    """``(K_R (x) 1) |psi>`` in the original basis."""
    region = _check_region(state, region)
    M, order = _front_matrix(state, region)
    K = dense_modular_hamiltonian(DenseOperator(tuple(region), M @ M.conj().T, hermitian=False), eps_ker)
    return _from_front(K.matrix @ M, order, state.fermionic)


def dense_modular_commutator(
    state: DenseState, A: Sequence[int], B: Sequence[int], C: Sequence[int], eps_ker: float = EPS_KER
) -> float:
    """``i <[K_AB, K_BC]>``, returned as a real number."""
    sets = [set(A), set(B), set(C)]
    if sets[0] & sets[1] or sets[1] & sets[2] or sets[0] & sets[2]:
        raise OracleError("region-overlap")
    v1 = apply_modular(state, list(A) + list(B), eps_ker)
    v2 = apply_modular(state, list(B) + list(C), eps_ker)
    return float(-2 * np.vdot(v1, v2).imag)


def _combo_vector(state, combo, to_subsystems, eps_ker, cache=None) -> np.ndarray:
    out = np.zeros_like(state.amplitudes)
    for region, w in combo.terms:
        key = tuple(region.sites)
        if cache is not None and key in cache:
            v = cache[key]
        else:
            v = apply_modular(state, to_subsystems(region), eps_ker)
            if cache is not None:
                cache[key] = v
        out = out + w * v
    return out


def _identity_map(region) -> list[int]:
    return list(region.sites)


def dense_combo_variance(
    state: DenseState,
    combo,
    to_subsystems: Callable = _identity_map,
    eps_ker: float = EPS_KER,
) -> float:
    """``<O^2> - <O>^2`` for ``O = sum_a w_a K_a``."""
    v = _combo_vector(state, combo, to_subsystems, eps_ker)
    mean = np.vdot(state.amplitudes, v).real
    return float(np.vdot(v, v).real - mean**2)


class DenseBackend:
    """State backend over a dense vector.

    ``to_subsystems`` maps a site :class:`Region` onto subsystem indices; for
    Jordan-Wigner states a site is one mode, for pair states a site owns
    several qubits.
    """

    supports_moments = True
    name = "dense"

    def __init__(self, state: DenseState, to_subsystems: Callable = _identity_map, eps_ker: float = EPS_KER):
        self.state = state
        self.to_subsystems = to_subsystems
        self.eps_ker = eps_ker
        self._vec: dict = {}

    def entropy(self, region) -> float:
        return dense_entropy(self.state, self.to_subsystems(region))

    def _combo(self, combo) -> np.ndarray:
        return _combo_vector(self.state, combo, self.to_subsystems, self.eps_ker, self._vec)

    def modular_combo_moment(self, combo1, combo2) -> complex:
        return complex(np.vdot(self._combo(combo1), self._combo(combo2)))

    def modular_combo_mean(self, combo) -> float:
        return float(np.vdot(self.state.amplitudes, self._combo(combo)).real)

    def combo_variance(self, combo) -> float:
        v = self._combo(combo)
        mean = np.vdot(self.state.amplitudes, v).real
        return float(np.vdot(v, v).real - mean**2)

    def modular_commutator(self, A, B, C) -> float:
        f = self.to_subsystems
        return dense_modular_commutator(self.state, f(A), f(B), f(C), self.eps_ker)


def statevector_from_pairstate(state) -> DenseState:
    """Tensor product of the bond pairs of a :class:`PairState`."""
    layout = state.layout
    n = layout.n_qubits
    if n > MAX_SUBSYSTEMS:
        raise OracleError("too-large", f"{n} qubits > {MAX_SUBSYSTEMS}")
    psi = np.zeros(2**n, dtype=complex)
    p = state.bond_p()
    nb = len(layout.bonds)
    for config in range(2**nb):
        idx = 0
        amp = 1.0
        for b, (qa, qb, _) in enumerate(layout.bonds):
            if (config >> b) & 1:
                idx |= (1 << (n - 1 - qa)) | (1 << (n - 1 - qb))
                amp *= np.sqrt(1 - p[b])
            else:
                amp *= np.sqrt(p[b])
        psi[idx] = amp
    return DenseState(psi / np.linalg.norm(psi), fermionic=False)


def pairstate_subsystems(state) -> Callable:
    """Map site regions of a pair state onto its qubit indices."""
    return lambda region: state.layout.qubits(region.sites)
