import numpy as np
import pytest

from conformal_ruler.edoracle import (
    DenseBackend,
    DenseOperator,
    DenseState,
    OracleError,
    covariance_from_statevector,
    dense_combo_variance,
    dense_entropy,
    dense_modular_commutator,
    dense_modular_hamiltonian,
    pairstate_subsystems,
    reduced_density,
    statevector_from_gaussian,
    statevector_from_pairstate,
)
from conformal_ruler.gaussian import MajoranaCovariance, product_covariance, random_pure_covariance
from conformal_ruler.lattice import Region
from conformal_ruler.pairstates import PairState, PairStateBackend, interval_entropy, solve_exotic_weights
from conformal_ruler.ruler import ModularCombo, kd_combo, ruler_1d


def bell(p: float) -> DenseState:
    return DenseState(np.array([np.sqrt(p), 0, 0, np.sqrt(1 - p)]))


def random_state(rng, n: int) -> DenseState:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return DenseState(v / np.linalg.norm(v))


def test_reduced_density_examples(rng):
    psi = random_state(rng, 3)
    full = reduced_density(psi, [0, 1, 2]).matrix
    assert np.allclose(full, np.outer(psi.amplitudes, psi.amplitudes.conj()))
    assert np.linalg.matrix_rank(full, tol=1e-10) == 1
    assert reduced_density(psi, []).matrix == pytest.approx(np.ones((1, 1)))
    assert np.allclose(reduced_density(bell(0.3), [0]).matrix, np.diag([0.3, 0.7]))


def test_reduced_density_unknown_subsystem(rng):
    with pytest.raises(OracleError) as e:
        reduced_density(random_state(rng, 2), [2])
    assert e.value.kind == "unknown-subsystem"


def test_modular_hamiltonian_examples():
    K = dense_modular_hamiltonian(DenseOperator((0,), np.eye(2) / 2)).matrix
    assert np.allclose(K, np.log(2) * np.eye(2))
    pure = DenseOperator((0,), np.diag([1.0, 0.0]))
    assert np.allclose(dense_modular_hamiltonian(pure).matrix, 0)
    K = dense_modular_hamiltonian(DenseOperator((0,), np.diag([0.2, 0.8]))).matrix
    assert np.allclose(K, np.diag([-np.log(0.2), -np.log(0.8)]))


def test_commutator_product_state():
    psi = DenseState(np.eye(16)[5])
    assert dense_modular_commutator(psi, [0], [1, 2], [3]) == 0.0


def test_commutator_antisymmetry(rng):
    psi = random_state(rng, 5)
    j = dense_modular_commutator(psi, [0], [1, 2], [3, 4])
    assert abs(j + dense_modular_commutator(psi, [3, 4], [1, 2], [0])) < 1e-10
    with pytest.raises(OracleError):
        dense_modular_commutator(psi, [0, 1], [1], [2])


def test_gaussian_statevector_vacuum():
    psi = statevector_from_gaussian(product_covariance([0, 0, 0]))
    assert abs(psi.amplitudes[0]) == pytest.approx(1.0)
    psi = statevector_from_gaussian(product_covariance([1, 0, 1]))
    assert abs(psi.amplitudes[0b101]) == pytest.approx(1.0)


def test_gaussian_statevector_rejects_mixed():
    with pytest.raises(OracleError) as e:
        statevector_from_gaussian(MajoranaCovariance.from_matrix(np.zeros((2, 2))))
    assert e.value.kind == "impure-input"


def test_gaussian_statevector_too_large(rng):
    with pytest.raises(OracleError) as e:
        statevector_from_gaussian(random_pure_covariance(11, rng))
    assert e.value.kind == "too-large"


def test_gaussian_roundtrip(rng):
    cov = random_pure_covariance(6, rng)
    back = covariance_from_statevector(statevector_from_gaussian(cov))
    assert np.max(np.abs(back.gamma - cov.gamma)) < 1e-10


def test_fermionic_reordering_entropy(rng):
    # non-contiguous mode subsets need the Jordan-Wigner sign fix
    cov = random_pure_covariance(5, rng)
    psi = statevector_from_gaussian(cov)
    from conformal_ruler.gaussian import GaussianBackend

    g = GaussianBackend(cov)
    for R in ([0, 2], [4, 1], [3, 0, 2]):
        assert dense_entropy(psi, R) == pytest.approx(g.entropy(Region.of(R)), abs=1e-10)


def test_pairstate_bell_entropy():
    state = PairState.uniform(2, 0.5)
    psi = statevector_from_pairstate(state)
    assert psi.n == 12
    assert dense_entropy(psi, [0]) == pytest.approx(np.log(2), abs=1e-12)


def test_pairstate_site_entropies():
    state = PairState.from_weights(solve_exotic_weights(2, 0.2, 0.9))
    psi = statevector_from_pairstate(state)
    f = pairstate_subsystems(state)
    for sites in ([0], [1, 2], [3, 0], [0, 1, 2]):
        assert dense_entropy(psi, f(Region.of(sites))) == pytest.approx(
            interval_entropy(state, sites), abs=1e-10
        )


def test_pairstate_too_large():
    with pytest.raises(OracleError) as e:
        statevector_from_pairstate(PairState.uniform(3))
    assert e.value.kind == "too-large"


def test_combo_variance_examples(rng):
    psi = random_state(rng, 4)
    assert dense_combo_variance(psi, ModularCombo(())) == 0.0
    # a product state is an eigenvector of every modular Hamiltonian
    prod = DenseState(np.eye(16)[3])
    combo = ModularCombo(((Region((0, 1)), 1.0), (Region((2,)), -0.5)))
    assert abs(dense_combo_variance(prod, combo)) < 1e-14


def test_pairstate_variance_matches_exact():
    state = PairState.from_weights(solve_exotic_weights(2, 0.2, 0.9))
    dense = DenseBackend(statevector_from_pairstate(state), pairstate_subsystems(state))
    exact = PairStateBackend(state)
    r = ruler_1d(Region((0,)), Region((1,)), Region((2,)))
    for x in (0.0, 0.25, 0.5, 1.0):
        c = kd_combo(r, x)
        assert dense.combo_variance(c) == pytest.approx(exact.combo_variance(c), abs=1e-10)
        assert dense.modular_combo_mean(c) == pytest.approx(exact.modular_combo_mean(c), abs=1e-10)
